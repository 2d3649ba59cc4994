#pragma once

#include <string>
#include <string_view>

#include "minmask/mask_problem.hpp"
#include "minmask/solver.hpp"

namespace minmask {

/// SMT-LIB v2 rendering of a real: the value rounded to 17 significant
/// digits in positional notation, trailing fractional zeros removed (one
/// is kept), negatives as (- x).
std::string smt_decimal(double value);

/// Deterministic SMT-LIB v2 document: 0/1-bounded Int per mask variable, one
/// strict assertion per constraint, a minimize objective over the variable
/// sum, then check-sat / get-objectives / get-model.
std::string emit_smtlib(const MaskProblem& problem);

/// Reads back a linear document produced by emit_smtlib (variables lose
/// their coverage information).
MaskProblem parse_smtlib_problem(std::string_view text);

/// Parses an OMT solver response ("sat" / "unsat" / "unknown", optional
/// objectives block and model) against `problem`. Variables missing from
/// the model are taken as 0; names not in the problem are an error.
MaskSolution parse_solver_output(std::string_view text, const MaskProblem& problem);

}  // namespace minmask
