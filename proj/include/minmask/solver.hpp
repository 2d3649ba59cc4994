#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "minmask/mask_problem.hpp"

namespace minmask {

enum class SolveStatus { Sat, Unsat, Unknown };

std::string_view to_string(SolveStatus status) noexcept;

struct SolveStats {
  std::uint64_t nodes = 0;
  double wall_ms = 0.0;
  /// Best feasible assignment known when the budget ran out.
  std::optional<std::vector<std::uint8_t>> incumbent;
};

struct MaskSolution {
  SolveStatus status = SolveStatus::Unknown;
  std::vector<std::uint8_t> assignment;  // indexed by variable id; empty unless Sat
  std::optional<std::size_t> objective;  // number of set bits; present iff Sat
  SolveStats stats;
};

/// Exact minimum-cardinality assignment of a linear MaskProblem by
/// depth-first branch and bound. Among optima the lexicographically smallest
/// set of variable ids is returned. budget_ms == 0 means no limit; running
/// out of budget yields Unknown with the incumbent (if any) in stats.
/// Throws UnsupportedProblem for full (non-linear) encodings.
MaskSolution solve_min(const MaskProblem& problem, std::uint64_t budget_ms = 0);

/// Exhaustive search in cardinality-then-lexicographic order; same contract
/// as solve_min. Throws InvalidArgument above var_limit variables.
MaskSolution brute_force(const MaskProblem& problem, std::size_t var_limit = 24);

/// True iff every constraint holds (LHS >= kStrictEpsilon). For full
/// encodings the check is a forward pass of the masked input: the label
/// logit must be strictly larger than every other logit.
bool verify(const MaskProblem& problem, std::span<const std::uint8_t> assignment);

/// Solves a full encoding by enumerating assignments in cardinality-then-
/// lexicographic order and checking each with a real forward pass.
MaskSolution enumerate_full(const MaskProblem& problem, std::size_t var_limit = 24);

/// Hands the problem to an external solver. `command_template` is a shell
/// command in which "{file}" is replaced by the path of the emitted .smt2
/// document (appended when the placeholder is absent); stdout is parsed with
/// parse_solver_output().
MaskSolution solve_external(const MaskProblem& problem, const std::string& command_template);

}  // namespace minmask
