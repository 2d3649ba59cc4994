#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "minmask/attribution.hpp"
#include "minmask/network.hpp"
#include "minmask/tensor.hpp"

namespace minmask {

/// Realization of the strict "> 0" used when solving in floating point:
/// a constraint holds when its left-hand side is at least this value.
inline constexpr double kStrictEpsilon = 1e-9;

/// Coefficients smaller than this in magnitude are dropped from constraints.
inline constexpr double kCoefficientCutoff = 1e-12;

inline constexpr std::size_t kDefaultGridSize = 4;      // images: 4 x 4 pixel cells
inline constexpr std::size_t kDefaultTextGridSize = 1;  // sequences: one cell per token
inline constexpr std::size_t kDefaultImageK = 3000;
inline constexpr std::size_t kDefaultTextK = 100;
inline constexpr double kDefaultGamma = 0.0;

/// How the input coordinates are grouped into mask cells:
/// rank 3 (H x W x C) images use g x g pixel cells spanning all channels,
/// rank 2 (L x D) sequences use runs of g tokens spanning all embedding dims,
/// rank 1 vectors use runs of g entries.
enum class InputLayout { Image, Sequence, Flat };

InputLayout layout_of(const Shape& input_shape);

struct GridCell {
  std::size_t row = 0;  // first pixel row / token / entry covered
  std::size_t col = 0;  // first pixel column (0 for sequences and vectors)
  std::vector<std::size_t> coords;  // flat input indices, ascending
};

/// Cells in row-major order. Border cells may cover fewer coordinates.
std::vector<GridCell> grid_cells(const Shape& input_shape, std::size_t grid_size);

struct MaskVariable {
  std::size_t id = 0;
  std::size_t cell = 0;  // index into grid_cells()
  std::size_t row = 0;
  std::size_t col = 0;
  std::vector<std::size_t> coords;
};

struct LinearTerm {
  std::size_t var = 0;
  double coef = 0.0;
};

/// sum(coef * M_var) + constant > 0
struct LinearConstraint {
  std::vector<LinearTerm> terms;  // ascending var, each var at most once
  double constant = 0.0;
  std::optional<std::size_t> neuron;  // first-layer neuron the constraint guards
};

/// Whole-network argmax-preservation problem. Not linear in the mask bits;
/// only brute-force enumeration or an external solver can decide it.
struct FullEncoding {
  Network logits;  // network with a trailing softmax/sigmoid removed
  Tensor input;
  std::size_t label = 0;
  std::size_t first_affine = 0;  // index of the first affine layer in `logits`
  /// Pre-activation of each first-layer neuron as an affine form in the mask bits.
  std::vector<LinearConstraint> first_layer;
};

struct MaskProblem {
  Shape input_shape;
  std::size_t grid_size = 1;
  double gamma = 0.0;
  std::vector<MaskVariable> variables;
  std::vector<LinearConstraint> constraints;
  std::vector<std::size_t> neuron_ids;          // D^k, in selection order
  std::vector<double> original_activations;     // o_i for each selected neuron
  std::optional<FullEncoding> full;

  bool is_linear() const noexcept { return !full.has_value(); }
  std::size_t variable_count() const noexcept { return variables.size(); }

  /// Throws InvalidArgument when a constraint references an undeclared
  /// variable, repeats one, or has a non-finite coefficient.
  void validate() const;
};

/// Partial encoding over the selected first-layer neurons: one constraint per
/// neuron i, sum_v c_{i,v} M_v + b_i - gamma * o_i > 0, with c_{i,v} the sum of
/// W1[i,p] * x[p] over the coordinates p of cell v. Cells that appear in no
/// constraint are left out (they are 0 in the final mask).
MaskProblem build_partial_encoding(const Network& net, const Tensor& x, const TopKSelection& selection, double gamma,
                                   std::size_t grid_size);

/// Whole-network encoding: minimal mask keeping `label` the strict argmax of
/// the logits. Accepts flatten* affine (relu dense)* [softmax|sigmoid].
MaskProblem build_full_encoding(const Network& net, const Tensor& x, std::size_t label, std::size_t grid_size);

/// sum(coef * M) + constant under a 0/1 assignment indexed by variable id.
double constraint_value(const LinearConstraint& c, std::span<const std::uint8_t> assignment);

/// Per-coordinate input mask for an assignment (variables omitted from the
/// problem stay 0).
std::vector<std::uint8_t> expand_to_input(const MaskProblem& problem, std::span<const std::uint8_t> assignment);

/// x with every coordinate outside the mask set to zero.
Tensor apply_mask(const Tensor& x, std::span<const std::uint8_t> input_mask);

}  // namespace minmask
