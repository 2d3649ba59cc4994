#include "minmask/mask_problem.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <string>

#include "minmask/errors.hpp"

namespace minmask {

InputLayout layout_of(const Shape& input_shape) {
  switch (input_shape.size()) {
    case 3:
      return InputLayout::Image;
    case 2:
      return InputLayout::Sequence;
    case 1:
      return InputLayout::Flat;
    default:
      throw ShapeError("mask inputs must have rank 1, 2 or 3, got " + to_string(input_shape));
  }
}

std::vector<GridCell> grid_cells(const Shape& input_shape, std::size_t grid_size) {
  if (grid_size == 0) throw InvalidArgument("grid size must be at least 1");
  std::vector<GridCell> cells;
  switch (layout_of(input_shape)) {
    case InputLayout::Image: {
      const std::size_t h = input_shape[0], w = input_shape[1], ch = input_shape[2];
      for (std::size_t r0 = 0; r0 < h; r0 += grid_size)
        for (std::size_t c0 = 0; c0 < w; c0 += grid_size) {
          GridCell cell{r0, c0, {}};
          for (std::size_t r = r0; r < std::min(h, r0 + grid_size); ++r)
            for (std::size_t c = c0; c < std::min(w, c0 + grid_size); ++c)
              for (std::size_t k = 0; k < ch; ++k) cell.coords.push_back((r * w + c) * ch + k);
          cells.push_back(std::move(cell));
        }
      break;
    }
    case InputLayout::Sequence:
    case InputLayout::Flat: {
      const std::size_t length = input_shape[0];
      const std::size_t inner = input_shape.size() == 2 ? input_shape[1] : 1;
      for (std::size_t t0 = 0; t0 < length; t0 += grid_size) {
        GridCell cell{t0, 0, {}};
        for (std::size_t t = t0; t < std::min(length, t0 + grid_size); ++t)
          for (std::size_t d = 0; d < inner; ++d) cell.coords.push_back(t * inner + d);
        cells.push_back(std::move(cell));
      }
      break;
    }
  }
  return cells;
}

void MaskProblem::validate() const {
  if (!(gamma >= 0.0 && gamma < 1.0)) throw InvalidArgument("gamma must lie in [0, 1)");
  for (std::size_t v = 0; v < variables.size(); ++v)
    if (variables[v].id != v) throw InvalidArgument("variable ids must be dense and ordered");
  for (std::size_t c = 0; c < constraints.size(); ++c) {
    std::vector<bool> seen(variables.size(), false);
    if (!std::isfinite(constraints[c].constant)) throw InvalidArgument("constraint " + std::to_string(c) + " constant is not finite");
    for (const LinearTerm& t : constraints[c].terms) {
      if (t.var >= variables.size())
        throw InvalidArgument("constraint " + std::to_string(c) + " references undeclared variable m_" + std::to_string(t.var));
      if (seen[t.var]) throw InvalidArgument("constraint " + std::to_string(c) + " repeats variable m_" + std::to_string(t.var));
      if (!std::isfinite(t.coef)) throw InvalidArgument("constraint " + std::to_string(c) + " has a non-finite coefficient");
      seen[t.var] = true;
    }
  }
}

namespace {

std::vector<std::size_t> cell_lookup(const std::vector<GridCell>& cells, std::size_t coord_count) {
  std::vector<std::size_t> cell_of(coord_count);
  for (std::size_t c = 0; c < cells.size(); ++c)
    for (std::size_t p : cells[c].coords) cell_of[p] = c;
  return cell_of;
}

/// Coefficient of each cell in the affine form of `neuron` at input x.
std::map<std::size_t, double> cell_coefficients(const AffineNeuron& neuron, const Tensor& x,
                                                const std::vector<std::size_t>& cell_of) {
  std::map<std::size_t, double> coef;
  for (const AffineTerm& t : neuron.terms)
    coef[cell_of[t.coord]] += static_cast<double>(t.weight) * static_cast<double>(x[t.coord]);
  return coef;
}

double activation_of(const AffineNeuron& neuron, const Tensor& x) {
  double acc = 0.0;
  for (const AffineTerm& t : neuron.terms) acc += static_cast<double>(t.weight) * static_cast<double>(x[t.coord]);
  return acc + static_cast<double>(neuron.bias);
}

MaskVariable variable_for(std::size_t id, std::size_t cell_index, const GridCell& cell) {
  return MaskVariable{id, cell_index, cell.row, cell.col, cell.coords};
}

}  // namespace

MaskProblem build_partial_encoding(const Network& net, const Tensor& x, const TopKSelection& selection, double gamma,
                                   std::size_t grid_size) {
  if (selection.empty())
    throw InvalidArgument("no neuron has a positive attribution; fall back to the unminimized (smug-base) mask");
  if (!(gamma >= 0.0 && gamma < 1.0)) throw InvalidArgument("gamma must lie in [0, 1)");
  const AffineMap affine = first_layer_affine(net, x.shape());
  const auto cells = grid_cells(x.shape(), grid_size);
  const auto cell_of = cell_lookup(cells, x.size());

  MaskProblem problem;
  problem.input_shape = x.shape();
  problem.grid_size = grid_size;
  problem.gamma = gamma;

  std::vector<std::map<std::size_t, double>> per_neuron;
  std::vector<bool> used(cells.size(), false);
  for (std::size_t neuron : selection.indices) {
    if (neuron >= affine.neurons.size())
      throw InvalidArgument("selected neuron " + std::to_string(neuron) + " is not a first-layer neuron");
    const AffineNeuron& n = affine.neurons[neuron];
    auto coef = cell_coefficients(n, x, cell_of);
    std::erase_if(coef, [](const auto& kv) { return std::fabs(kv.second) < kCoefficientCutoff; });
    for (const auto& [cell, c] : coef) used[cell] = true;
    const double o = activation_of(n, x);
    problem.neuron_ids.push_back(neuron);
    problem.original_activations.push_back(o);
    LinearConstraint constraint;
    constraint.constant = static_cast<double>(n.bias) - gamma * o;
    constraint.neuron = neuron;
    problem.constraints.push_back(std::move(constraint));
    per_neuron.push_back(std::move(coef));
  }

  std::vector<std::size_t> var_of(cells.size(), 0);
  for (std::size_t c = 0; c < cells.size(); ++c)
    if (used[c]) {
      var_of[c] = problem.variables.size();
      problem.variables.push_back(variable_for(problem.variables.size(), c, cells[c]));
    }
  for (std::size_t i = 0; i < per_neuron.size(); ++i)
    for (const auto& [cell, c] : per_neuron[i]) problem.constraints[i].terms.push_back({var_of[cell], c});
  return problem;
}

MaskProblem build_full_encoding(const Network& net, const Tensor& x, std::size_t label, std::size_t grid_size) {
  if (x.shape() != net.input_shape())
    throw ShapeError("input shape " + to_string(x.shape()) + " does not match network input " +
                     to_string(net.input_shape()));
  std::vector<Layer> layers = net.layers();
  if (std::holds_alternative<Softmax>(layers.back()) || std::holds_alternative<Sigmoid>(layers.back())) layers.pop_back();
  const std::size_t first = net.first_affine_index();
  if ((layers.size() - 1 - first) % 2 != 0)
    throw UnsupportedModel("full encoding needs a final dense logit layer after the last relu");
  for (std::size_t i = first + 1; i < layers.size(); ++i) {
    const bool expect_relu = (i - first) % 2 == 1;
    const bool ok = expect_relu ? std::holds_alternative<Relu>(layers[i]) : std::holds_alternative<Dense>(layers[i]);
    if (!ok)
      throw UnsupportedModel("full encoding supports only alternating relu/dense layers; layer " + std::to_string(i) +
                             " is " + std::string(layer_kind(layers[i])));
  }

  MaskProblem problem;
  problem.input_shape = x.shape();
  problem.grid_size = grid_size;
  const auto cells = grid_cells(x.shape(), grid_size);
  const auto cell_of = cell_lookup(cells, x.size());
  for (std::size_t c = 0; c < cells.size(); ++c) problem.variables.push_back(variable_for(c, c, cells[c]));

  Network logits(net.input_shape(), std::move(layers));
  if (label >= element_count(logits.output_shape()))
    throw InvalidArgument("label " + std::to_string(label) + " out of range for " + to_string(logits.output_shape()));
  const AffineMap affine = first_layer_affine(logits, x.shape());
  std::vector<LinearConstraint> first_layer;
  for (std::size_t i = 0; i < affine.neurons.size(); ++i) {
    LinearConstraint row;
    row.neuron = i;
    row.constant = affine.neurons[i].bias;
    for (const auto& [cell, c] : cell_coefficients(affine.neurons[i], x, cell_of))
      if (std::fabs(c) >= kCoefficientCutoff) row.terms.push_back({cell, c});
    first_layer.push_back(std::move(row));
  }
  problem.full = FullEncoding{std::move(logits), x, label, first, std::move(first_layer)};
  return problem;
}

double constraint_value(const LinearConstraint& c, std::span<const std::uint8_t> assignment) {
  double lhs = c.constant;
  for (const LinearTerm& t : c.terms)
    if (assignment[t.var]) lhs += t.coef;
  return lhs;
}

std::vector<std::uint8_t> expand_to_input(const MaskProblem& problem, std::span<const std::uint8_t> assignment) {
  if (assignment.size() != problem.variables.size())
    throw InvalidArgument("assignment has " + std::to_string(assignment.size()) + " entries, problem has " +
                          std::to_string(problem.variables.size()) + " variables");
  std::vector<std::uint8_t> mask(element_count(problem.input_shape), 0);
  for (const MaskVariable& v : problem.variables)
    if (assignment[v.id])
      for (std::size_t p : v.coords) mask[p] = 1;
  return mask;
}

Tensor apply_mask(const Tensor& x, std::span<const std::uint8_t> input_mask) {
  if (input_mask.size() != x.size()) throw ShapeError("mask size does not match input");
  Tensor out = x;
  for (std::size_t i = 0; i < x.size(); ++i)
    if (!input_mask[i]) out[i] = 0.0f;
  return out;
}

}  // namespace minmask
