#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "minmask/network.hpp"
#include "minmask/tensor.hpp"

namespace minmask {

inline constexpr std::size_t kDefaultIgSteps = 64;

struct AttributionConfig {
  std::size_t steps = kDefaultIgSteps;
  std::optional<Tensor> baseline;  // all zeros when absent
};

/// Integrated Gradients along the straight path from the baseline to x,
/// integrated with the midpoint rule: alpha_t = (t + 0.5) / steps.
Tensor integrated_gradients(const Network& net, const Tensor& x, std::size_t output_index,
                            const AttributionConfig& cfg = {});

/// IG score of each first-layer neuron (one entry per element of L1).
struct AttributionVector {
  std::vector<double> scores;
  std::size_t neuron_count() const noexcept { return scores.size(); }
};

/// Treats the first-layer activations L1 as the input of the remaining
/// layers and attributes output `output_index` to them against an all-zero
/// baseline.
AttributionVector first_layer_attribution(const Network& net, const Tensor& x, std::size_t output_index,
                                          std::size_t steps = kDefaultIgSteps);

/// The selected neuron set D^k.
struct TopKSelection {
  std::size_t k = 0;
  std::vector<std::size_t> indices;  // descending score, ties by ascending index
  std::vector<double> scores;

  bool empty() const noexcept { return indices.empty(); }
};

/// Up to k neurons with strictly positive score. Returns an empty selection
/// when no score is positive.
TopKSelection top_k_positive(const AttributionVector& attr, std::size_t k);

}  // namespace minmask
