#include "minmask/attribution.hpp"

#include <algorithm>
#include <numeric>

#include "minmask/errors.hpp"

namespace minmask {

Tensor integrated_gradients(const Network& net, const Tensor& x, std::size_t output_index,
                            const AttributionConfig& cfg) {
  if (cfg.steps == 0) throw InvalidArgument("integrated gradients needs at least one step");
  if (x.shape() != net.input_shape())
    throw ShapeError("input shape " + to_string(x.shape()) + " does not match network input " +
                     to_string(net.input_shape()));
  const Tensor baseline = cfg.baseline.value_or(Tensor(x.shape()));
  if (baseline.shape() != x.shape()) throw ShapeError("baseline shape " + to_string(baseline.shape()) + " differs from input");
  if (!baseline.all_finite()) throw InvalidArgument("baseline contains non-finite values");

  std::vector<double> sum(x.size(), 0.0);
  Tensor point(x.shape());
  for (std::size_t t = 0; t < cfg.steps; ++t) {
    const double alpha = (static_cast<double>(t) + 0.5) / static_cast<double>(cfg.steps);
    for (std::size_t i = 0; i < x.size(); ++i)
      point[i] = static_cast<float>(baseline[i] + alpha * (static_cast<double>(x[i]) - baseline[i]));
    const Tensor g = gradient(net, point, output_index);
    for (std::size_t i = 0; i < x.size(); ++i) sum[i] += g[i];
  }
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i)
    out[i] = static_cast<float>((static_cast<double>(x[i]) - baseline[i]) * (sum[i] / static_cast<double>(cfg.steps)));
  return out;
}

AttributionVector first_layer_attribution(const Network& net, const Tensor& x, std::size_t output_index,
                                          std::size_t steps) {
  const std::size_t block_end = net.first_block_end();
  if (block_end + 1 >= net.layer_count())
    throw InvalidArgument("no layers after the first-layer activations to attribute through");
  const Network rest = net.suffix(block_end + 1);
  const Tensor activations = std::move(forward(net, x)[block_end]);
  AttributionConfig cfg;
  cfg.steps = steps;
  const Tensor ig = integrated_gradients(rest, activations, output_index, cfg);
  AttributionVector attr;
  attr.scores.assign(ig.data().begin(), ig.data().end());
  return attr;
}

TopKSelection top_k_positive(const AttributionVector& attr, std::size_t k) {
  if (k == 0) throw InvalidArgument("k must be at least 1");
  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < attr.scores.size(); ++i)
    if (attr.scores[i] > 0.0) order.push_back(i);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return attr.scores[a] > attr.scores[b]; });
  if (order.size() > k) order.resize(k);
  TopKSelection sel;
  sel.k = k;
  sel.indices = order;
  for (std::size_t i : order) sel.scores.push_back(attr.scores[i]);
  return sel;
}

}  // namespace minmask
