#include "minmask/network.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "minmask/errors.hpp"
#include "minmask/kernels.hpp"

namespace minmask {

std::string_view to_string(Padding padding) noexcept { return padding == Padding::Same ? "same" : "valid"; }

std::string_view layer_kind(const Layer& layer) noexcept {
  struct Visitor {
    std::string_view operator()(const Dense&) const { return "dense"; }
    std::string_view operator()(const Conv2d&) const { return "conv2d"; }
    std::string_view operator()(const Conv1d&) const { return "conv1d"; }
    std::string_view operator()(const Flatten&) const { return "flatten"; }
    std::string_view operator()(const Relu&) const { return "relu"; }
    std::string_view operator()(const Sigmoid&) const { return "sigmoid"; }
    std::string_view operator()(const Softmax&) const { return "softmax"; }
  };
  return std::visit(Visitor{}, layer);
}

bool is_affine(const Layer& layer) noexcept {
  return std::holds_alternative<Dense>(layer) || std::holds_alternative<Conv2d>(layer) ||
         std::holds_alternative<Conv1d>(layer);
}

AxisGeometry conv_axis(std::size_t input, std::size_t kernel, std::size_t stride, Padding padding) {
  AxisGeometry g;
  g.input = input;
  if (padding == Padding::Valid) {
    if (input < kernel) return g;  // output 0 signals an invalid configuration
    g.output = (input - kernel) / stride + 1;
  } else {
    g.output = (input + stride - 1) / stride;
    const std::size_t needed = (g.output - 1) * stride + kernel;
    g.pad_before = needed > input ? (needed - input) / 2 : 0;
  }
  return g;
}

namespace {

std::string layer_prefix(std::size_t index, const Layer& layer) {
  return "layer " + std::to_string(index) + " (" + std::string(layer_kind(layer)) + "): ";
}

Shape output_shape_of(std::size_t index, const Layer& layer, const Shape& in) {
  const auto fail = [&](const std::string& what) -> Shape { throw ShapeError(layer_prefix(index, layer) + what); };
  if (const auto* d = std::get_if<Dense>(&layer)) {
    if (d->inputs == 0 || d->outputs == 0) return fail("dense dimensions must be positive");
    if (d->weights.size() != d->inputs * d->outputs)
      return fail("weights hold " + std::to_string(d->weights.size()) + " values, expected " +
                  std::to_string(d->outputs) + "x" + std::to_string(d->inputs));
    if (d->biases.size() != d->outputs)
      return fail("biases hold " + std::to_string(d->biases.size()) + " values, expected " +
                  std::to_string(d->outputs));
    if (element_count(in) != d->inputs)
      return fail("input " + to_string(in) + " has " + std::to_string(element_count(in)) + " elements, expected " +
                  std::to_string(d->inputs));
    return {d->outputs};
  }
  if (const auto* c = std::get_if<Conv2d>(&layer)) {
    if (c->filters == 0 || c->kernel_h == 0 || c->kernel_w == 0 || c->channels == 0 || c->stride == 0)
      return fail("conv2d dimensions and stride must be positive");
    if (c->kernels.size() != c->filters * c->kernel_h * c->kernel_w * c->channels)
      return fail("kernels hold " + std::to_string(c->kernels.size()) + " values, expected filters*kh*kw*channels");
    if (c->biases.size() != c->filters) return fail("biases must have one value per filter");
    if (in.size() != 3 || in[2] != c->channels)
      return fail("expects HxWx" + std::to_string(c->channels) + " input, got " + to_string(in));
    const auto rows = conv_axis(in[0], c->kernel_h, c->stride, c->padding);
    const auto cols = conv_axis(in[1], c->kernel_w, c->stride, c->padding);
    if (rows.output == 0 || cols.output == 0) return fail("kernel larger than input " + to_string(in));
    return {rows.output, cols.output, c->filters};
  }
  if (const auto* c = std::get_if<Conv1d>(&layer)) {
    if (c->filters == 0 || c->width == 0 || c->channels == 0 || c->stride == 0)
      return fail("conv1d dimensions and stride must be positive");
    if (c->kernels.size() != c->filters * c->width * c->channels)
      return fail("kernels hold " + std::to_string(c->kernels.size()) + " values, expected filters*width*channels");
    if (c->biases.size() != c->filters) return fail("biases must have one value per filter");
    if (in.size() != 2 || in[1] != c->channels)
      return fail("expects Lx" + std::to_string(c->channels) + " input, got " + to_string(in));
    const auto axis = conv_axis(in[0], c->width, c->stride, c->padding);
    if (axis.output == 0) return fail("kernel wider than input " + to_string(in));
    return {axis.output, c->filters};
  }
  if (std::holds_alternative<Flatten>(layer)) return {element_count(in)};
  return in;
}

void dense_forward(const Dense& d, std::span<const float> x, std::span<float> y) {
  kernels::affine_forward(d.weights, d.biases, x, y);
}

void conv2d_forward(const Conv2d& c, const Shape& in, std::span<const float> x, const Shape& out,
                    std::span<float> y) {
  const auto rows = conv_axis(in[0], c.kernel_h, c.stride, c.padding);
  const auto cols = conv_axis(in[1], c.kernel_w, c.stride, c.padding);
  const std::size_t channels = c.channels;
  std::vector<float> patch(c.kernel_h * c.kernel_w * channels);
  for (std::size_t oy = 0; oy < out[0]; ++oy) {
    for (std::size_t ox = 0; ox < out[1]; ++ox) {
      std::size_t t = 0;
      for (std::size_t ky = 0; ky < c.kernel_h; ++ky) {
        const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * c.stride + ky) - static_cast<std::ptrdiff_t>(rows.pad_before);
        for (std::size_t kx = 0; kx < c.kernel_w; ++kx) {
          const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * c.stride + kx) - static_cast<std::ptrdiff_t>(cols.pad_before);
          const bool inside = iy >= 0 && ix >= 0 && iy < static_cast<std::ptrdiff_t>(in[0]) &&
                              ix < static_cast<std::ptrdiff_t>(in[1]);
          for (std::size_t ch = 0; ch < channels; ++ch, ++t)
            patch[t] = inside ? x[(static_cast<std::size_t>(iy) * in[1] + static_cast<std::size_t>(ix)) * channels + ch] : 0.0f;
        }
      }
      kernels::affine_forward(c.kernels, c.biases, patch, y.subspan((oy * out[1] + ox) * c.filters, c.filters));
    }
  }
}

void conv2d_backward(const Conv2d& c, const Shape& in, const Shape& out, std::span<const float> g,
                     std::span<float> gx) {
  const auto rows = conv_axis(in[0], c.kernel_h, c.stride, c.padding);
  const auto cols = conv_axis(in[1], c.kernel_w, c.stride, c.padding);
  const std::size_t channels = c.channels;
  std::vector<float> gpatch(c.kernel_h * c.kernel_w * channels);
  std::fill(gx.begin(), gx.end(), 0.0f);
  for (std::size_t oy = 0; oy < out[0]; ++oy) {
    for (std::size_t ox = 0; ox < out[1]; ++ox) {
      kernels::affine_transpose(c.kernels, g.subspan((oy * out[1] + ox) * c.filters, c.filters), gpatch);
      std::size_t t = 0;
      for (std::size_t ky = 0; ky < c.kernel_h; ++ky) {
        const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * c.stride + ky) - static_cast<std::ptrdiff_t>(rows.pad_before);
        for (std::size_t kx = 0; kx < c.kernel_w; ++kx) {
          const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * c.stride + kx) - static_cast<std::ptrdiff_t>(cols.pad_before);
          const bool inside = iy >= 0 && ix >= 0 && iy < static_cast<std::ptrdiff_t>(in[0]) &&
                              ix < static_cast<std::ptrdiff_t>(in[1]);
          for (std::size_t ch = 0; ch < channels; ++ch, ++t)
            if (inside) {
              float& dst = gx[(static_cast<std::size_t>(iy) * in[1] + static_cast<std::size_t>(ix)) * channels + ch];
              dst = dst + gpatch[t];
            }
        }
      }
    }
  }
}

void conv1d_forward(const Conv1d& c, const Shape& in, std::span<const float> x, const Shape& out,
                    std::span<float> y) {
  const auto axis = conv_axis(in[0], c.width, c.stride, c.padding);
  const std::size_t dims = c.channels;
  std::vector<float> patch(c.width * dims);
  for (std::size_t o = 0; o < out[0]; ++o) {
    std::size_t t = 0;
    for (std::size_t k = 0; k < c.width; ++k) {
      const std::ptrdiff_t pos = static_cast<std::ptrdiff_t>(o * c.stride + k) - static_cast<std::ptrdiff_t>(axis.pad_before);
      const bool inside = pos >= 0 && pos < static_cast<std::ptrdiff_t>(in[0]);
      for (std::size_t d = 0; d < dims; ++d, ++t)
        patch[t] = inside ? x[static_cast<std::size_t>(pos) * dims + d] : 0.0f;
    }
    kernels::affine_forward(c.kernels, c.biases, patch, y.subspan(o * c.filters, c.filters));
  }
}

void conv1d_backward(const Conv1d& c, const Shape& in, const Shape& out, std::span<const float> g,
                     std::span<float> gx) {
  const auto axis = conv_axis(in[0], c.width, c.stride, c.padding);
  const std::size_t dims = c.channels;
  std::vector<float> gpatch(c.width * dims);
  std::fill(gx.begin(), gx.end(), 0.0f);
  for (std::size_t o = 0; o < out[0]; ++o) {
    kernels::affine_transpose(c.kernels, g.subspan(o * c.filters, c.filters), gpatch);
    std::size_t t = 0;
    for (std::size_t k = 0; k < c.width; ++k) {
      const std::ptrdiff_t pos = static_cast<std::ptrdiff_t>(o * c.stride + k) - static_cast<std::ptrdiff_t>(axis.pad_before);
      const bool inside = pos >= 0 && pos < static_cast<std::ptrdiff_t>(in[0]);
      for (std::size_t d = 0; d < dims; ++d, ++t)
        if (inside) {
          float& dst = gx[static_cast<std::size_t>(pos) * dims + d];
          dst = dst + gpatch[t];
        }
    }
  }
}

void sigmoid_forward(std::span<const float> x, std::span<float> y) {
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = static_cast<float>(1.0 / (1.0 + std::exp(-static_cast<double>(x[i]))));
}

void softmax_forward(std::span<const float> x, std::span<float> y) {
  const float peak = *std::max_element(x.begin(), x.end());
  double total = 0.0;
  std::vector<double> e(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    e[i] = std::exp(static_cast<double>(x[i]) - static_cast<double>(peak));
    total += e[i];
  }
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = static_cast<float>(e[i] / total);
}

}  // namespace

Network::Network(Shape input_shape, std::vector<Layer> layers)
    : input_shape_(std::move(input_shape)), layers_(std::move(layers)) {
  if (input_shape_.empty()) throw ShapeError("network input shape must have rank >= 1");
  for (std::size_t d : input_shape_)
    if (d == 0) throw ShapeError("network input shape " + to_string(input_shape_) + " has a zero dimension");
  if (layers_.empty()) throw ShapeError("network has no layers");
  Shape current = input_shape_;
  shapes_.reserve(layers_.size());
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    current = output_shape_of(i, layers_[i], current);
    shapes_.push_back(current);
  }
}

const Shape& Network::output_shape() const { return shapes_.back(); }

std::size_t Network::first_affine_index() const {
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    if (is_affine(layers_[i])) return i;
    if (!std::holds_alternative<Flatten>(layers_[i]))
      throw UnsupportedModel(layer_prefix(i, layers_[i]) + "first parameterized layer must be dense or conv");
  }
  throw UnsupportedModel("network has no dense or conv layer");
}

std::size_t Network::first_block_end() const {
  const std::size_t affine = first_affine_index();
  if (affine + 1 < layers_.size() && std::holds_alternative<Relu>(layers_[affine + 1])) return affine + 1;
  return affine;
}

Network Network::suffix(std::size_t first) const {
  if (first == 0 || first >= layers_.size()) throw InvalidArgument("suffix must start inside the network, after layer 0");
  return Network(shapes_[first - 1], std::vector<Layer>(layers_.begin() + static_cast<std::ptrdiff_t>(first), layers_.end()));
}

std::vector<Tensor> forward(const Network& net, const Tensor& x) {
  if (x.shape() != net.input_shape())
    throw ShapeError("input shape " + to_string(x.shape()) + " does not match network input " +
                     to_string(net.input_shape()));
  std::vector<Tensor> outputs;
  outputs.reserve(net.layer_count());
  for (std::size_t i = 0; i < net.layer_count(); ++i) {
    const Tensor& in = i == 0 ? x : outputs.back();
    Tensor out(net.layer_shape(i));
    const Layer& layer = net.layers()[i];
    if (const auto* d = std::get_if<Dense>(&layer)) {
      dense_forward(*d, in.data(), out.data());
    } else if (const auto* c2 = std::get_if<Conv2d>(&layer)) {
      conv2d_forward(*c2, in.shape(), in.data(), out.shape(), out.data());
    } else if (const auto* c1 = std::get_if<Conv1d>(&layer)) {
      conv1d_forward(*c1, in.shape(), in.data(), out.shape(), out.data());
    } else if (std::holds_alternative<Flatten>(layer)) {
      std::copy(in.data().begin(), in.data().end(), out.data().begin());
    } else if (std::holds_alternative<Relu>(layer)) {
      kernels::relu_forward(in.data(), out.data());
    } else if (std::holds_alternative<Sigmoid>(layer)) {
      sigmoid_forward(in.data(), out.data());
    } else {
      softmax_forward(in.data(), out.data());
    }
    outputs.push_back(std::move(out));
  }
  return outputs;
}

Tensor predict(const Network& net, const Tensor& x) { return std::move(forward(net, x).back()); }

Tensor gradient(const Network& net, const Tensor& x, std::size_t output_index) {
  const std::vector<Tensor> outputs = forward(net, x);
  if (output_index >= outputs.back().size())
    throw ShapeError("output index " + std::to_string(output_index) + " out of range for output " +
                     to_string(outputs.back().shape()));
  std::vector<float> g(outputs.back().size(), 0.0f);
  g[output_index] = 1.0f;
  for (std::size_t step = net.layer_count(); step-- > 0;) {
    const Tensor& in = step == 0 ? x : outputs[step - 1];
    const Tensor& out = outputs[step];
    std::vector<float> gx(in.size(), 0.0f);
    const Layer& layer = net.layers()[step];
    if (const auto* d = std::get_if<Dense>(&layer)) {
      kernels::affine_transpose(d->weights, g, gx);
    } else if (const auto* c2 = std::get_if<Conv2d>(&layer)) {
      conv2d_backward(*c2, in.shape(), out.shape(), g, gx);
    } else if (const auto* c1 = std::get_if<Conv1d>(&layer)) {
      conv1d_backward(*c1, in.shape(), out.shape(), g, gx);
    } else if (std::holds_alternative<Flatten>(layer)) {
      gx = g;
    } else if (std::holds_alternative<Relu>(layer)) {
      kernels::relu_backward(in.data(), g, gx);
    } else if (std::holds_alternative<Sigmoid>(layer)) {
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] = g[i] * out[i] * (1.0f - out[i]);
    } else {
      double dot = 0.0;
      for (std::size_t i = 0; i < g.size(); ++i) dot += static_cast<double>(out[i]) * g[i];
      for (std::size_t i = 0; i < gx.size(); ++i)
        gx[i] = static_cast<float>(static_cast<double>(out[i]) * (static_cast<double>(g[i]) - dot));
    }
    g = std::move(gx);
  }
  return Tensor(x.shape(), std::move(g));
}

std::size_t argmax(std::span<const float> values) {
  if (values.empty()) throw InvalidArgument("argmax of an empty range");
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i)
    if (values[i] > values[best]) best = i;
  return best;
}

AffineMap first_layer_affine(const Network& net, const Shape& input_shape) {
  if (input_shape != net.input_shape())
    throw ShapeError("input shape " + to_string(input_shape) + " does not match network input " +
                     to_string(net.input_shape()));
  const std::size_t index = net.first_affine_index();
  const Shape& in = index == 0 ? net.input_shape() : net.layer_shape(index - 1);
  AffineMap map;
  map.input_shape = input_shape;
  map.output_shape = net.layer_shape(index);
  const Layer& layer = net.layers()[index];

  if (const auto* d = std::get_if<Dense>(&layer)) {
    map.neurons.resize(d->outputs);
    for (std::size_t o = 0; o < d->outputs; ++o) {
      AffineNeuron& n = map.neurons[o];
      n.bias = d->biases[o];
      for (std::size_t i = 0; i < d->inputs; ++i)
        if (const float w = d->weights[o * d->inputs + i]; w != 0.0f) n.terms.push_back({i, w});
    }
  } else if (const auto* c = std::get_if<Conv2d>(&layer)) {
    const auto rows = conv_axis(in[0], c->kernel_h, c->stride, c->padding);
    const auto cols = conv_axis(in[1], c->kernel_w, c->stride, c->padding);
    const Shape& out = map.output_shape;
    map.neurons.resize(element_count(out));
    const std::size_t taps = c->kernel_h * c->kernel_w * c->channels;
    for (std::size_t oy = 0; oy < out[0]; ++oy)
      for (std::size_t ox = 0; ox < out[1]; ++ox)
        for (std::size_t f = 0; f < c->filters; ++f) {
          AffineNeuron& n = map.neurons[(oy * out[1] + ox) * c->filters + f];
          n.bias = c->biases[f];
          std::size_t t = 0;
          for (std::size_t ky = 0; ky < c->kernel_h; ++ky) {
            const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * c->stride + ky) - static_cast<std::ptrdiff_t>(rows.pad_before);
            for (std::size_t kx = 0; kx < c->kernel_w; ++kx) {
              const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * c->stride + kx) - static_cast<std::ptrdiff_t>(cols.pad_before);
              const bool inside = iy >= 0 && ix >= 0 && iy < static_cast<std::ptrdiff_t>(in[0]) &&
                                  ix < static_cast<std::ptrdiff_t>(in[1]);
              for (std::size_t ch = 0; ch < c->channels; ++ch, ++t) {
                const float w = c->kernels[f * taps + t];
                if (inside && w != 0.0f)
                  n.terms.push_back({(static_cast<std::size_t>(iy) * in[1] + static_cast<std::size_t>(ix)) * c->channels + ch, w});
              }
            }
          }
        }
  } else {
    const auto& c1 = std::get<Conv1d>(layer);
    const auto axis = conv_axis(in[0], c1.width, c1.stride, c1.padding);
    const Shape& out = map.output_shape;
    map.neurons.resize(element_count(out));
    const std::size_t taps = c1.width * c1.channels;
    for (std::size_t o = 0; o < out[0]; ++o)
      for (std::size_t f = 0; f < c1.filters; ++f) {
        AffineNeuron& n = map.neurons[o * c1.filters + f];
        n.bias = c1.biases[f];
        std::size_t t = 0;
        for (std::size_t k = 0; k < c1.width; ++k) {
          const std::ptrdiff_t pos = static_cast<std::ptrdiff_t>(o * c1.stride + k) - static_cast<std::ptrdiff_t>(axis.pad_before);
          const bool inside = pos >= 0 && pos < static_cast<std::ptrdiff_t>(in[0]);
          for (std::size_t d = 0; d < c1.channels; ++d, ++t) {
            const float w = c1.kernels[f * taps + t];
            if (inside && w != 0.0f) n.terms.push_back({static_cast<std::size_t>(pos) * c1.channels + d, w});
          }
        }
      }
  }
  return map;
}

float evaluate(const AffineNeuron& neuron, std::span<const float> x) {
  float acc = 0.0f;
  for (const AffineTerm& t : neuron.terms) {
    const float p = t.weight * x[t.coord];
    acc = acc + p;
  }
  return acc + neuron.bias;
}

}  // namespace minmask
