#pragma once

#include <cstddef>
#include <span>
#include <string_view>
#include <variant>
#include <vector>

#include "minmask/tensor.hpp"

namespace minmask {

enum class Padding { Valid, Same };

std::string_view to_string(Padding padding) noexcept;

/// Fully connected layer. Accepts any input whose element count equals
/// `inputs` (read in row-major order). weights are [outputs][inputs].
struct Dense {
  std::size_t inputs = 0;
  std::size_t outputs = 0;
  std::vector<float> weights;
  std::vector<float> biases;
};

/// 2-D convolution over an H x W x C input. kernels are [filters][kh][kw][C];
/// output is OH x OW x filters.
struct Conv2d {
  std::size_t filters = 0;
  std::size_t kernel_h = 0;
  std::size_t kernel_w = 0;
  std::size_t channels = 0;
  std::size_t stride = 1;
  Padding padding = Padding::Valid;
  std::vector<float> kernels;
  std::vector<float> biases;
};

/// 1-D convolution over a length x D input. kernels are [filters][width][D];
/// output is OL x filters.
struct Conv1d {
  std::size_t filters = 0;
  std::size_t width = 0;
  std::size_t channels = 0;
  std::size_t stride = 1;
  Padding padding = Padding::Valid;
  std::vector<float> kernels;
  std::vector<float> biases;
};

struct Flatten {};
struct Relu {};
struct Sigmoid {};
struct Softmax {};

using Layer = std::variant<Dense, Conv2d, Conv1d, Flatten, Relu, Sigmoid, Softmax>;

std::string_view layer_kind(const Layer& layer) noexcept;
bool is_affine(const Layer& layer) noexcept;

/// Output extent and leading zero padding of a convolution along one axis.
struct AxisGeometry {
  std::size_t input = 0;
  std::size_t output = 0;
  std::size_t pad_before = 0;
};

AxisGeometry conv_axis(std::size_t input, std::size_t kernel, std::size_t stride, Padding padding);

/// An ordered list of layers with a fixed input shape. Construction checks
/// that consecutive layer shapes are compatible and throws ShapeError naming
/// the offending layer index otherwise.
class Network {
 public:
  Network(Shape input_shape, std::vector<Layer> layers);

  const Shape& input_shape() const noexcept { return input_shape_; }
  const std::vector<Layer>& layers() const noexcept { return layers_; }
  std::size_t layer_count() const noexcept { return layers_.size(); }

  /// Output shape of layer i.
  const Shape& layer_shape(std::size_t i) const { return shapes_.at(i); }
  const Shape& output_shape() const;

  /// Index of the first Dense/Conv layer. Only Flatten may precede it;
  /// anything else throws UnsupportedModel.
  std::size_t first_affine_index() const;

  /// Index of the layer whose output is the first-layer activation L1: the
  /// first affine layer, or the ReLU directly after it.
  std::size_t first_block_end() const;

  /// Network made of layers [first, end), taking layer (first-1)'s output as input.
  Network suffix(std::size_t first) const;

 private:
  Shape input_shape_;
  std::vector<Layer> layers_;
  std::vector<Shape> shapes_;
};

/// Outputs of every layer; the last entry is the network output.
std::vector<Tensor> forward(const Network& net, const Tensor& x);

Tensor predict(const Network& net, const Tensor& x);

/// d output[output_index] / d x by reverse accumulation. ReLU'(0) = 0.
Tensor gradient(const Network& net, const Tensor& x, std::size_t output_index);

/// Index of the largest value; ties go to the lowest index.
std::size_t argmax(std::span<const float> values);

struct AffineTerm {
  std::size_t coord = 0;  // flat index into the network input
  float weight = 0.0f;
};

/// One first-layer neuron as an affine function of the input. Terms list the
/// receptive field (non-zero weights only) in ascending coordinate order.
struct AffineNeuron {
  std::vector<AffineTerm> terms;
  float bias = 0.0f;
};

struct AffineMap {
  Shape input_shape;
  Shape output_shape;  // shape of the first affine layer's output
  std::vector<AffineNeuron> neurons;
};

/// Sparse description of the first affine layer's pre-activations. For
/// convolutions each neuron lists only its kernel footprint.
AffineMap first_layer_affine(const Network& net, const Shape& input_shape);

/// Pre-activation of `neuron` at `x`, accumulated in the same order as forward().
float evaluate(const AffineNeuron& neuron, std::span<const float> x);

}  // namespace minmask
