#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace minmask {

using Shape = std::vector<std::size_t>;

std::size_t element_count(const Shape& shape);
std::string to_string(const Shape& shape);

/// Dense row-major float tensor. Images are laid out H x W x C, token
/// sequences as length x embed_dim.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape);
  Tensor(Shape shape, std::vector<float> data);

  static Tensor filled(Shape shape, float value);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<const float> data() const noexcept { return data_; }
  std::span<float> data() noexcept { return data_; }
  const std::vector<float>& values() const noexcept { return data_; }

  float operator[](std::size_t i) const { return data_[i]; }
  float& operator[](std::size_t i) { return data_[i]; }

  /// Element (row, col, channel) of a rank-3 tensor.
  float at(std::size_t row, std::size_t col, std::size_t channel) const;
  float& at(std::size_t row, std::size_t col, std::size_t channel);

  Tensor reshaped(Shape shape) const;
  bool all_finite() const noexcept;

  /// Bitwise equality of shape and payload (distinguishes -0 from +0).
  bool bit_equal(const Tensor& other) const noexcept;

 private:
  Shape shape_;
  std::vector<float> data_;
};

/// Inclusive pixel rectangle.
struct Box {
  std::size_t row_min = 0;
  std::size_t col_min = 0;
  std::size_t row_max = 0;
  std::size_t col_max = 0;

  std::size_t height() const noexcept { return row_max - row_min + 1; }
  std::size_t width() const noexcept { return col_max - col_min + 1; }
  std::size_t area() const noexcept { return height() * width(); }
  bool valid_for(std::size_t image_height, std::size_t image_width) const noexcept;

  friend bool operator==(const Box&, const Box&) = default;
  friend auto operator<=>(const Box&, const Box&) = default;
};

std::string to_string(const Box& box);

}  // namespace minmask
