#include "minmask/tensor.hpp"

#include <cmath>
#include <cstring>
#include <sstream>

#include "minmask/errors.hpp"

namespace minmask {

std::size_t element_count(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string to_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << 'x';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

namespace {
void check_shape(const Shape& shape) {
  if (shape.empty()) throw ShapeError("tensor rank must be at least 1");
  for (std::size_t d : shape)
    if (d == 0) throw ShapeError("tensor dimensions must be positive, got " + to_string(shape));
}
}  // namespace

Tensor::Tensor(Shape shape) : shape_(std::move(shape)) {
  check_shape(shape_);
  data_.assign(element_count(shape_), 0.0f);
}

Tensor::Tensor(Shape shape, std::vector<float> data) : shape_(std::move(shape)), data_(std::move(data)) {
  check_shape(shape_);
  if (element_count(shape_) != data_.size())
    throw ShapeError("shape " + to_string(shape_) + " needs " + std::to_string(element_count(shape_)) +
                     " values, got " + std::to_string(data_.size()));
}

Tensor Tensor::filled(Shape shape, float value) {
  Tensor t(std::move(shape));
  for (float& v : t.data_) v = value;
  return t;
}

float Tensor::at(std::size_t row, std::size_t col, std::size_t channel) const {
  return data_[(row * shape_[1] + col) * shape_[2] + channel];
}

float& Tensor::at(std::size_t row, std::size_t col, std::size_t channel) {
  return data_[(row * shape_[1] + col) * shape_[2] + channel];
}

Tensor Tensor::reshaped(Shape shape) const {
  if (element_count(shape) != data_.size())
    throw ShapeError("cannot reshape " + to_string(shape_) + " to " + to_string(shape));
  return Tensor(std::move(shape), data_);
}

bool Tensor::all_finite() const noexcept {
  for (float v : data_)
    if (!std::isfinite(v)) return false;
  return true;
}

bool Tensor::bit_equal(const Tensor& other) const noexcept {
  return shape_ == other.shape_ && data_.size() == other.data_.size() &&
         (data_.empty() || std::memcmp(data_.data(), other.data_.data(), data_.size() * sizeof(float)) == 0);
}

bool Box::valid_for(std::size_t image_height, std::size_t image_width) const noexcept {
  return row_min <= row_max && col_min <= col_max && row_max < image_height && col_max < image_width;
}

std::string to_string(const Box& box) {
  std::ostringstream out;
  out << "Box(" << box.row_min << ',' << box.col_min << ',' << box.row_max << ',' << box.col_max << ')';
  return out.str();
}

}  // namespace minmask
