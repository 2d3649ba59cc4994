#pragma once

#include <cstddef>

#include "minmask/tensor.hpp"

namespace minmask {

/// Bilinear resize of an H x W x C tensor. Sample centres follow the
/// half-pixel convention: source = (i + 0.5) * H / new_h - 0.5, clamped to
/// [0, H - 1].
Tensor bilinear_resize(const Tensor& image, std::size_t new_h, std::size_t new_w);

/// Sub-tensor covered by `box`, all channels. Throws InvalidArgument when
/// the box leaves the image.
Tensor crop(const Tensor& image, const Box& box);

}  // namespace minmask
