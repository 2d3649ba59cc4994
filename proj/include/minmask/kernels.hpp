#pragma once

// Inner loops of the forward and reverse passes. Every kernel has a scalar
// reference implementation and, where the CPU supports it, a SIMD variant
// selected at runtime. Variants accumulate each output in the same order as
// the scalar code (ascending input index, multiply then add, no FMA), so
// results are bit-identical across variants.

#include <cstddef>
#include <span>
#include <string_view>

namespace minmask::kernels {

enum class Isa { Scalar, Avx2 };

std::string_view isa_name(Isa isa) noexcept;

/// Best variant supported by this CPU. MINMASK_ISA=scalar in the
/// environment forces the reference path.
Isa detected_isa() noexcept;

/// Variant used by the dispatching entry points below.
Isa active_isa() noexcept;
void set_active_isa(Isa isa);

// y[o] = (sum_i w[o*n + i] * x[i]) + b[o], with n = x.size(), o < y.size().
void affine_forward(std::span<const float> w, std::span<const float> b, std::span<const float> x,
                    std::span<float> y);

// gx[i] = sum_o w[o*n + i] * g[o], with n = gx.size(). Overwrites gx.
void affine_transpose(std::span<const float> w, std::span<const float> g, std::span<float> gx);

void relu_forward(std::span<const float> x, std::span<float> y);

// gx[i] = pre[i] > 0 ? g[i] : 0
void relu_backward(std::span<const float> pre, std::span<const float> g, std::span<float> gx);

namespace scalar {
void affine_forward(std::span<const float> w, std::span<const float> b, std::span<const float> x,
                    std::span<float> y);
void affine_transpose(std::span<const float> w, std::span<const float> g, std::span<float> gx);
void relu_forward(std::span<const float> x, std::span<float> y);
void relu_backward(std::span<const float> pre, std::span<const float> g, std::span<float> gx);
}  // namespace scalar

#if defined(MINMASK_HAVE_AVX2)
namespace avx2 {
void affine_forward(std::span<const float> w, std::span<const float> b, std::span<const float> x,
                    std::span<float> y);
void affine_transpose(std::span<const float> w, std::span<const float> g, std::span<float> gx);
void relu_forward(std::span<const float> x, std::span<float> y);
void relu_backward(std::span<const float> pre, std::span<const float> g, std::span<float> gx);
}  // namespace avx2
#endif

}  // namespace minmask::kernels
