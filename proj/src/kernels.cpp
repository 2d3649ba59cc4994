#include "minmask/kernels.hpp"

#include <atomic>
#include <cstdlib>
#include <cstring>

#include "minmask/errors.hpp"

namespace minmask::kernels {

namespace scalar {

void affine_forward(std::span<const float> w, std::span<const float> b, std::span<const float> x,
                    std::span<float> y) {
  const std::size_t n = x.size();
  for (std::size_t o = 0; o < y.size(); ++o) {
    const float* row = w.data() + o * n;
    float acc = 0.0f;
    for (std::size_t i = 0; i < n; ++i) {
      const float p = row[i] * x[i];
      acc = acc + p;
    }
    y[o] = acc + b[o];
  }
}

void affine_transpose(std::span<const float> w, std::span<const float> g, std::span<float> gx) {
  const std::size_t n = gx.size();
  for (float& v : gx) v = 0.0f;
  for (std::size_t o = 0; o < g.size(); ++o) {
    const float* row = w.data() + o * n;
    const float go = g[o];
    for (std::size_t i = 0; i < n; ++i) {
      const float p = row[i] * go;
      gx[i] = gx[i] + p;
    }
  }
}

void relu_forward(std::span<const float> x, std::span<float> y) {
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > 0.0f ? x[i] : 0.0f;
}

void relu_backward(std::span<const float> pre, std::span<const float> g, std::span<float> gx) {
  for (std::size_t i = 0; i < pre.size(); ++i) gx[i] = pre[i] > 0.0f ? g[i] : 0.0f;
}

}  // namespace scalar

std::string_view isa_name(Isa isa) noexcept {
  switch (isa) {
    case Isa::Scalar:
      return "scalar";
    case Isa::Avx2:
      return "avx2";
  }
  return "unknown";
}

Isa detected_isa() noexcept {
  if (const char* forced = std::getenv("MINMASK_ISA"); forced && std::strcmp(forced, "scalar") == 0)
    return Isa::Scalar;
#if defined(MINMASK_HAVE_AVX2)
  if (__builtin_cpu_supports("avx2")) return Isa::Avx2;
#endif
  return Isa::Scalar;
}

namespace {
std::atomic<Isa>& active() {
  static std::atomic<Isa> isa{detected_isa()};
  return isa;
}
}  // namespace

Isa active_isa() noexcept { return active().load(std::memory_order_relaxed); }

void set_active_isa(Isa isa) {
#if defined(MINMASK_HAVE_AVX2)
  if (isa == Isa::Avx2 && !__builtin_cpu_supports("avx2"))
    throw InvalidArgument("avx2 kernels requested but the CPU does not support AVX2");
#else
  if (isa == Isa::Avx2) throw InvalidArgument("avx2 kernels are not compiled into this build");
#endif
  active().store(isa, std::memory_order_relaxed);
}

void affine_forward(std::span<const float> w, std::span<const float> b, std::span<const float> x,
                    std::span<float> y) {
#if defined(MINMASK_HAVE_AVX2)
  if (active_isa() == Isa::Avx2) return avx2::affine_forward(w, b, x, y);
#endif
  scalar::affine_forward(w, b, x, y);
}

void affine_transpose(std::span<const float> w, std::span<const float> g, std::span<float> gx) {
#if defined(MINMASK_HAVE_AVX2)
  if (active_isa() == Isa::Avx2) return avx2::affine_transpose(w, g, gx);
#endif
  scalar::affine_transpose(w, g, gx);
}

void relu_forward(std::span<const float> x, std::span<float> y) {
#if defined(MINMASK_HAVE_AVX2)
  if (active_isa() == Isa::Avx2) return avx2::relu_forward(x, y);
#endif
  scalar::relu_forward(x, y);
}

void relu_backward(std::span<const float> pre, std::span<const float> g, std::span<float> gx) {
#if defined(MINMASK_HAVE_AVX2)
  if (active_isa() == Isa::Avx2) return avx2::relu_backward(pre, g, gx);
#endif
  scalar::relu_backward(pre, g, gx);
}

}  // namespace minmask::kernels
