// Compiled with -mavx2 only (no -mfma): lanes reproduce the scalar
// multiply-then-add sequence exactly.

#include <immintrin.h>

#include <cstdint>

#include "minmask/kernels.hpp"

namespace minmask::kernels::avx2 {

void affine_forward(std::span<const float> w, std::span<const float> b, std::span<const float> x,
                    std::span<float> y) {
  const std::size_t n = x.size();
  const std::size_t outputs = y.size();
  std::size_t o = 0;
  if (n > 0 && outputs >= 8 && 8 * n <= static_cast<std::size_t>(INT32_MAX)) {
    const int stride = static_cast<int>(n);
    const __m256i rows = _mm256_mullo_epi32(_mm256_setr_epi32(0, 1, 2, 3, 4, 5, 6, 7), _mm256_set1_epi32(stride));
    // Eight outputs per block; each lane walks its own weight row in ascending order.
    for (; o + 8 <= outputs; o += 8) {
      const float* base = w.data() + o * n;
      __m256 acc = _mm256_setzero_ps();
      for (std::size_t i = 0; i < n; ++i) {
        const __m256 wcol = _mm256_i32gather_ps(base + i, rows, 4);
        const __m256 p = _mm256_mul_ps(wcol, _mm256_set1_ps(x[i]));
        acc = _mm256_add_ps(acc, p);
      }
      acc = _mm256_add_ps(acc, _mm256_loadu_ps(b.data() + o));
      _mm256_storeu_ps(y.data() + o, acc);
    }
  }
  if (o < outputs)
    scalar::affine_forward(w.subspan(o * n), b.subspan(o), x, y.subspan(o));
}

void affine_transpose(std::span<const float> w, std::span<const float> g, std::span<float> gx) {
  const std::size_t n = gx.size();
  for (float& v : gx) v = 0.0f;
  for (std::size_t o = 0; o < g.size(); ++o) {
    const float* row = w.data() + o * n;
    const float go = g[o];
    const __m256 gv = _mm256_set1_ps(go);
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
      const __m256 p = _mm256_mul_ps(_mm256_loadu_ps(row + i), gv);
      _mm256_storeu_ps(gx.data() + i, _mm256_add_ps(_mm256_loadu_ps(gx.data() + i), p));
    }
    for (; i < n; ++i) {
      const float p = row[i] * go;
      gx[i] = gx[i] + p;
    }
  }
}

void relu_forward(std::span<const float> x, std::span<float> y) {
  const __m256 zero = _mm256_setzero_ps();
  std::size_t i = 0;
  for (; i + 8 <= x.size(); i += 8) {
    // max_ps returns the second operand when both are zero, so -0 maps to +0 as in the scalar path.
    _mm256_storeu_ps(y.data() + i, _mm256_max_ps(_mm256_loadu_ps(x.data() + i), zero));
  }
  scalar::relu_forward(x.subspan(i), y.subspan(i));
}

void relu_backward(std::span<const float> pre, std::span<const float> g, std::span<float> gx) {
  const __m256 zero = _mm256_setzero_ps();
  std::size_t i = 0;
  for (; i + 8 <= pre.size(); i += 8) {
    const __m256 active = _mm256_cmp_ps(_mm256_loadu_ps(pre.data() + i), zero, _CMP_GT_OQ);
    _mm256_storeu_ps(gx.data() + i, _mm256_and_ps(active, _mm256_loadu_ps(g.data() + i)));
  }
  scalar::relu_backward(pre.subspan(i), g.subspan(i), gx.subspan(i));
}

}  // namespace minmask::kernels::avx2
