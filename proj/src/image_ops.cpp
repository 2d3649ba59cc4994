#include "minmask/image_ops.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "minmask/errors.hpp"

namespace minmask {

namespace {

struct Tap {
  std::size_t lo = 0;
  std::size_t hi = 0;
  double frac = 0.0;
};

std::vector<Tap> sample_axis(std::size_t source, std::size_t target) {
  std::vector<Tap> taps(target);
  const double scale = static_cast<double>(source) / static_cast<double>(target);
  const double last = static_cast<double>(source - 1);
  for (std::size_t i = 0; i < target; ++i) {
    const double s = std::clamp((static_cast<double>(i) + 0.5) * scale - 0.5, 0.0, last);
    const double base = std::floor(s);
    taps[i].lo = static_cast<std::size_t>(base);
    taps[i].hi = std::min(taps[i].lo + 1, source - 1);
    taps[i].frac = s - base;
  }
  return taps;
}

void require_image(const Tensor& image) {
  if (image.rank() != 3) throw ShapeError("expected an HxWxC image, got " + to_string(image.shape()));
}

}  // namespace

Tensor bilinear_resize(const Tensor& image, std::size_t new_h, std::size_t new_w) {
  require_image(image);
  if (new_h == 0 || new_w == 0) throw InvalidArgument("resize target must be at least 1x1");
  const std::size_t channels = image.shape()[2];
  const auto rows = sample_axis(image.shape()[0], new_h);
  const auto cols = sample_axis(image.shape()[1], new_w);
  Tensor out({new_h, new_w, channels});
  for (std::size_t i = 0; i < new_h; ++i) {
    const Tap& r = rows[i];
    for (std::size_t j = 0; j < new_w; ++j) {
      const Tap& c = cols[j];
      for (std::size_t ch = 0; ch < channels; ++ch) {
        const double top = (1.0 - c.frac) * image.at(r.lo, c.lo, ch) + c.frac * image.at(r.lo, c.hi, ch);
        const double bottom = (1.0 - c.frac) * image.at(r.hi, c.lo, ch) + c.frac * image.at(r.hi, c.hi, ch);
        out.at(i, j, ch) = static_cast<float>((1.0 - r.frac) * top + r.frac * bottom);
      }
    }
  }
  return out;
}

Tensor crop(const Tensor& image, const Box& box) {
  require_image(image);
  if (!box.valid_for(image.shape()[0], image.shape()[1]))
    throw InvalidArgument(to_string(box) + " is outside image " + to_string(image.shape()));
  const std::size_t channels = image.shape()[2];
  Tensor out({box.height(), box.width(), channels});
  for (std::size_t r = 0; r < box.height(); ++r)
    for (std::size_t c = 0; c < box.width(); ++c)
      for (std::size_t ch = 0; ch < channels; ++ch) out.at(r, c, ch) = image.at(box.row_min + r, box.col_min + c, ch);
  return out;
}

}  // namespace minmask
