#include "minmask/lsc.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "minmask/errors.hpp"
#include "minmask/image_ops.hpp"

namespace minmask {

double lsc(double area, double confidence) {
  if (!(area > 0.0 && area <= 1.0)) throw InvalidArgument("fractional area must lie in (0, 1]");
  if (!(confidence <= kConfidenceFloor) && !(confidence > kConfidenceFloor))
    throw InvalidArgument("confidence is NaN");
  if (confidence <= kConfidenceFloor) return std::numeric_limits<double>::infinity();
  return std::log(std::max(kAreaFloor, area)) - std::log(confidence);
}

double confidence(const Network& net, const Tensor& x, std::size_t label) {
  const Tensor out = predict(net, x);
  const Layer& last = net.layers().back();
  if (std::holds_alternative<Sigmoid>(last) && out.size() == 1) {
    if (label > 1) throw InvalidArgument("single-output sigmoid models have labels 0 and 1");
    return label == 1 ? out[0] : 1.0 - out[0];
  }
  if (label >= out.size()) throw InvalidArgument("label " + std::to_string(label) + " out of range");
  if (std::holds_alternative<Softmax>(last) || std::holds_alternative<Sigmoid>(last)) return out[label];
  double peak = out[0];
  for (float v : out.data()) peak = std::max(peak, static_cast<double>(v));
  double total = 0.0;
  for (float v : out.data()) total += std::exp(v - peak);
  return std::exp(out[label] - peak) / total;
}

double crop_resize_confidence(const Network& net, const Tensor& image, const Box& box, std::size_t label) {
  const Tensor resized = bilinear_resize(crop(image, box), image.shape()[0], image.shape()[1]);
  return confidence(net, resized, label);
}

LscRecord score_box(const Network& net, const Tensor& image, std::size_t label, const Box& box, std::string method) {
  if (image.rank() != 3) throw ShapeError("box scores need an H x W x C image");
  LscRecord rec;
  rec.method = std::move(method);
  rec.box = box;
  rec.area = static_cast<double>(box.area()) / static_cast<double>(image.shape()[0] * image.shape()[1]);
  rec.clamped_area = std::max(kAreaFloor, rec.area);
  rec.confidence = crop_resize_confidence(net, image, box, label);
  rec.score = lsc(rec.area, rec.confidence);
  return rec;
}

Box tightest_bbox(std::span<const std::uint8_t> mask, std::size_t height, std::size_t width) {
  if (mask.size() != height * width) throw ShapeError("mask does not match " + std::to_string(height) + "x" + std::to_string(width));
  bool any = false;
  Box box{height, width, 0, 0};
  for (std::size_t r = 0; r < height; ++r)
    for (std::size_t c = 0; c < width; ++c)
      if (mask[r * width + c]) {
        any = true;
        box.row_min = std::min(box.row_min, r);
        box.col_min = std::min(box.col_min, c);
        box.row_max = std::max(box.row_max, r);
        box.col_max = std::max(box.col_max, c);
      }
  if (!any) throw InvalidArgument("tightest box of an empty mask");
  return box;
}

LscRecord lsc_for_map(const Network& net, const Tensor& image, std::size_t label, const SaliencyMap& map,
                      std::size_t n_thresholds, std::string method) {
  if (image.rank() != 3 || map.shape != Shape{image.shape()[0], image.shape()[1]})
    throw ShapeError("map shape " + to_string(map.shape) + " does not match image " + to_string(image.shape()));
  if (n_thresholds == 0) throw InvalidArgument("at least one threshold is needed");
  const std::size_t h = image.shape()[0], w = image.shape()[1];
  double peak = 0.0;
  for (double s : map.scores) peak = std::max(peak, s);
  if (peak <= 0.0) {
    LscRecord rec = score_box(net, image, label, Box{0, 0, h - 1, w - 1}, std::move(method));
    rec.degenerate = true;
    return rec;
  }
  std::optional<LscRecord> best;
  std::vector<std::uint8_t> mask(map.size());
  for (std::size_t j = 1; j <= n_thresholds; ++j) {
    const double t = peak * static_cast<double>(j) / static_cast<double>(n_thresholds);
    for (std::size_t p = 0; p < map.size(); ++p) mask[p] = map.scores[p] >= t ? 1 : 0;
    const Box box = tightest_bbox(mask, h, w);
    if (best && best->box == box) continue;  // same box, same score, larger threshold
    LscRecord rec = score_box(net, image, label, box, method);
    rec.threshold = t;
    if (!best || rec.score < best->score) best = std::move(rec);
  }
  return *best;
}

std::vector<std::size_t> grid_lines(std::size_t extent, std::size_t grid) {
  std::vector<std::size_t> lines;
  for (std::size_t i = 0; i <= grid; ++i) lines.push_back((i * extent * 2 + grid) / (2 * grid));
  return lines;
}

std::vector<Box> grid_boxes(std::size_t height, std::size_t width, std::size_t grid) {
  if (grid < 2) throw InvalidArgument("optbox grid must be at least 2");
  const auto rows = grid_lines(height, grid);
  const auto cols = grid_lines(width, grid);
  std::set<Box> seen;
  std::vector<Box> boxes;
  for (std::size_t i = 0; i <= grid; ++i)
    for (std::size_t j = i + 1; j <= grid; ++j) {
      if (rows[j] <= rows[i]) continue;
      for (std::size_t k = 0; k <= grid; ++k)
        for (std::size_t l = k + 1; l <= grid; ++l) {
          if (cols[l] <= cols[k]) continue;
          const Box box{rows[i], cols[k], rows[j] - 1, cols[l] - 1};
          if (seen.insert(box).second) boxes.push_back(box);
        }
    }
  return boxes;
}

LscRecord optbox(const Network& net, const Tensor& image, std::size_t label, std::size_t grid) {
  if (image.rank() != 3) throw ShapeError("optbox needs an H x W x C image");
  std::optional<LscRecord> best;
  for (const Box& box : grid_boxes(image.shape()[0], image.shape()[1], grid)) {
    LscRecord rec = score_box(net, image, label, box, "optbox");
    const bool better = !best || rec.score < best->score ||
                        (rec.score == best->score &&
                         (rec.box.area() < best->box.area() || (rec.box.area() == best->box.area() && rec.box < best->box)));
    if (better) best = std::move(rec);
  }
  return *best;
}

Box center_box(std::size_t height, std::size_t width) {
  const auto side = [](std::size_t extent) {
    return std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(static_cast<double>(extent) / std::sqrt(2.0))));
  };
  const std::size_t h = side(height), w = side(width);
  const std::size_t top = (height - h) / 2, left = (width - w) / 2;
  return Box{top, left, top + h - 1, left + w - 1};
}

FixedBoxes fixed_boxes(const Network& net, const Tensor& image, std::size_t label) {
  if (image.rank() != 3) throw ShapeError("fixed boxes need an H x W x C image");
  const std::size_t h = image.shape()[0], w = image.shape()[1];
  return FixedBoxes{score_box(net, image, label, Box{0, 0, h - 1, w - 1}, "maxbox"),
                    score_box(net, image, label, center_box(h, w), "centerbox")};
}

std::map<std::string, double> win_rate(std::span<const MethodScore> scores) {
  std::map<std::string, std::map<std::string, double>> by_item;
  for (const MethodScore& s : scores) by_item[s.item][s.method] = s.score;
  std::map<std::string, std::size_t> wins, present;
  for (const auto& [item, methods] : by_item) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& [m, s] : methods) best = std::min(best, s);
    for (const auto& [m, s] : methods) {
      ++present[m];
      if (s <= best) ++wins[m];
    }
  }
  std::map<std::string, double> out;
  for (const auto& [m, n] : present) out[m] = 100.0 * static_cast<double>(wins[m]) / static_cast<double>(n);
  return out;
}

double quantile(std::vector<double> values, double q) {
  if (values.empty()) throw InvalidArgument("quantile of an empty list");
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  if (frac == 0.0 || values[lo] == values[hi]) return values[lo];
  return values[lo] + frac * (values[hi] - values[lo]);
}

}  // namespace minmask
