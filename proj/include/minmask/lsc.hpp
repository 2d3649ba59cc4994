#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "minmask/network.hpp"
#include "minmask/saliency.hpp"
#include "minmask/tensor.hpp"

namespace minmask {

inline constexpr double kAreaFloor = 0.05;
inline constexpr double kConfidenceFloor = 1e-12;
inline constexpr std::size_t kDefaultThresholds = 20;
inline constexpr std::size_t kOptBoxGrid = 10;

/// log(max(0.05, a)) - log(c), natural log. Confidence at or below 1e-12
/// scores +infinity. Throws InvalidArgument unless 0 < a <= 1.
double lsc(double area, double confidence);

struct LscRecord {
  std::string method;
  Box box;
  double area = 1.0;          // a
  double clamped_area = 1.0;  // max(0.05, a)
  double confidence = 0.0;    // c
  double score = 0.0;
  std::optional<double> threshold;
  bool degenerate = false;  // empty map; the full image box was scored instead
};

/// Classifier confidence for `label`: the output entry when the network ends
/// in softmax (or a multi-output sigmoid), p / 1-p for a single sigmoid
/// output, softmax of raw outputs otherwise.
double confidence(const Network& net, const Tensor& x, std::size_t label);

/// Crops `box`, resizes it back to the image size bilinearly and returns the
/// label confidence. Every box-based score goes through this function.
double crop_resize_confidence(const Network& net, const Tensor& image, const Box& box, std::size_t label);

/// Scores one box: a = box area / image area.
LscRecord score_box(const Network& net, const Tensor& image, std::size_t label, const Box& box, std::string method);

/// Smallest box holding every set bit of an H x W mask. Throws
/// InvalidArgument when no bit is set.
Box tightest_bbox(std::span<const std::uint8_t> mask, std::size_t height, std::size_t width);

/// Best LSC over n thresholds t_j = max * j / n (j = 1..n); coordinates with
/// score >= t form the mask. Ties keep the smaller threshold.
LscRecord lsc_for_map(const Network& net, const Tensor& image, std::size_t label, const SaliencyMap& map,
                      std::size_t n_thresholds = kDefaultThresholds, std::string method = "map");

/// Grid line positions round(i * extent / grid), i = 0..grid.
std::vector<std::size_t> grid_lines(std::size_t extent, std::size_t grid);

/// Every box whose corners lie on the grid (rows [lines[i], lines[j]) with i < j).
std::vector<Box> grid_boxes(std::size_t height, std::size_t width, std::size_t grid);

/// Brute-force minimum-LSC grid box; ties prefer smaller area, then the
/// lexicographically smaller box.
LscRecord optbox(const Network& net, const Tensor& image, std::size_t label, std::size_t grid = kOptBoxGrid);

/// Centered box of about half the area: sides round(H / sqrt 2) x
/// round(W / sqrt 2), offsets floor((H - h) / 2), floor((W - w) / 2).
Box center_box(std::size_t height, std::size_t width);

struct FixedBoxes {
  LscRecord max_box;
  LscRecord center_box;
};

FixedBoxes fixed_boxes(const Network& net, const Tensor& image, std::size_t label);

struct MethodScore {
  std::string item;
  std::string method;
  double score = 0.0;
};

/// Percentage of items on which each method's score is <= every other
/// method's score on that item (overlaps allowed).
std::map<std::string, double> win_rate(std::span<const MethodScore> scores);

/// Linear-interpolation quantile (q in [0, 1]) of unsorted values.
double quantile(std::vector<double> values, double q);

}  // namespace minmask
