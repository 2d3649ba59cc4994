#include "minmask/saliency.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "minmask/errors.hpp"
#include "minmask/mask_problem.hpp"
#include "minmask/model_io.hpp"

namespace minmask {

Shape map_shape(const Shape& input_shape) {
  switch (layout_of(input_shape)) {
    case InputLayout::Image:
      return {input_shape[0], input_shape[1]};
    case InputLayout::Sequence:
    case InputLayout::Flat:
      return {input_shape[0]};
  }
  return {};
}

std::size_t map_coord(const Shape& input_shape, std::size_t input_coord) {
  switch (layout_of(input_shape)) {
    case InputLayout::Image:
      return input_coord / input_shape[2];
    case InputLayout::Sequence:
      return input_coord / input_shape[1];
    case InputLayout::Flat:
      return input_coord;
  }
  return input_coord;
}

std::vector<std::uint8_t> to_map_mask(const Shape& input_shape, std::span<const std::uint8_t> input_mask) {
  if (input_mask.size() != element_count(input_shape)) throw ShapeError("mask does not match input " + to_string(input_shape));
  std::vector<std::uint8_t> out(element_count(map_shape(input_shape)), 0);
  for (std::size_t p = 0; p < input_mask.size(); ++p)
    if (input_mask[p]) out[map_coord(input_shape, p)] = 1;
  return out;
}

std::vector<std::vector<std::size_t>> receptive_fields(const AffineMap& affine, std::span<const std::size_t> neurons) {
  std::vector<std::vector<std::size_t>> fields;
  fields.reserve(neurons.size());
  for (std::size_t n : neurons) {
    if (n >= affine.neurons.size()) throw InvalidArgument("neuron " + std::to_string(n) + " is not in the first layer");
    std::vector<std::size_t> field;
    for (const AffineTerm& t : affine.neurons[n].terms) field.push_back(map_coord(affine.input_shape, t.coord));
    std::sort(field.begin(), field.end());
    field.erase(std::unique(field.begin(), field.end()), field.end());
    fields.push_back(std::move(field));
  }
  return fields;
}

namespace {

MapKind kind_of(const Shape& shape) { return shape.size() == 2 ? MapKind::Image : MapKind::Text; }

void check_fields(const Shape& shape, const TopKSelection& selection, const std::vector<std::vector<std::size_t>>& fields) {
  if (fields.size() != selection.indices.size() || selection.scores.size() != selection.indices.size())
    throw InvalidArgument("receptive fields must run parallel to the selection");
  const std::size_t n = element_count(shape);
  for (const auto& f : fields)
    for (std::size_t p : f)
      if (p >= n) throw InvalidArgument("receptive field coordinate outside the map");
}

}  // namespace

SaliencyMap score_mask(const Shape& shape, std::span<const std::uint8_t> mask, const TopKSelection& selection,
                       const std::vector<std::vector<std::size_t>>& fields) {
  const std::size_t n = element_count(shape);
  if (mask.size() != n) throw ShapeError("mask size does not match map shape " + to_string(shape));
  check_fields(shape, selection, fields);
  SaliencyMap map{shape, std::vector<double>(n, 0.0), std::vector<std::uint8_t>(mask.begin(), mask.end()), kind_of(shape)};
  for (std::size_t s = 0; s < fields.size(); ++s)
    for (std::size_t p : fields[s])
      if (mask[p]) map.scores[p] += selection.scores[s];
  return map;
}

SaliencyMap smug_base_mask(const Shape& shape, const TopKSelection& selection,
                           const std::vector<std::vector<std::size_t>>& fields) {
  if (selection.empty()) throw InvalidArgument("unminimized mask needs a non-empty selection");
  check_fields(shape, selection, fields);
  std::vector<std::uint8_t> mask(element_count(shape), 0);
  for (const auto& f : fields)
    for (std::size_t p : f) mask[p] = 1;
  return score_mask(shape, mask, selection, fields);
}

SaliencyMap rescale_visual(const SaliencyMap& map) {
  SaliencyMap out = map;
  double lo = 0.0, hi = 0.0;
  bool any = false;
  for (double s : map.scores) {
    if (s == 0.0) continue;
    lo = any ? std::min(lo, s) : s;
    hi = any ? std::max(hi, s) : s;
    any = true;
  }
  if (!any) return out;
  for (double& s : out.scores) {
    if (s == 0.0) continue;
    s = hi == lo ? 1.0 : 0.5 + 0.5 * (s - lo) / (hi - lo);
  }
  return out;
}

double sparsity(const SaliencyMap& map) {
  if (map.scores.empty()) return 0.0;
  const auto nonzero = std::count_if(map.scores.begin(), map.scores.end(), [](double s) { return s != 0.0; });
  return static_cast<double>(nonzero) / static_cast<double>(map.scores.size());
}

std::uint8_t gray_level(double score) {
  const double v = std::floor(std::clamp(score, 0.0, 1.0) * 255.0 + 0.5);
  return static_cast<std::uint8_t>(v);
}

std::string encode_pgm(const SaliencyMap& map) {
  if (map.shape.size() != 2) throw ShapeError("PGM output needs an H x W map");
  std::string out = "P5\n" + std::to_string(map.shape[1]) + " " + std::to_string(map.shape[0]) + "\n255\n";
  for (double s : map.scores) out.push_back(static_cast<char>(gray_level(s)));
  return out;
}

void render_image(const SaliencyMap& map, const std::filesystem::path& path) { write_file(path, encode_pgm(map)); }

std::string encode_overlay_ppm(const SaliencyMap& map, const Tensor& image) {
  if (map.shape.size() != 2 || image.rank() != 3 || image.shape()[0] != map.shape[0] || image.shape()[1] != map.shape[1])
    throw ShapeError("overlay needs an H x W map over an H x W x C image");
  const std::size_t channels = image.shape()[2];
  std::string out = "P6\n" + std::to_string(map.shape[1]) + " " + std::to_string(map.shape[0]) + "\n255\n";
  for (std::size_t r = 0; r < map.shape[0]; ++r)
    for (std::size_t c = 0; c < map.shape[1]; ++c) {
      const double heat = std::clamp(map.scores[r * map.shape[1] + c], 0.0, 1.0);
      for (std::size_t k = 0; k < 3; ++k) {
        const double base = std::clamp(static_cast<double>(image.at(r, c, channels == 3 ? k : 0)), 0.0, 1.0);
        const double overlay = k == 0 ? heat : 0.0;
        out.push_back(static_cast<char>(gray_level(0.5 * base + 0.5 * overlay)));
      }
    }
  return out;
}

void render_overlay(const SaliencyMap& map, const Tensor& image, const std::filesystem::path& path) {
  write_file(path, encode_overlay_ppm(map, image));
}

namespace {

std::string escape_html(const std::string& text) {
  std::string out;
  for (char c : text) {
    switch (c) {
      case '&':
        out += "&amp;";
        break;
      case '<':
        out += "&lt;";
        break;
      case '>':
        out += "&gt;";
        break;
      case '"':
        out += "&quot;";
        break;
      default:
        out += c;
    }
  }
  return out;
}

}  // namespace

std::string encode_text_html(std::span<const std::string> tokens, const SaliencyMap& map) {
  if (map.scores.size() != tokens.size()) throw ShapeError("text map must have one score per token");
  std::string out =
      "<!DOCTYPE html>\n<html>\n<head><meta charset=\"utf-8\"><title>saliency</title></head>\n<body>\n";
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    char alpha[16];
    std::snprintf(alpha, sizeof alpha, "%.3f", std::clamp(map.scores[i], 0.0, 1.0));
    out += "<span style=\"background-color: rgba(0, 160, 0, " + std::string(alpha) + ")\">" + escape_html(tokens[i]) +
           "</span>\n";
  }
  out += "</body>\n</html>\n";
  return out;
}

void render_text(std::span<const std::string> tokens, const SaliencyMap& map, const std::filesystem::path& path) {
  write_file(path, encode_text_html(tokens, map));
}

}  // namespace minmask
