#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "minmask/attribution.hpp"
#include "minmask/network.hpp"
#include "minmask/tensor.hpp"

namespace minmask {

enum class MapKind { Image, Text };

/// Per-pixel (H x W) or per-token (L) relevance scores with the binary mask
/// they were derived from.
struct SaliencyMap {
  Shape shape;
  std::vector<double> scores;
  std::vector<std::uint8_t> mask;
  MapKind kind = MapKind::Image;

  std::size_t size() const noexcept { return scores.size(); }
};

/// Map domain of an input: H x W for images, L for sequences, n for vectors.
Shape map_shape(const Shape& input_shape);

/// Map coordinate holding a flat input coordinate.
std::size_t map_coord(const Shape& input_shape, std::size_t input_coord);

/// Collapses a per-input-coordinate mask onto the map domain.
std::vector<std::uint8_t> to_map_mask(const Shape& input_shape, std::span<const std::uint8_t> input_mask);

/// Receptive field of each neuron in map coordinates (sorted, unique).
std::vector<std::vector<std::size_t>> receptive_fields(const AffineMap& affine, std::span<const std::size_t> neurons);

/// s = sum of alpha(o_p) over selected neurons whose receptive field holds
/// the coordinate, for masked coordinates; 0 elsewhere. `fields` runs
/// parallel to selection.indices.
SaliencyMap score_mask(const Shape& shape, std::span<const std::uint8_t> mask, const TopKSelection& selection,
                       const std::vector<std::vector<std::size_t>>& fields);

/// Unminimized mask: union of the selected receptive fields, scored the same way.
SaliencyMap smug_base_mask(const Shape& shape, const TopKSelection& selection,
                           const std::vector<std::vector<std::size_t>>& fields);

/// Non-zero scores mapped affinely onto [0.5, 1]; all-equal non-zero scores map to 1.
SaliencyMap rescale_visual(const SaliencyMap& map);

/// Fraction of coordinates with a non-zero score.
double sparsity(const SaliencyMap& map);

/// Gray value for a score in [0, 1]: round-half-up of score * 255.
std::uint8_t gray_level(double score);

/// Binary PGM (P5, maxval 255) of an image map.
std::string encode_pgm(const SaliencyMap& map);
void render_image(const SaliencyMap& map, const std::filesystem::path& path);

/// Binary PPM (P6) blending a red heat map onto the input at 50% alpha.
std::string encode_overlay_ppm(const SaliencyMap& map, const Tensor& image);
void render_overlay(const SaliencyMap& map, const Tensor& image, const std::filesystem::path& path);

/// HTML page with one span per token, green background scaled by score.
std::string encode_text_html(std::span<const std::string> tokens, const SaliencyMap& map);
void render_text(std::span<const std::string> tokens, const SaliencyMap& map, const std::filesystem::path& path);

}  // namespace minmask
