#pragma once

#include <cstdint>
#include <functional>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "minmask/network.hpp"
#include "minmask/tensor.hpp"

namespace minmask {

// Model files are JSON documents:
//   {"format": "minmask-model", "version": 1, "input_shape": [8, 8, 1],
//    "layers": [{"type": "flatten"},
//               {"type": "dense", "weights": [[...], ...], "biases": [...]},
//               {"type": "conv2d", "kernels": [F][KH][KW][C], "biases": [F],
//                "stride": 1, "padding": "valid"}, ...]}
// Parse failures raise ParseError whose location is a byte offset or a JSON
// pointer to the offending field.
Network parse_model(std::string_view text);
std::string serialize_model(const Network& net);
Network load_model(const std::filesystem::path& path);
void save_model(const std::filesystem::path& path, const Network& net);

// Tensor files: "TNSR", u32 rank, u32 per dimension, then float32 values,
// all little-endian, row-major.
std::vector<std::uint8_t> encode_tensor(const Tensor& t);
Tensor decode_tensor(std::span<const std::uint8_t> bytes);
Tensor load_tensor(const std::filesystem::path& path);
void save_tensor(const std::filesystem::path& path, const Tensor& t);

struct AnnotationRecord {
  std::string item_id;
  std::optional<Box> box;                   // image annotations
  std::vector<std::size_t> rationale;       // text annotations (token indices)
  std::size_t label = 0;
};

struct ItemDimensions {
  std::size_t height = 0;
  std::size_t width = 0;
};

/// Parses either `item_id,row_min,col_min,row_max,col_max,label` or
/// `item_id,indices,label` (indices separated by ';'). An empty document
/// yields no records. When `dims_of` knows an item, its box is bounds-checked.
std::vector<AnnotationRecord> parse_annotations(
    std::string_view text, const std::function<std::optional<ItemDimensions>(const std::string&)>& dims_of = {});
std::vector<AnnotationRecord> load_annotations(
    const std::filesystem::path& path,
    const std::function<std::optional<ItemDimensions>(const std::string&)>& dims_of = {});
void save_annotations(const std::filesystem::path& path, const std::vector<AnnotationRecord>& records);

struct TokenizedInput {
  std::vector<std::string> tokens;
  Tensor embeddings;  // tokens.size() x embed_dim
};

/// Tokens are stored one per line next to a TNSR embedding matrix.
TokenizedInput load_tokenized(const std::filesystem::path& tokens_path, const std::filesystem::path& embeddings_path);
void save_tokenized(const std::filesystem::path& tokens_path, const std::filesystem::path& embeddings_path,
                    const TokenizedInput& input);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view contents);

}  // namespace minmask
