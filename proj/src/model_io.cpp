#include "minmask/model_io.hpp"

#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "minmask/errors.hpp"

namespace minmask {

using nlohmann::json;

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

void write_file(const std::filesystem::path& path, std::string_view contents) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

// ---------------------------------------------------------------- models

namespace {

constexpr std::string_view kModelFormat = "minmask-model";

struct NestedArray {
  Shape dims;
  std::vector<float> values;
};

const json& field(const json& obj, const std::string& key, const std::string& path) {
  auto it = obj.find(key);
  if (it == obj.end()) throw ParseError(path, "missing field \"" + key + "\"");
  return *it;
}

std::size_t positive_integer(const json& value, const std::string& path) {
  if (!value.is_number_integer() || value.get<long long>() <= 0)
    throw ParseError(path, "expected a positive integer");
  return static_cast<std::size_t>(value.get<long long>());
}

void collect(const json& node, std::size_t depth, std::size_t rank, const std::string& path, NestedArray& out) {
  if (depth == rank) {
    if (!node.is_number()) throw ParseError(path, "expected a number");
    const double v = node.get<double>();
    if (!std::isfinite(v) || std::fabs(v) > std::numeric_limits<float>::max())
      throw ParseError(path, "value is not a finite float32");
    out.values.push_back(static_cast<float>(v));
    return;
  }
  if (!node.is_array()) throw ParseError(path, "expected an array of rank " + std::to_string(rank - depth));
  if (node.empty()) throw ParseError(path, "arrays must not be empty");
  if (out.dims.size() == depth) {
    out.dims.push_back(node.size());
  } else if (out.dims[depth] != node.size()) {
    throw ParseError(path, "ragged array: expected " + std::to_string(out.dims[depth]) + " entries, found " +
                               std::to_string(node.size()));
  }
  for (std::size_t i = 0; i < node.size(); ++i) collect(node[i], depth + 1, rank, path + "/" + std::to_string(i), out);
}

NestedArray nested(const json& obj, const std::string& key, std::size_t rank, const std::string& path) {
  NestedArray out;
  collect(field(obj, key, path), 0, rank, path + "/" + key, out);
  return out;
}

std::size_t stride_of(const json& obj, const std::string& path) {
  auto it = obj.find("stride");
  return it == obj.end() ? 1 : positive_integer(*it, path + "/stride");
}

Padding padding_of(const json& obj, const std::string& path) {
  auto it = obj.find("padding");
  if (it == obj.end()) return Padding::Valid;
  if (!it->is_string()) throw ParseError(path + "/padding", "expected \"valid\" or \"same\"");
  const std::string p = it->get<std::string>();
  if (p == "valid") return Padding::Valid;
  if (p == "same") return Padding::Same;
  throw ParseError(path + "/padding", "unknown padding \"" + p + "\"");
}

Layer parse_layer(const json& obj, const std::string& path) {
  if (!obj.is_object()) throw ParseError(path, "layer must be an object");
  const json& type = field(obj, "type", path);
  if (!type.is_string()) throw ParseError(path + "/type", "expected a string");
  const std::string kind = type.get<std::string>();
  if (kind == "dense") {
    NestedArray w = nested(obj, "weights", 2, path);
    NestedArray b = nested(obj, "biases", 1, path);
    Dense d;
    d.outputs = w.dims[0];
    d.inputs = w.dims[1];
    d.weights = std::move(w.values);
    d.biases = std::move(b.values);
    return d;
  }
  if (kind == "conv2d") {
    NestedArray k = nested(obj, "kernels", 4, path);
    NestedArray b = nested(obj, "biases", 1, path);
    Conv2d c;
    c.filters = k.dims[0];
    c.kernel_h = k.dims[1];
    c.kernel_w = k.dims[2];
    c.channels = k.dims[3];
    c.stride = stride_of(obj, path);
    c.padding = padding_of(obj, path);
    c.kernels = std::move(k.values);
    c.biases = std::move(b.values);
    return c;
  }
  if (kind == "conv1d") {
    NestedArray k = nested(obj, "kernels", 3, path);
    NestedArray b = nested(obj, "biases", 1, path);
    Conv1d c;
    c.filters = k.dims[0];
    c.width = k.dims[1];
    c.channels = k.dims[2];
    c.stride = stride_of(obj, path);
    c.padding = padding_of(obj, path);
    c.kernels = std::move(k.values);
    c.biases = std::move(b.values);
    return c;
  }
  if (kind == "flatten") return Flatten{};
  if (kind == "relu") return Relu{};
  if (kind == "sigmoid") return Sigmoid{};
  if (kind == "softmax") return Softmax{};
  throw ParseError(path + "/type", "unknown layer kind \"" + kind + "\"");
}

json rows_of(const std::vector<float>& values, const Shape& dims, std::size_t depth = 0, std::size_t offset = 0) {
  json arr = json::array();
  std::size_t stride = 1;
  for (std::size_t d = depth + 1; d < dims.size(); ++d) stride *= dims[d];
  for (std::size_t i = 0; i < dims[depth]; ++i) {
    if (depth + 1 == dims.size())
      arr.push_back(static_cast<double>(values[offset + i]));
    else
      arr.push_back(rows_of(values, dims, depth + 1, offset + i * stride));
  }
  return arr;
}

json layer_json(const Layer& layer) {
  json obj;
  obj["type"] = std::string(layer_kind(layer));
  if (const auto* d = std::get_if<Dense>(&layer)) {
    obj["weights"] = rows_of(d->weights, {d->outputs, d->inputs});
    obj["biases"] = rows_of(d->biases, {d->outputs});
  } else if (const auto* c = std::get_if<Conv2d>(&layer)) {
    obj["kernels"] = rows_of(c->kernels, {c->filters, c->kernel_h, c->kernel_w, c->channels});
    obj["biases"] = rows_of(c->biases, {c->filters});
    obj["stride"] = c->stride;
    obj["padding"] = std::string(to_string(c->padding));
  } else if (const auto* c1 = std::get_if<Conv1d>(&layer)) {
    obj["kernels"] = rows_of(c1->kernels, {c1->filters, c1->width, c1->channels});
    obj["biases"] = rows_of(c1->biases, {c1->filters});
    obj["stride"] = c1->stride;
    obj["padding"] = std::string(to_string(c1->padding));
  }
  return obj;
}

}  // namespace

namespace {

Network network_from(const json& doc) {
  if (!doc.is_object()) throw ParseError("/", "model document must be a JSON object");
  const json& format = field(doc, "format", "");
  if (!format.is_string() || format.get<std::string>() != kModelFormat)
    throw ParseError("/format", "expected \"" + std::string(kModelFormat) + "\"");
  const json& version = field(doc, "version", "");
  if (!version.is_number_integer() || version.get<long long>() != 1)
    throw ParseError("/version", "unsupported model version");
  const json& shape = field(doc, "input_shape", "");
  if (!shape.is_array() || shape.empty()) throw ParseError("/input_shape", "expected a non-empty array");
  Shape input_shape;
  for (std::size_t i = 0; i < shape.size(); ++i)
    input_shape.push_back(positive_integer(shape[i], "/input_shape/" + std::to_string(i)));
  const json& layers = field(doc, "layers", "");
  if (!layers.is_array() || layers.empty()) throw ParseError("/layers", "expected a non-empty array");
  std::vector<Layer> parsed;
  for (std::size_t i = 0; i < layers.size(); ++i) parsed.push_back(parse_layer(layers[i], "/layers/" + std::to_string(i)));
  return Network(std::move(input_shape), std::move(parsed));
}

}  // namespace

Network parse_model(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError("byte " + std::to_string(e.byte), e.what());
  } catch (const json::exception& e) {
    throw ParseError("", e.what());  // e.g. numeric overflow
  }
  try {
    return network_from(doc);
  } catch (const json::exception& e) {
    throw ParseError("", e.what());
  }
}

std::string serialize_model(const Network& net) {
  // One layer per line keeps fixtures diffable.
  std::string out = "{\n  \"format\": \"" + std::string(kModelFormat) + "\",\n  \"version\": 1,\n";
  out += "  \"input_shape\": " + json(net.input_shape()).dump() + ",\n  \"layers\": [\n";
  for (std::size_t i = 0; i < net.layer_count(); ++i) {
    out += "    " + layer_json(net.layers()[i]).dump();
    out += i + 1 < net.layer_count() ? ",\n" : "\n";
  }
  out += "  ]\n}\n";
  return out;
}

Network load_model(const std::filesystem::path& path) { return parse_model(read_file(path)); }

void save_model(const std::filesystem::path& path, const Network& net) { write_file(path, serialize_model(net)); }

// ---------------------------------------------------------------- tensors

namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(std::span<const std::uint8_t> bytes, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes[at + i]) << (8 * i);
  return v;
}

}  // namespace

std::vector<std::uint8_t> encode_tensor(const Tensor& t) {
  if (t.rank() == 0) throw InvalidArgument("cannot encode a rank-0 tensor");
  std::vector<std::uint8_t> out = {'T', 'N', 'S', 'R'};
  put_u32(out, static_cast<std::uint32_t>(t.rank()));
  for (std::size_t d : t.shape()) put_u32(out, static_cast<std::uint32_t>(d));
  out.reserve(out.size() + 4 * t.size());
  for (float v : t.data()) put_u32(out, std::bit_cast<std::uint32_t>(v));
  return out;
}

Tensor decode_tensor(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 8) throw ParseError("byte 0", "truncated tensor header");
  if (std::memcmp(bytes.data(), "TNSR", 4) != 0) throw ParseError("byte 0", "bad magic, expected TNSR");
  const std::uint32_t rank = get_u32(bytes, 4);
  if (rank == 0) throw ParseError("byte 4", "tensor rank must be at least 1");
  const std::size_t header = 8 + 4 * static_cast<std::size_t>(rank);
  if (bytes.size() < header) throw ParseError("byte " + std::to_string(bytes.size()), "truncated tensor dimensions");
  Shape shape(rank);
  std::size_t count = 1;
  for (std::uint32_t i = 0; i < rank; ++i) {
    shape[i] = get_u32(bytes, 8 + 4 * i);
    if (shape[i] == 0) throw ParseError("byte " + std::to_string(8 + 4 * i), "zero dimension");
    if (count > (bytes.size() / 4) / shape[i] + 1)
      throw ParseError("byte " + std::to_string(8 + 4 * i), "dimensions exceed payload size");
    count *= shape[i];
  }
  const std::size_t payload = bytes.size() - header;
  if (payload / 4 < count) throw ParseError("byte " + std::to_string(bytes.size()), "truncated tensor payload");
  if (payload != 4 * count) throw ParseError("byte " + std::to_string(header + 4 * count), "trailing bytes after payload");
  std::vector<float> data(count);
  for (std::size_t i = 0; i < count; ++i) {
    data[i] = std::bit_cast<float>(get_u32(bytes, header + 4 * i));
    if (!std::isfinite(data[i])) throw ParseError("byte " + std::to_string(header + 4 * i), "non-finite value");
  }
  return Tensor(std::move(shape), std::move(data));
}

Tensor load_tensor(const std::filesystem::path& path) {
  const std::string raw = read_file(path);
  return decode_tensor(std::span(reinterpret_cast<const std::uint8_t*>(raw.data()), raw.size()));
}

void save_tensor(const std::filesystem::path& path, const Tensor& t) {
  const auto bytes = encode_tensor(t);
  write_file(path, std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

// ---------------------------------------------------------------- annotations

namespace {

std::vector<std::string> split(std::string_view line, char sep) {
  std::vector<std::string> parts;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(sep, start);
    parts.emplace_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return parts;
}

std::size_t parse_index(const std::string& text, const std::string& where, const std::string& column) {
  std::size_t value = 0;
  const char* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (text.empty() || ec != std::errc{} || ptr != end)
    throw ParseError(where, "column " + column + " is not a non-negative integer: \"" + text + "\"");
  return value;
}

}  // namespace

std::vector<AnnotationRecord> parse_annotations(
    std::string_view text, const std::function<std::optional<ItemDimensions>(const std::string&)>& dims_of) {
  std::vector<std::string> lines;
  for (std::string& line : split(text, '\n')) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(std::move(line));
  }
  while (!lines.empty() && lines.back().empty()) lines.pop_back();
  std::vector<AnnotationRecord> records;
  if (lines.empty()) return records;

  const std::string box_header = "item_id,row_min,col_min,row_max,col_max,label";
  const std::string text_header = "item_id,indices,label";
  const bool boxes = lines[0] == box_header;
  if (!boxes && lines[0] != text_header)
    throw ParseError("line 1", "header must be \"" + box_header + "\" or \"" + text_header + "\"");
  const std::size_t columns = boxes ? 6 : 3;

  for (std::size_t n = 1; n < lines.size(); ++n) {
    const std::string where = "line " + std::to_string(n + 1);
    if (lines[n].empty()) throw ParseError(where, "empty row");
    const auto cells = split(lines[n], ',');
    if (cells.size() != columns)
      throw ParseError(where, "expected " + std::to_string(columns) + " columns, found " + std::to_string(cells.size()));
    AnnotationRecord rec;
    rec.item_id = cells[0];
    if (rec.item_id.empty()) throw ParseError(where, "empty item_id");
    if (boxes) {
      Box box{parse_index(cells[1], where, "row_min"), parse_index(cells[2], where, "col_min"),
              parse_index(cells[3], where, "row_max"), parse_index(cells[4], where, "col_max")};
      if (box.row_min > box.row_max) throw ParseError(where, "row_min > row_max");
      if (box.col_min > box.col_max) throw ParseError(where, "col_min > col_max");
      if (dims_of) {
        if (auto dims = dims_of(rec.item_id); dims && !box.valid_for(dims->height, dims->width))
          throw ParseError(where, to_string(box) + " exceeds item dimensions " + std::to_string(dims->height) + "x" +
                                      std::to_string(dims->width));
      }
      rec.box = box;
      rec.label = parse_index(cells[5], where, "label");
    } else {
      if (!cells[1].empty())
        for (const std::string& idx : split(cells[1], ';')) rec.rationale.push_back(parse_index(idx, where, "indices"));
      rec.label = parse_index(cells[2], where, "label");
    }
    records.push_back(std::move(rec));
  }
  return records;
}

std::vector<AnnotationRecord> load_annotations(
    const std::filesystem::path& path,
    const std::function<std::optional<ItemDimensions>(const std::string&)>& dims_of) {
  return parse_annotations(read_file(path), dims_of);
}

void save_annotations(const std::filesystem::path& path, const std::vector<AnnotationRecord>& records) {
  const bool boxes = records.empty() || records.front().box.has_value();
  std::string out = boxes ? "item_id,row_min,col_min,row_max,col_max,label\n" : "item_id,indices,label\n";
  for (const AnnotationRecord& r : records) {
    out += r.item_id + ',';
    if (boxes) {
      const Box& b = r.box.value();
      out += std::to_string(b.row_min) + ',' + std::to_string(b.col_min) + ',' + std::to_string(b.row_max) + ',' +
             std::to_string(b.col_max) + ',';
    } else {
      for (std::size_t i = 0; i < r.rationale.size(); ++i) out += (i ? ";" : "") + std::to_string(r.rationale[i]);
      out += ',';
    }
    out += std::to_string(r.label) + '\n';
  }
  write_file(path, out);
}

// ---------------------------------------------------------------- tokens

TokenizedInput load_tokenized(const std::filesystem::path& tokens_path, const std::filesystem::path& embeddings_path) {
  TokenizedInput input;
  for (std::string& line : split(read_file(tokens_path), '\n')) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    input.tokens.push_back(std::move(line));
  }
  if (!input.tokens.empty() && input.tokens.back().empty()) input.tokens.pop_back();
  input.embeddings = load_tensor(embeddings_path);
  if (input.embeddings.rank() != 2 || input.embeddings.shape()[0] != input.tokens.size())
    throw ShapeError("embeddings " + to_string(input.embeddings.shape()) + " do not match " +
                     std::to_string(input.tokens.size()) + " tokens");
  return input;
}

void save_tokenized(const std::filesystem::path& tokens_path, const std::filesystem::path& embeddings_path,
                    const TokenizedInput& input) {
  if (input.embeddings.rank() != 2 || input.embeddings.shape()[0] != input.tokens.size())
    throw ShapeError("embeddings do not match token count");
  std::string out;
  for (const std::string& t : input.tokens) {
    if (t.find('\n') != std::string::npos) throw InvalidArgument("tokens must not contain newlines");
    out += t + '\n';
  }
  write_file(tokens_path, out);
  save_tensor(embeddings_path, input.embeddings);
}

}  // namespace minmask
