#include <doctest.h>

#include <filesystem>

#include "minmask/errors.hpp"
#include "minmask/fixtures.hpp"
#include "minmask/model_io.hpp"

using namespace minmask;

namespace {

std::filesystem::path scratch(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "minmask_io_tests";
  std::filesystem::create_directories(dir);
  return dir / name;
}

const char* kOneDense = R"({"format": "minmask-model", "version": 1, "input_shape": [2],
  "layers": [{"type": "dense", "weights": [[2, -1]], "biases": [0.5]}]})";

template <typename F>
void expect_structured(F&& f) {
  try {
    f();
  } catch (const Error&) {
    return;
  } catch (const std::exception& e) {
    FAIL("unstructured exception: " << std::string(e.what()));
  }
}

}  // namespace

TEST_SUITE("model-io") {
  TEST_CASE("minimal dense model parses") {
    const Network net = parse_model(kOneDense);
    CHECK(net.layer_count() == 1);
    CHECK(net.input_shape() == Shape{2});
    CHECK(predict(net, Tensor({2}, {1, 1}))[0] == 1.5f);
  }

  TEST_CASE("mismatched weight dims name the layer") {
    const char* text = R"({"format": "minmask-model", "version": 1, "input_shape": [3],
      "layers": [{"type": "dense", "weights": [[1, 2, 3]], "biases": [0]}, {"type": "relu"},
                 {"type": "dense", "weights": [[1, 2]], "biases": [0]}]})";
    try {
      parse_model(text);
      FAIL("expected an error");
    } catch (const ShapeError& e) {
      CHECK(std::string(e.what()).find("layer 2") != std::string::npos);
    }
  }

  TEST_CASE("errors carry a location") {
    try {
      parse_model(R"({"format": "minmask-model", "version": 1, "input_shape": [2], "layers": [{"type": "pool"}]})");
      FAIL("expected an error");
    } catch (const ParseError& e) {
      CHECK(e.location() == "/layers/0/type");
    }
    try {
      parse_model("{\"format\": ");
      FAIL("expected an error");
    } catch (const ParseError& e) {
      CHECK(e.location().rfind("byte ", 0) == 0);
    }
    try {
      parse_model(R"({"format": "minmask-model", "version": 1, "input_shape": [2],
        "layers": [{"type": "dense", "weights": [[1, "x"]], "biases": [0]}]})");
      FAIL("expected an error");
    } catch (const ParseError& e) {
      CHECK(e.location() == "/layers/0/weights/0/1");
    }
  }

  TEST_CASE("save then load keeps weights bit-equal and outputs identical") {
    Xorshift64Star rng(12);
    for (int i = 0; i < 6; ++i) {
      const Network net = i % 3 == 0   ? random_mlp(rng, {5, 4, 3, 2}, Softmax{})
                          : i % 3 == 1 ? random_conv2d_net(rng)
                                       : random_conv1d_net(rng);
      const std::string text = serialize_model(net);
      const Network back = parse_model(text);
      CHECK(serialize_model(back) == text);
      const Tensor x = random_tensor(rng, net.input_shape(), -1, 1);
      CHECK(predict(net, x).bit_equal(predict(back, x)));
    }
    const auto path = scratch("m.json");
    const Network net = random_mlp(rng, {3, 3, 2}, Sigmoid{});
    save_model(path, net);
    CHECK(serialize_model(load_model(path)) == serialize_model(net));
  }

  TEST_CASE("tensor round trip preserves bytes") {
    const Tensor t({2, 2}, {1.5f, -0.0f, 3e-38f, 7.0f});
    const auto bytes = encode_tensor(t);
    CHECK(bytes.size() == 8 + 8 + 16);
    CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "TNSR");
    CHECK(decode_tensor(bytes).bit_equal(t));
    CHECK(encode_tensor(decode_tensor(bytes)) == bytes);

    Xorshift64Star rng(2);
    const Tensor big = random_tensor(rng, {224, 224, 3}, -1, 1);
    const auto path = scratch("big.tnsr");
    save_tensor(path, big);
    CHECK(load_tensor(path).bit_equal(big));
    CHECK(std::filesystem::file_size(path) == 8 + 12 + 224 * 224 * 3 * 4);
  }

  TEST_CASE("tensor decoding rejects malformed payloads") {
    const auto good = encode_tensor(Tensor({2}, {1, 2}));
    auto bad_magic = good;
    bad_magic[0] = 'X';
    CHECK_THROWS_AS(decode_tensor(bad_magic), ParseError);
    std::vector<std::uint8_t> rank0 = {'T', 'N', 'S', 'R', 0, 0, 0, 0};
    CHECK_THROWS_AS(decode_tensor(rank0), ParseError);
    auto truncated = good;
    truncated.pop_back();
    CHECK_THROWS_AS(decode_tensor(truncated), ParseError);
    auto trailing = good;
    trailing.push_back(0);
    CHECK_THROWS_AS(decode_tensor(trailing), ParseError);
  }

  TEST_CASE("annotation parsing") {
    auto recs = parse_annotations("item_id,row_min,col_min,row_max,col_max,label\nimg1,10,20,50,60,3\n");
    REQUIRE(recs.size() == 1);
    CHECK(recs[0].item_id == "img1");
    CHECK(recs[0].box == Box{10, 20, 50, 60});
    CHECK(recs[0].label == 3);

    CHECK_THROWS_AS(parse_annotations("item_id,row_min,col_min,row_max,col_max,label\nimg1,50,20,10,60,3\n"), ParseError);
    CHECK(parse_annotations("").empty());
    CHECK_THROWS_AS(parse_annotations("item_id,row_min,col_min,row_max,label\nimg1,1,2,3,4\n"), ParseError);
    CHECK_THROWS_AS(parse_annotations("item_id,row_min,col_min,row_max,col_max,label\nimg1,1.5,2,3,4,0\n"), ParseError);

    const auto dims = [](const std::string&) { return std::optional<ItemDimensions>(ItemDimensions{32, 32}); };
    CHECK_THROWS_AS(parse_annotations("item_id,row_min,col_min,row_max,col_max,label\nimg1,0,0,40,10,1\n", dims),
                    ParseError);

    auto text = parse_annotations("item_id,indices,label\nr1,3;4;9,1\n");
    REQUIRE(text.size() == 1);
    CHECK(text[0].rationale == std::vector<std::size_t>{3, 4, 9});
    CHECK_FALSE(text[0].box.has_value());
  }

  TEST_CASE("annotation and token round trips") {
    const std::vector<AnnotationRecord> boxes = {{"a", Box{0, 1, 2, 3}, {}, 1}, {"b", Box{4, 4, 4, 4}, {}, 0}};
    const auto path = scratch("boxes.csv");
    save_annotations(path, boxes);
    const auto back = load_annotations(path);
    REQUIRE(back.size() == 2);
    CHECK(back[1].box == Box{4, 4, 4, 4});

    TokenizedInput in{{"the", "beer", "is", "great"}, Tensor({4, 2}, {1, 2, 3, 4, 5, 6, 7, 8})};
    save_tokenized(scratch("t.tokens"), scratch("t.tnsr"), in);
    const TokenizedInput got = load_tokenized(scratch("t.tokens"), scratch("t.tnsr"));
    CHECK(got.tokens == in.tokens);
    CHECK(got.embeddings.bit_equal(in.embeddings));
  }

  TEST_CASE("arbitrary bytes never escape as unstructured errors") {
    Xorshift64Star rng(777);
    const std::string model = serialize_model(random_mlp(rng, {3, 2, 2}, Softmax{}));
    const auto tensor = encode_tensor(Tensor({2, 3}, {1, 2, 3, 4, 5, 6}));
    const std::string notes = "item_id,row_min,col_min,row_max,col_max,label\nimg1,1,2,3,4,0\n";
    const std::string alphabet = "{}[],:\"0123456789.-eE abcdefghijklmnopqrstuvwxyz\n;";
    for (int i = 0; i < 3000; ++i) {
      std::string m = model;
      const std::size_t edits = 1 + rng.below(4);
      for (std::size_t e = 0; e < edits; ++e) {
        const std::size_t at = rng.below(m.size());
        switch (rng.below(3)) {
          case 0:
            m[at] = alphabet[rng.below(alphabet.size())];
            break;
          case 1:
            m.erase(at, 1 + rng.below(8));
            break;
          default:
            m.insert(at, 1, alphabet[rng.below(alphabet.size())]);
        }
      }
      expect_structured([&] { parse_model(m); });

      auto t = tensor;
      t[rng.below(t.size())] = static_cast<std::uint8_t>(rng.below(256));
      if (rng.below(2)) t.resize(rng.below(t.size() + 4));
      expect_structured([&] { decode_tensor(t); });

      std::string n = notes;
      n[rng.below(n.size())] = alphabet[rng.below(alphabet.size())];
      expect_structured([&] { parse_annotations(n); });
    }
    for (int i = 0; i < 500; ++i) {
      std::vector<std::uint8_t> junk(rng.below(64));
      for (auto& b : junk) b = static_cast<std::uint8_t>(rng.below(256));
      if (junk.size() >= 4 && rng.below(2)) std::copy_n("TNSR", 4, junk.begin());
      expect_structured([&] { decode_tensor(junk); });
      expect_structured([&] { parse_model(std::string(junk.begin(), junk.end())); });
      expect_structured([&] { parse_annotations(std::string(junk.begin(), junk.end())); });
    }
  }
}
