#include <doctest.h>

#include <filesystem>

#include "minmask/attribution.hpp"
#include "minmask/errors.hpp"
#include "minmask/experiment.hpp"
#include "minmask/fixtures.hpp"
#include "minmask/model_io.hpp"
#include "minmask/saliency.hpp"
#include "minmask/solver.hpp"

using namespace minmask;

namespace {

TopKSelection sel(std::vector<std::size_t> ids, std::vector<double> scores) {
  TopKSelection s;
  s.k = ids.size();
  s.indices = std::move(ids);
  s.scores = std::move(scores);
  return s;
}

}  // namespace

TEST_SUITE("saliency") {
  TEST_CASE("scores only masked coordinates") {
    const Shape shape{2, 2};
    const auto m = score_mask(shape, std::vector<std::uint8_t>{1, 0, 0, 0}, sel({0}, {2.0}), {{0, 1}});
    CHECK(m.scores == std::vector<double>{2.0, 0, 0, 0});
    CHECK(m.kind == MapKind::Image);
  }

  TEST_CASE("overlapping neurons add up") {
    const auto m = score_mask({3}, std::vector<std::uint8_t>{0, 1, 0}, sel({4, 7}, {1.0, 3.0}), {{0, 1}, {1, 2}});
    CHECK(m.scores == std::vector<double>{0, 4.0, 0});
    CHECK(m.kind == MapKind::Text);
  }

  TEST_CASE("all-zero mask gives an all-zero map") {
    const auto m = score_mask({2, 2}, std::vector<std::uint8_t>(4, 0), sel({0}, {2.0}), {{0, 1, 2, 3}});
    CHECK(sparsity(m) == 0.0);
  }

  TEST_CASE("unminimized mask is the union of the fields") {
    const auto one = smug_base_mask({5, 5}, sel({0}, {1.0}), {{0, 1, 2, 5, 6, 7, 10, 11, 12}});
    CHECK(std::count(one.mask.begin(), one.mask.end(), 1) == 9);
    CHECK_THROWS_AS(smug_base_mask({5, 5}, TopKSelection{}, {}), InvalidArgument);
    CHECK_THROWS_AS(smug_base_mask({2}, sel({0}, {1.0}), {{5}}), InvalidArgument);
  }

  TEST_CASE("every neuron of a dense layer covers the whole input") {
    const Network net({3, 3, 1}, {Flatten{}, Dense{9, 2, std::vector<float>(18, 0.5f), {0, 0}}, Relu{}, Dense{2, 1, {1, 1}, {0}}});
    const AffineMap affine = first_layer_affine(net, net.input_shape());
    const std::vector<std::size_t> ids{0, 1};
    const auto fields = receptive_fields(affine, ids);
    const auto base = smug_base_mask(map_shape(net.input_shape()), sel(ids, {1.0, 1.0}), fields);
    CHECK(std::count(base.mask.begin(), base.mask.end(), 1) == 9);
    CHECK(sparsity(base) == 1.0);
  }

  TEST_CASE("conv receptive fields map to pixels") {
    Conv2d conv{1, 2, 2, 3, 1, Padding::Valid, std::vector<float>(12, 1.0f), {0}};
    const Network net({3, 3, 3}, {conv, Relu{}, Flatten{}, Dense{4, 1, {1, 1, 1, 1}, {0}}});
    const AffineMap affine = first_layer_affine(net, net.input_shape());
    const std::vector<std::size_t> ids{3};
    CHECK(receptive_fields(affine, ids)[0] == std::vector<std::size_t>{4, 5, 7, 8});
    const std::vector<std::size_t> bad{4};
    CHECK_THROWS_AS(receptive_fields(affine, bad), InvalidArgument);
  }

  TEST_CASE("visual rescaling") {
    SaliencyMap m{{3}, {0, 2, 4}, {0, 1, 1}, MapKind::Text};
    CHECK(rescale_visual(m).scores == std::vector<double>{0, 0.5, 1.0});
    m.scores = {0, 7, 7};
    CHECK(rescale_visual(m).scores == std::vector<double>{0, 1.0, 1.0});
    m.scores = {0, 0, 0};
    CHECK(rescale_visual(m).scores == m.scores);
  }

  TEST_CASE("visual rescaling keeps order and zeros") {
    Xorshift64Star rng(12);
    for (int i = 0; i < 50; ++i) {
      SaliencyMap m{{20}, std::vector<double>(20), std::vector<std::uint8_t>(20), MapKind::Text};
      for (auto& s : m.scores) s = rng.below(3) == 0 ? 0.0 : rng.uniform(0.01, 9);
      const auto r = rescale_visual(m);
      for (std::size_t a = 0; a < 20; ++a) {
        CHECK((r.scores[a] == 0.0) == (m.scores[a] == 0.0));
        for (std::size_t b = 0; b < 20; ++b)
          if (m.scores[a] != 0 && m.scores[b] != 0 && m.scores[a] < m.scores[b]) CHECK(r.scores[a] <= r.scores[b]);
      }
    }
  }

  TEST_CASE("PGM bytes") {
    CHECK(gray_level(1.0) == 255);
    CHECK(gray_level(0.5) == 128);
    CHECK(gray_level(0.0) == 0);
    CHECK(gray_level(2.0) == 255);
    const std::string pgm = encode_pgm(SaliencyMap{{1, 2}, {1.0, 0.5}, {1, 1}, MapKind::Image});
    CHECK(pgm == std::string("P5\n2 1\n255\n\xff\x80", 13));
    CHECK_THROWS_AS(encode_pgm(SaliencyMap{{2}, {1, 1}, {1, 1}, MapKind::Text}), ShapeError);
  }

  TEST_CASE("overlay PPM") {
    const Tensor img({1, 1, 1}, {1.0f});
    const std::string ppm = encode_overlay_ppm(SaliencyMap{{1, 1}, {1.0}, {1}, MapKind::Image}, img);
    CHECK(ppm == std::string("P6\n1 1\n255\n\xff\x80\x80", 14));
  }

  TEST_CASE("text HTML") {
    const std::vector<std::string> none;
    const std::string empty = encode_text_html(none, SaliencyMap{{0}, {}, {}, MapKind::Text});
    CHECK(empty.find("<body>\n</body>") != std::string::npos);
    const std::vector<std::string> toks{"a<b", "ok"};
    const std::string html = encode_text_html(toks, SaliencyMap{{2}, {1.0, 0.0}, {1, 0}, MapKind::Text});
    CHECK(html.find("rgba(0, 160, 0, 1.000)\">a&lt;b</span>") != std::string::npos);
    CHECK(html.find("rgba(0, 160, 0, 0.000)\">ok</span>") != std::string::npos);
    CHECK_THROWS_AS(encode_text_html(toks, SaliencyMap{{1}, {1.0}, {1}, MapKind::Text}), ShapeError);
  }

  TEST_CASE("rendering to unwritable paths fails") {
    const SaliencyMap m{{1, 1}, {1.0}, {1}, MapKind::Image};
    CHECK_THROWS_AS(render_image(m, "/nonexistent-dir/x/y.pgm"), IoError);
  }

  TEST_CASE("support containment and sparsity dominance on random nets") {
    Xorshift64Star rng(44);
    for (int i = 0; i < 16; ++i) {
      const Network net = i % 2 ? random_conv2d_net(rng) : random_conv1d_net(rng);
      const Tensor x = random_tensor(rng, net.input_shape(), -1, 1);
      const auto attr = first_layer_attribution(net, x, 0, 16);
      const auto s = top_k_positive(attr, 10);
      if (s.empty()) continue;
      const auto p = build_partial_encoding(net, x, s, 0.0, 1);
      const auto sol = solve_min(p);
      REQUIRE(sol.status == SolveStatus::Sat);
      const Shape shape = map_shape(x.shape());
      const auto fields = receptive_fields(first_layer_affine(net, x.shape()), s.indices);
      const auto mask = to_map_mask(x.shape(), expand_to_input(p, sol.assignment));
      const auto smug = score_mask(shape, mask, s, fields);
      const auto base = smug_base_mask(shape, s, fields);
      std::vector<std::uint8_t> covered(smug.size(), 0);
      for (const auto& f : fields)
        for (std::size_t q : f) covered[q] = 1;
      for (std::size_t q = 0; q < smug.size(); ++q) {
        CHECK((smug.scores[q] > 0) == (mask[q] && covered[q]));
        if (smug.scores[q] > 0) CHECK(base.scores[q] > 0);
      }
      CHECK(sparsity(smug) <= sparsity(base));
    }
  }

  TEST_CASE("sparsity dominance on the fixtures") {
    bool strict = false;
    for (const FixtureSpec& spec : default_fixture_specs()) {
      const Fixture f = make_fixture(spec);
      for (const auto& item : f.items) {
        ExplainOptions opt;
        opt.k = 100;
        opt.grid_size = spec.kind == FixtureKind::Conv1dText ? kDefaultTextGridSize : kDefaultGridSize;
        const Explanation e = explain(f.model, item.input, item.label, opt);
        CHECK(sparsity(e.smug) <= sparsity(e.smug_base));
        strict = strict || sparsity(e.smug) < sparsity(e.smug_base);
      }
    }
    CHECK(strict);
  }
}
