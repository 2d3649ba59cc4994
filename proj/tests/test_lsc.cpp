#include <doctest.h>

#include <cmath>

#include "minmask/errors.hpp"
#include "minmask/fixtures.hpp"
#include "minmask/lsc.hpp"

using namespace minmask;

namespace {

Network random_image_classifier(Xorshift64Star& rng, std::size_t side) {
  const std::size_t n = side * side;
  Dense d{n, 3, std::vector<float>(3 * n), std::vector<float>(3)};
  for (auto& w : d.weights) w = static_cast<float>(rng.uniform(-0.3, 0.3));
  for (auto& b : d.biases) b = static_cast<float>(rng.uniform(-0.5, 0.5));
  return Network({side, side, 1}, {Flatten{}, d, Softmax{}});
}

std::vector<Tensor> fixture_images() {
  std::vector<Tensor> out;
  for (const FixtureSpec& spec : default_fixture_specs()) {
    if (spec.kind == FixtureKind::Conv1dText) continue;
    for (const auto& item : make_fixture(spec).items) out.push_back(item.input);
  }
  return out;
}

}  // namespace

TEST_SUITE("eval-harness") {
  TEST_CASE("lsc values") {
    CHECK(lsc(1.0, 1.0) == 0.0);
    CHECK(lsc(0.01, 0.5) == doctest::Approx(-2.302585).epsilon(1e-7));
    CHECK(std::fabs(lsc(0.01, 0.5) - (std::log(0.05) - std::log(0.5))) <= 1e-9);
    CHECK(lsc(0.25, 0.8) == doctest::Approx(-1.163151).epsilon(1e-6));
    CHECK(std::isinf(lsc(0.5, 0.0)));
    CHECK(lsc(0.5, 0.0) > 0);
    CHECK(std::isinf(lsc(0.5, 1e-13)));
    CHECK_THROWS_AS(lsc(0.0, 0.5), InvalidArgument);
    CHECK_THROWS_AS(lsc(-0.1, 0.5), InvalidArgument);
    CHECK_THROWS_AS(lsc(1.5, 0.5), InvalidArgument);
    CHECK_THROWS_AS(lsc(NAN, 0.5), InvalidArgument);
  }

  TEST_CASE("lsc monotonicity") {
    Xorshift64Star rng(71);
    for (int i = 0; i < 500; ++i) {
      const double a = rng.uniform(0.001, 1.0), c1 = rng.uniform(0.01, 1.0), c2 = rng.uniform(0.01, 1.0);
      if (c1 < c2) CHECK(lsc(a, c1) > lsc(a, c2));
      const double b = rng.uniform(0.001, 1.0);
      if (a < b && b > kAreaFloor) CHECK(lsc(std::max(a, kAreaFloor), c1) < lsc(b, c1));
      if (a < kAreaFloor && b < kAreaFloor) CHECK(lsc(a, c1) == lsc(b, c1));
    }
  }

  TEST_CASE("tightest box") {
    std::vector<std::uint8_t> m(100, 0);
    m[3 * 10 + 5] = 1;
    CHECK(tightest_bbox(m, 10, 10) == Box{3, 5, 3, 5});
    std::fill(m.begin(), m.end(), 0);
    m[0] = m[99] = 1;
    CHECK(tightest_bbox(m, 10, 10) == Box{0, 0, 9, 9});
    std::fill(m.begin(), m.end(), 0);
    for (std::size_t c = 1; c <= 7; ++c) m[2 * 10 + c] = 1;
    CHECK(tightest_bbox(m, 10, 10) == Box{2, 1, 2, 7});
    std::fill(m.begin(), m.end(), 0);
    CHECK_THROWS_AS(tightest_bbox(m, 10, 10), InvalidArgument);
  }

  TEST_CASE("grid candidates") {
    CHECK(grid_lines(224, 10) == std::vector<std::size_t>{0, 22, 45, 67, 90, 112, 134, 157, 179, 202, 224});
    const auto two = grid_boxes(4, 4, 2);
    CHECK(two.size() == 9);
    CHECK(std::find(two.begin(), two.end(), Box{0, 0, 3, 3}) != two.end());
    CHECK(std::find(two.begin(), two.end(), Box{2, 0, 3, 1}) != two.end());
    CHECK(std::find(two.begin(), two.end(), Box{0, 0, 1, 3}) != two.end());
    CHECK(grid_boxes(10, 10, 10).size() == 55 * 55);
    // Duplicate grid lines on a tiny image collapse.
    CHECK(grid_boxes(3, 3, 10).size() == 6 * 6);
  }

  TEST_CASE("center box") {
    CHECK(center_box(224, 224) == Box{33, 33, 190, 190});
    CHECK(static_cast<double>(center_box(224, 224).area()) / (224.0 * 224.0) == doctest::Approx(0.4976).epsilon(1e-4));
    CHECK(center_box(2, 2) == Box{0, 0, 0, 0});
    const Box b = center_box(100, 50);
    CHECK(b.height() == 71);
    CHECK(b.width() == 35);
  }

  TEST_CASE("max box scores minus log of the full-image confidence") {
    for (const FixtureSpec& spec : default_fixture_specs()) {
      if (spec.kind == FixtureKind::Conv1dText) continue;
      const Fixture f = make_fixture(spec);
      for (const auto& item : f.items) {
        const FixedBoxes fb = fixed_boxes(f.model, item.input, item.label);
        CHECK(fb.max_box.area == 1.0);
        CHECK(std::fabs(fb.max_box.score + std::log(confidence(f.model, item.input, item.label))) <= 1e-9);
      }
    }
  }

  TEST_CASE("constant map scores the full image") {
    Xorshift64Star rng(2);
    const Network net = random_image_classifier(rng, 6);
    const Tensor img = random_tensor(rng, {6, 6, 1}, 0, 1);
    const SaliencyMap map{{6, 6}, std::vector<double>(36, 0.3), std::vector<std::uint8_t>(36, 1), MapKind::Image};
    const LscRecord r = lsc_for_map(net, img, 1, map, 20);
    CHECK(r.box == Box{0, 0, 5, 5});
    CHECK(std::fabs(r.score + std::log(confidence(net, img, 1))) <= 1e-9);
    CHECK(r.threshold == doctest::Approx(0.3 / 20));
  }

  TEST_CASE("single threshold keeps only the maximum") {
    Xorshift64Star rng(3);
    const Network net = random_image_classifier(rng, 6);
    const Tensor img = random_tensor(rng, {6, 6, 1}, 0, 1);
    SaliencyMap map{{6, 6}, std::vector<double>(36, 0.0), std::vector<std::uint8_t>(36, 0), MapKind::Image};
    for (std::size_t i = 0; i < 36; ++i) map.scores[i] = 0.01 * static_cast<double>(i % 7);
    map.scores[2 * 6 + 3] = 5.0;
    const LscRecord r = lsc_for_map(net, img, 0, map, 1);
    CHECK(r.box == Box{2, 3, 2, 3});
    CHECK(r.threshold == 5.0);
  }

  TEST_CASE("empty map is degenerate") {
    Xorshift64Star rng(4);
    const Network net = random_image_classifier(rng, 4);
    const Tensor img = random_tensor(rng, {4, 4, 1}, 0, 1);
    const SaliencyMap map{{4, 4}, std::vector<double>(16, 0.0), std::vector<std::uint8_t>(16, 0), MapKind::Image};
    const LscRecord r = lsc_for_map(net, img, 0, map);
    CHECK(r.degenerate);
    CHECK(r.box == Box{0, 0, 3, 3});
  }

  TEST_CASE("stub model: scores reduce to the clamped area") {
    const Network stub = constant_confidence_model({10, 10, 1});
    const Tensor img({10, 10, 1}, std::vector<float>(100, 0.5f));
    SaliencyMap map{{10, 10}, std::vector<double>(100, 0.0), std::vector<std::uint8_t>(100, 0), MapKind::Image};
    for (std::size_t r = 4; r < 7; ++r)
      for (std::size_t c = 1; c < 4; ++c) map.scores[r * 10 + c] = 1.0;
    const LscRecord m = lsc_for_map(stub, img, 0, map);
    CHECK(m.box == Box{4, 1, 6, 3});
    CHECK(std::fabs(m.score - std::log(0.09)) <= 1e-9);

    const LscRecord o = optbox(stub, img, 0);
    CHECK(o.box == Box{0, 0, 0, 0});
    CHECK(o.area == doctest::Approx(0.01));
    CHECK(std::fabs(o.score - std::log(0.05)) <= 1e-9);
    CHECK(o.score == doctest::Approx(-2.995732).epsilon(1e-7));
  }

  TEST_CASE("optbox never loses to the max box or an on-grid center box") {
    Xorshift64Star rng(9);
    for (int i = 0; i < 6; ++i) {
      const Network net = random_image_classifier(rng, 10);
      const Tensor img = random_tensor(rng, {10, 10, 1}, 0, 1);
      const std::size_t label = rng.below(3);
      const LscRecord o = optbox(net, img, label);
      const FixedBoxes fb = fixed_boxes(net, img, label);
      CHECK(o.score <= fb.max_box.score);
      CHECK(o.score <= fb.center_box.score);
    }
    for (const Tensor& img : fixture_images()) {
      const Fixture f = make_fixture(img.shape()[0] == 8 ? FixtureSpec{11, FixtureKind::DenseMnistLike, 2}
                                                         : FixtureSpec{23, FixtureKind::ConvImage, 2});
      const std::size_t label = argmax(predict(f.model, img).data());
      CHECK(optbox(f.model, img, label).score <= fixed_boxes(f.model, img, label).max_box.score);
    }
  }

  TEST_CASE("win rate") {
    const std::vector<MethodScore> two = {{"i1", "A", -1}, {"i2", "A", -2}, {"i1", "B", -1}, {"i2", "B", -1}};
    auto w = win_rate(two);
    CHECK(w["A"] == 100.0);
    CHECK(w["B"] == 50.0);
    const std::vector<MethodScore> one = {{"i1", "A", 3}, {"i2", "A", -2}};
    CHECK(win_rate(one)["A"] == 100.0);
    const std::vector<MethodScore> eq = {{"i1", "A", 1}, {"i1", "B", 1}, {"i1", "C", 1}};
    w = win_rate(eq);
    CHECK(w["A"] == 100.0);
    CHECK(w["B"] == 100.0);
    CHECK(w["C"] == 100.0);
  }

  TEST_CASE("win rate properties") {
    Xorshift64Star rng(10);
    for (int t = 0; t < 50; ++t) {
      std::vector<MethodScore> s;
      for (int i = 0; i < 8; ++i) {
        const std::string item = "i" + std::to_string(i);
        const double a = std::round(rng.uniform(-3, 3));
        s.push_back({item, "A", a});
        s.push_back({item, "B", a - std::round(rng.uniform(0, 2))});  // B pointwise <= A
        s.push_back({item, "C", std::round(rng.uniform(-3, 3))});
      }
      const auto w = win_rate(s);
      for (const auto& [m, pct] : w) {
        CHECK(pct >= 0.0);
        CHECK(pct <= 100.0);
      }
      CHECK(w.at("B") >= w.at("A"));
    }
  }

  TEST_CASE("quantiles") {
    CHECK(quantile({3, 1, 2}, 0.5) == 2.0);
    CHECK(quantile({1, 2, 3, 4}, 0.25) == 1.75);
    CHECK(quantile({5}, 0.75) == 5.0);
  }
}
