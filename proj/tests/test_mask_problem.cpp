#include <doctest.h>

#include <cmath>
#include <set>

#include "minmask/attribution.hpp"
#include "minmask/errors.hpp"
#include "minmask/fixtures.hpp"
#include "minmask/mask_problem.hpp"
#include "minmask/solver.hpp"
#include "support/oracles.hpp"

using namespace minmask;

namespace {

TopKSelection select(std::vector<std::size_t> ids) {
  TopKSelection s;
  s.k = ids.size();
  s.indices = ids;
  s.scores.assign(ids.size(), 1.0);
  return s;
}

std::vector<std::uint8_t> random_bits(Xorshift64Star& rng, std::size_t n) {
  std::vector<std::uint8_t> bits(n);
  for (auto& b : bits) b = static_cast<std::uint8_t>(rng.below(2));
  return bits;
}

/// (W1 (x . M) + b1)_i - gamma * o_i straight from the double reference forward.
double oracle_lhs(const Network& net, const Tensor& x, const MaskProblem& p, std::size_t c,
                  const std::vector<std::uint8_t>& assignment) {
  const auto input_mask = expand_to_input(p, assignment);
  std::vector<double> masked = oracle::to_double(x);
  for (std::size_t i = 0; i < masked.size(); ++i)
    if (!input_mask[i]) masked[i] = 0.0;
  const std::size_t n = *p.constraints[c].neuron;
  const double o = oracle::first_preactivations(net, oracle::to_double(x))[n];
  return oracle::first_preactivations(net, masked)[n] - p.gamma * o;
}

}  // namespace

TEST_SUITE("mask-constraints") {
  TEST_CASE("grid cells for images, sequences and vectors") {
    const auto img = grid_cells({5, 5, 2}, 4);
    REQUIRE(img.size() == 4);
    CHECK(img[0].coords.size() == 32);
    CHECK(img[1].coords.size() == 8);  // 4 x 1 border cell, 2 channels
    CHECK(img[3].coords.size() == 2);
    CHECK(img[1].row == 0);
    CHECK(img[1].col == 4);
    const auto seq = grid_cells({5, 3}, 1);
    REQUIRE(seq.size() == 5);
    CHECK(seq[2].coords == std::vector<std::size_t>{6, 7, 8});
    const auto flat = grid_cells({5}, 2);
    REQUIRE(flat.size() == 3);
    CHECK(flat[2].coords == std::vector<std::size_t>{4});
    std::set<std::size_t> all;
    for (const auto& c : grid_cells({7, 6, 3}, 4))
      for (std::size_t p : c.coords) CHECK(all.insert(p).second);
    CHECK(all.size() == 7 * 6 * 3);
  }

  TEST_CASE("partial encoding of a single dense neuron") {
    const Network net({2}, {Dense{2, 1, {2, -1}, {0.5f}}, Relu{}, Dense{1, 1, {1}, {0}}});
    const Tensor x({2}, {1, 1});
    MaskProblem p = build_partial_encoding(net, x, select({0}), 0.0, 1);
    REQUIRE(p.variables.size() == 2);
    REQUIRE(p.constraints.size() == 1);
    const auto& c = p.constraints[0];
    REQUIRE(c.terms.size() == 2);
    CHECK(c.terms[0].var == 0);
    CHECK(c.terms[0].coef == 2.0);
    CHECK(c.terms[1].var == 1);
    CHECK(c.terms[1].coef == -1.0);
    CHECK(c.constant == 0.5);
    CHECK(p.original_activations[0] == 1.5);

    p = build_partial_encoding(net, x, select({0}), 0.5, 1);
    CHECK(p.constraints[0].constant == doctest::Approx(0.5 - 0.75));
  }

  TEST_CASE("partial encoding rejects an empty selection") {
    const Network net({2}, {Dense{2, 1, {2, -1}, {0.5f}}, Relu{}, Dense{1, 1, {1}, {0}}});
    CHECK_THROWS_AS(build_partial_encoding(net, Tensor({2}, {1, 1}), TopKSelection{}, 0.0, 1), InvalidArgument);
  }

  TEST_CASE("unused cells are omitted and zero coefficients dropped") {
    // Neuron reads only x0; x1 has a zero weight, x2 is zero-valued.
    const Network net({3}, {Dense{3, 2, {1, 0, 1, 0, 0, 0}, {0.1f, 0}}, Relu{}, Dense{2, 1, {1, 1}, {0}}});
    const MaskProblem p = build_partial_encoding(net, Tensor({3}, {1, 5, 0}), select({0}), 0.0, 1);
    REQUIRE(p.variables.size() == 1);
    CHECK(p.variables[0].coords == std::vector<std::size_t>{0});
    const auto mask = expand_to_input(p, std::vector<std::uint8_t>{1});
    CHECK(mask == std::vector<std::uint8_t>{1, 0, 0});
  }

  TEST_CASE("conv coefficients equal the affine map on indicator masks") {
    Xorshift64Star rng(6);
    for (int i = 0; i < 8; ++i) {
      const Network net = random_conv2d_net(rng);
      const Tensor x = random_tensor(rng, net.input_shape(), -1, 1);
      const std::size_t width = element_count(net.layer_shape(net.first_affine_index()));
      std::vector<std::size_t> ids;
      for (std::size_t n = 0; n < width; n += 3) ids.push_back(n);
      const MaskProblem p = build_partial_encoding(net, x, select(ids), 0.0, 4);
      std::vector<std::uint8_t> none(p.variables.size(), 0);
      for (std::size_t c = 0; c < p.constraints.size(); ++c) {
        const double base = oracle_lhs(net, x, p, c, none);
        for (const LinearTerm& t : p.constraints[c].terms) {
          auto one = none;
          one[t.var] = 1;
          CHECK(t.coef == doctest::Approx(oracle_lhs(net, x, p, c, one) - base).epsilon(1e-9));
        }
      }
    }
  }

  TEST_CASE("constraint values agree with the masked forward pass") {
    Xorshift64Star rng(15);
    for (int i = 0; i < 12; ++i) {
      const Network net = i % 3 == 0 ? random_mlp(rng, {9, 6, 2}) : i % 3 == 1 ? random_conv2d_net(rng) : random_conv1d_net(rng);
      const Tensor x = random_tensor(rng, net.input_shape(), -1, 1);
      const auto attr = first_layer_attribution(net, x, 0, 16);
      const auto sel = top_k_positive(attr, 6);
      if (sel.empty()) continue;
      for (double gamma : {0.0, 0.5, 0.9}) {
        const MaskProblem p = build_partial_encoding(net, x, sel, gamma, 1 + rng.below(3));
        for (int trial = 0; trial < 20; ++trial) {
          const auto bits = random_bits(rng, p.variables.size());
          for (std::size_t c = 0; c < p.constraints.size(); ++c)
            CHECK(std::fabs(constraint_value(p.constraints[c], bits) - oracle_lhs(net, x, p, c, bits)) <= 1e-5);
        }
      }
    }
  }

  TEST_CASE("the full mask satisfies every top-k encoding") {
    Xorshift64Star rng(19);
    for (int i = 0; i < 20; ++i) {
      const Network net = i % 2 ? random_mlp(rng, {8, 10, 3}) : random_conv2d_net(rng);
      const Tensor x = random_tensor(rng, net.input_shape(), -1, 1);
      const auto sel = top_k_positive(first_layer_attribution(net, x, 0, 16), 100);
      if (sel.empty()) continue;
      for (double gamma : {0.0, 0.5, 0.9}) {
        const MaskProblem p = build_partial_encoding(net, x, sel, gamma, 2);
        CHECK(verify(p, std::vector<std::uint8_t>(p.variables.size(), 1)));
      }
    }
  }

  TEST_CASE("grid 1 on a single channel gives one variable per pixel") {
    Conv2d conv{1, 2, 2, 1, 1, Padding::Valid, {1, 1, 1, 1}, {0}};
    const Network net({3, 3, 1}, {conv, Relu{}, Flatten{}, Dense{4, 1, {1, 1, 1, 1}, {0}}});
    const Tensor x({3, 3, 1}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
    const MaskProblem p = build_partial_encoding(net, x, select({0, 1, 2, 3}), 0.0, 1);
    CHECK(p.variables.size() == 9);
    for (const auto& v : p.variables) CHECK(v.coords.size() == 1);
    // Neuron 0 reads pixels 0, 1, 3, 4 with weight 1: coefficients are the pixel values.
    const auto& c = p.constraints[0];
    REQUIRE(c.terms.size() == 4);
    CHECK(c.terms[0].coef == 1.0);
    CHECK(c.terms[1].coef == 2.0);
    CHECK(c.terms[2].coef == 4.0);
    CHECK(c.terms[3].coef == 5.0);
  }

  TEST_CASE("full encoding of an identity logit net") {
    const Network net({2}, {Dense{2, 2, {1, 0, 0, 1}, {0, 0}}});
    const MaskProblem p = build_full_encoding(net, Tensor({2}, {1, 0.2f}), 0, 1);
    CHECK_FALSE(p.is_linear());
    const MaskSolution s = enumerate_full(p);
    REQUIRE(s.status == SolveStatus::Sat);
    CHECK(s.assignment == std::vector<std::uint8_t>{1, 0});
    CHECK(verify(p, s.assignment));
    CHECK_FALSE(verify(p, std::vector<std::uint8_t>{0, 0}));
  }

  TEST_CASE("full encoding is unsat when the label never wins") {
    const Network net({2}, {Dense{2, 2, {-1, -1, 0, 0}, {-1, 0}}});
    const MaskProblem p = build_full_encoding(net, Tensor({2}, {1, 1}), 0, 1);
    CHECK(enumerate_full(p).status == SolveStatus::Unsat);
  }

  TEST_CASE("full mask satisfies the full encoding of the predicted label") {
    Xorshift64Star rng(33);
    for (int i = 0; i < 10; ++i) {
      const Network net = random_mlp(rng, {6, 5, 4, 3}, Softmax{});
      const Tensor x = random_tensor(rng, {6}, -1, 1);
      const std::size_t label = argmax(predict(net, x).data());
      const MaskProblem p = build_full_encoding(net, x, label, 1);
      CHECK(verify(p, std::vector<std::uint8_t>(p.variables.size(), 1)));
    }
  }

  TEST_CASE("full encoding rejects interior sigmoids and a trailing relu") {
    const Network bad({2}, {Dense{2, 2, {1, 0, 0, 1}, {0, 0}}, Sigmoid{}, Dense{2, 2, {1, 0, 0, 1}, {0, 0}}});
    CHECK_THROWS_AS(build_full_encoding(bad, Tensor({2}, {1, 1}), 0, 1), UnsupportedModel);
    const Network ends_relu({2}, {Dense{2, 2, {1, 0, 0, 1}, {0, 0}}, Relu{}});
    CHECK_THROWS_AS(build_full_encoding(ends_relu, Tensor({2}, {1, 1}), 0, 1), UnsupportedModel);
  }

  TEST_CASE("validate catches malformed problems") {
    MaskProblem p;
    p.variables.push_back(MaskVariable{0});
    p.constraints.push_back(LinearConstraint{{{0, 1.0}, {0, 2.0}}, 0.0});
    CHECK_THROWS_AS(p.validate(), InvalidArgument);
    p.constraints[0].terms = {{1, 1.0}};
    CHECK_THROWS_AS(p.validate(), InvalidArgument);
    p.constraints[0].terms = {{0, NAN}};
    CHECK_THROWS_AS(p.validate(), InvalidArgument);
    p.constraints[0].terms = {{0, 1.0}};
    p.gamma = 1.0;
    CHECK_THROWS_AS(p.validate(), InvalidArgument);
  }
}
