#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "minmask/mask_problem.hpp"
#include "minmask/network.hpp"
#include "minmask/tensor.hpp"

namespace minmask {

/// xorshift64* (Vigna 2014): shifts 12, 25, 27, multiplier 0x2545F4914F6CDD1D.
/// The state is seeded through one splitmix64 step so that seed 0 is usable.
/// Real draws take the top 53 bits, so streams are identical on every platform.
class Xorshift64Star {
 public:
  explicit Xorshift64Star(std::uint64_t seed);

  std::uint64_t next();
  double uniform();                        // [0, 1)
  double uniform(double lo, double hi);    // [lo, hi)
  std::size_t below(std::size_t n);        // [0, n)

 private:
  std::uint64_t state_;
};

enum class FixtureKind { DenseMnistLike, ConvImage, Conv1dText };

std::string_view to_string(FixtureKind kind) noexcept;
std::optional<FixtureKind> parse_fixture_kind(std::string_view name);

// dense-mnist-like: 8x8x1 -> flatten -> dense 8 -> relu -> dense 4 -> softmax.
//   Class c is a bright 3x3 patch in quadrant c; hidden units 2c, 2c+1 read that
//   quadrant and feed logit c.
// conv-image: 16x16x1 -> conv 3x3 x4 -> relu -> flatten -> dense 4 -> softmax.
//   Filter c matches a 3x3 stroke (horizontal, vertical, diagonal, anti-diagonal);
//   class c is that stroke planted in quadrant c.
// conv1d-text: 12 tokens x 8 dims -> conv1d width 3 x4 -> relu -> flatten ->
//   dense 1 -> sigmoid. Positive words lie along one embedding direction the
//   kernels detect; each item plants two of them.
struct FixtureSpec {
  std::uint64_t seed = 1;
  FixtureKind kind = FixtureKind::DenseMnistLike;
  std::size_t items_per_class = 2;
};

struct FixtureItem {
  std::string id;
  Tensor input;
  std::vector<std::string> tokens;
  std::size_t label = 0;
  std::optional<Box> box;               // planted patch (images)
  std::vector<std::size_t> rationale;   // planted token positions (text)
};

struct Fixture {
  FixtureSpec spec;
  Network model;
  std::vector<FixtureItem> items;
};

/// Builds the model and its planted inputs, then checks them with forward
/// passes: every item must be classified as its label with a positive
/// margin, and zeroing the planted tokens of a text item must push the
/// sigmoid below 0.5. Throws Error when a check fails.
Fixture make_fixture(const FixtureSpec& spec);

/// model.json, inputs/<id>.tnsr (+ <id>.tokens for text) and annotations.csv.
void write_fixture(const Fixture& fixture, const std::filesystem::path& out_dir);

void generate(const FixtureSpec& spec, const std::filesystem::path& out_dir);

/// The three fixture kinds with their default seeds.
std::vector<FixtureSpec> default_fixture_specs();

/// Network whose softmax output puts (numerically) all mass on class 0 for
/// any input: zero weights, bias 100 on class 0.
Network constant_confidence_model(const Shape& input_shape, std::size_t classes = 2);

Tensor random_tensor(Xorshift64Star& rng, const Shape& shape, double lo, double hi);

/// Dense ReLU network over a flat input; widths = {in, h1, ..., out}.
/// `head` appends a final Softmax or Sigmoid when set.
Network random_mlp(Xorshift64Star& rng, const std::vector<std::size_t>& widths, std::optional<Layer> head = {});

/// Small conv2d (H x W x C) or conv1d (L x D) ReLU networks with a dense head,
/// under a thousand parameters.
Network random_conv2d_net(Xorshift64Star& rng);
Network random_conv1d_net(Xorshift64Star& rng);

/// Random linear problem: 0..max_vars variables, 1..max_constraints
/// constraints, coefficients in [-10, 10], constants in [-5, 5].
MaskProblem random_mask_problem(Xorshift64Star& rng, std::size_t max_vars = 16, std::size_t max_constraints = 8);

/// Five ImageNet constraints (k = 5, gamma = 0, 4 x 4 cells) with their
/// published two-decimal coefficients. Variables are the distinct cells in
/// row-major order; coverage is unknown and left empty.
MaskProblem published_instance();

}  // namespace minmask
