#include "minmask/fixtures.hpp"

#include <algorithm>
#include <cmath>

#include "minmask/errors.hpp"
#include "minmask/model_io.hpp"

namespace minmask {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

float draw(Xorshift64Star& rng, double lo, double hi) { return static_cast<float>(rng.uniform(lo, hi)); }

Dense random_dense(Xorshift64Star& rng, std::size_t in, std::size_t out) {
  const double scale = 1.0 / std::sqrt(static_cast<double>(in));
  Dense d{in, out, std::vector<float>(in * out), std::vector<float>(out)};
  for (float& w : d.weights) w = draw(rng, -scale * 1.7, scale * 1.7);
  for (float& b : d.biases) b = draw(rng, -0.2, 0.2);
  return d;
}

std::string item_id(std::string_view prefix, std::size_t i) {
  std::string n = std::to_string(i);
  return std::string(prefix) + "-" + std::string(n.size() < 2 ? 2 - n.size() : 0, '0') + n;
}

void check_margin(const Network& net, const FixtureItem& item) {
  const Tensor out = predict(net, item.input);
  if (out.size() == 1) {
    const bool ok = item.label == 1 ? out[0] > 0.5f : out[0] < 0.5f;
    if (!ok) throw Error("fixture item " + item.id + " is misclassified");
    return;
  }
  for (std::size_t j = 0; j < out.size(); ++j)
    if (j != item.label && !(out[item.label] > out[j]))
      throw Error("fixture item " + item.id + " is not classified as " + std::to_string(item.label));
}

// ---------------------------------------------------------------- dense

Fixture dense_mnist_like(const FixtureSpec& spec) {
  Xorshift64Star rng(spec.seed);
  constexpr std::size_t side = 8, hidden = 8, classes = 4;
  const auto in_quadrant = [](std::size_t q, std::size_t p) {
    const std::size_t r = p / side, c = p % side;
    return r / 4 == q / 2 && c / 4 == q % 2;
  };

  Dense h{side * side, hidden, std::vector<float>(side * side * hidden), std::vector<float>(hidden)};
  for (std::size_t n = 0; n < hidden; ++n) {
    const std::size_t q = n / 2;
    for (std::size_t p = 0; p < side * side; ++p) {
      float w = draw(rng, -0.05, 0.05);
      if (in_quadrant(q, p)) {
        const bool core = n % 2 == 1 && (p / side) % 4 != 0 && (p / side) % 4 != 3;
        w = n % 2 == 0 ? 0.5f : (core ? 0.6f : 0.2f);
      }
      h.weights[n * side * side + p] = w;
    }
    h.biases[n] = n % 2 == 0 ? -1.5f : -1.0f;
  }
  Dense head{hidden, classes, std::vector<float>(hidden * classes), std::vector<float>(classes, 0.0f)};
  for (std::size_t c = 0; c < classes; ++c)
    for (std::size_t n = 0; n < hidden; ++n) head.weights[c * hidden + n] = n / 2 == c ? 1.0f : draw(rng, -0.05, 0.05);

  Fixture fx{spec, Network({side, side, 1}, {Flatten{}, std::move(h), Relu{}, std::move(head), Softmax{}}), {}};
  std::size_t idx = 0;
  for (std::size_t rep = 0; rep < spec.items_per_class; ++rep)
    for (std::size_t c = 0; c < classes; ++c) {
      FixtureItem item{item_id("dense", idx++), random_tensor(rng, {side, side, 1}, 0.0, 0.15)};
      const std::size_t r0 = (c / 2) * 4 + rng.below(2), c0 = (c % 2) * 4 + rng.below(2);
      for (std::size_t r = r0; r < r0 + 3; ++r)
        for (std::size_t q = c0; q < c0 + 3; ++q) item.input.at(r, q, 0) = 1.0f;
      item.label = c;
      item.box = Box{r0, c0, r0 + 2, c0 + 2};
      fx.items.push_back(std::move(item));
    }
  return fx;
}

// ---------------------------------------------------------------- conv image

constexpr std::size_t kStrokes[4][3][3] = {
    {{0, 0, 0}, {1, 1, 1}, {0, 0, 0}},
    {{0, 1, 0}, {0, 1, 0}, {0, 1, 0}},
    {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}},
    {{0, 0, 1}, {0, 1, 0}, {1, 0, 0}},
};

Fixture conv_image(const FixtureSpec& spec) {
  Xorshift64Star rng(spec.seed);
  constexpr std::size_t side = 16, filters = 4, classes = 4, fmap = side - 2;

  Conv2d conv{filters, 3, 3, 1, 1, Padding::Valid, std::vector<float>(filters * 9), std::vector<float>(filters, -4.0f)};
  for (std::size_t f = 0; f < filters; ++f)
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j = 0; j < 3; ++j) conv.kernels[f * 9 + i * 3 + j] = kStrokes[f][i][j] ? 2.0f : -1.0f;

  const std::size_t features = fmap * fmap * filters;
  Dense head{features, classes, std::vector<float>(features * classes), std::vector<float>(classes, 0.0f)};
  for (std::size_t c = 0; c < classes; ++c)
    for (std::size_t r = 0; r < fmap; ++r)
      for (std::size_t q = 0; q < fmap; ++q)
        for (std::size_t f = 0; f < filters; ++f) {
          const bool region = f == c && r / 7 == c / 2 && q / 7 == c % 2;
          head.weights[c * features + (r * fmap + q) * filters + f] = region ? 1.0f : draw(rng, -0.02, 0.02);
        }

  Fixture fx{spec, Network({side, side, 1}, {std::move(conv), Relu{}, Flatten{}, std::move(head), Softmax{}}), {}};
  std::size_t idx = 0;
  for (std::size_t rep = 0; rep < spec.items_per_class; ++rep)
    for (std::size_t c = 0; c < classes; ++c) {
      FixtureItem item{item_id("conv", idx++), random_tensor(rng, {side, side, 1}, 0.0, 0.15)};
      const std::size_t r0 = (c / 2) * 8 + 1 + rng.below(5), c0 = (c % 2) * 8 + 1 + rng.below(5);
      for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 3; ++j)
          if (kStrokes[c][i][j]) item.input.at(r0 + i, c0 + j, 0) = 1.0f;
      item.label = c;
      item.box = Box{r0, c0, r0 + 2, c0 + 2};
      fx.items.push_back(std::move(item));
    }
  return fx;
}

// ---------------------------------------------------------------- conv1d text

constexpr std::string_view kPositiveWords[] = {"crisp", "delicious", "excellent", "fresh", "great", "smooth"};
constexpr std::string_view kNeutralWords[] = {"a",     "and",  "beer", "bottle", "color", "glass",
                                              "head",  "of",   "pour", "taste",  "the",   "with"};

Fixture conv1d_text(const FixtureSpec& spec) {
  Xorshift64Star rng(spec.seed);
  constexpr std::size_t length = 12, dim = 8, filters = 4, width = 3;

  std::vector<double> dir(dim);
  double norm = 0.0;
  for (double& d : dir) {
    d = rng.uniform(-1.0, 1.0);
    norm += d * d;
  }
  for (double& d : dir) d /= std::sqrt(norm);

  const auto embed = [&](bool positive) {
    std::vector<double> e(dim);
    double along = 0.0;
    for (std::size_t i = 0; i < dim; ++i) {
      e[i] = rng.uniform(-0.5, 0.5);
      along += e[i] * dir[i];
    }
    for (std::size_t i = 0; i < dim; ++i) e[i] = positive ? 1.5 * dir[i] + 0.1 * e[i] : e[i] - along * dir[i];
    return e;
  };
  std::vector<std::vector<double>> positive, neutral;
  for (std::size_t i = 0; i < std::size(kPositiveWords); ++i) positive.push_back(embed(true));
  for (std::size_t i = 0; i < std::size(kNeutralWords); ++i) neutral.push_back(embed(false));

  Conv1d conv{filters, width, dim, 1, Padding::Valid, std::vector<float>(filters * width * dim),
              std::vector<float>(filters, -0.8f)};
  for (std::size_t f = 0; f < filters; ++f)
    for (std::size_t t = 0; t < width; ++t)
      for (std::size_t d = 0; d < dim; ++d)
        conv.kernels[(f * width + t) * dim + d] =
            static_cast<float>(dir[d] * (t == f % width ? 1.0 : 0.25) + rng.uniform(-0.02, 0.02));
  const std::size_t features = (length - width + 1) * filters;
  Dense head{features, 1, std::vector<float>(features, 1.0f), std::vector<float>{-1.0f}};

  Fixture fx{spec, Network({length, dim}, {std::move(conv), Relu{}, Flatten{}, std::move(head), Sigmoid{}}), {}};
  const std::size_t count = 2 * spec.items_per_class;
  for (std::size_t idx = 0; idx < count; ++idx) {
    FixtureItem item{item_id("text", idx), Tensor({length, dim})};
    std::size_t a = rng.below(length), b = rng.below(length - 1);
    if (b >= a) ++b;
    item.rationale = {std::min(a, b), std::max(a, b)};
    for (std::size_t p = 0; p < length; ++p) {
      const bool planted = p == a || p == b;
      const std::size_t w = rng.below(planted ? std::size(kPositiveWords) : std::size(kNeutralWords));
      item.tokens.emplace_back(planted ? kPositiveWords[w] : kNeutralWords[w]);
      const auto& e = planted ? positive[w] : neutral[w];
      for (std::size_t d = 0; d < dim; ++d) item.input[p * dim + d] = static_cast<float>(e[d]);
    }
    item.label = 1;
    fx.items.push_back(std::move(item));
  }
  for (const FixtureItem& item : fx.items) {
    Tensor masked = item.input;
    for (std::size_t p : item.rationale)
      for (std::size_t d = 0; d < dim; ++d) masked[p * dim + d] = 0.0f;
    if (!(predict(fx.model, masked)[0] < 0.5f))
      throw Error("fixture item " + item.id + " keeps its label without the planted tokens");
  }
  return fx;
}

}  // namespace

Xorshift64Star::Xorshift64Star(std::uint64_t seed) : state_(splitmix64(seed)) {
  if (state_ == 0) state_ = 0x9E3779B97F4A7C15ull;
}

std::uint64_t Xorshift64Star::next() {
  state_ ^= state_ >> 12;
  state_ ^= state_ << 25;
  state_ ^= state_ >> 27;
  return state_ * 0x2545F4914F6CDD1Dull;
}

double Xorshift64Star::uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

double Xorshift64Star::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

std::size_t Xorshift64Star::below(std::size_t n) {
  if (n == 0) throw InvalidArgument("below(0)");
  return static_cast<std::size_t>(uniform() * static_cast<double>(n));
}

std::string_view to_string(FixtureKind kind) noexcept {
  switch (kind) {
    case FixtureKind::DenseMnistLike:
      return "dense-mnist-like";
    case FixtureKind::ConvImage:
      return "conv-image";
    case FixtureKind::Conv1dText:
      return "conv1d-text";
  }
  return "?";
}

std::optional<FixtureKind> parse_fixture_kind(std::string_view name) {
  for (FixtureKind k : {FixtureKind::DenseMnistLike, FixtureKind::ConvImage, FixtureKind::Conv1dText})
    if (to_string(k) == name) return k;
  return std::nullopt;
}

Fixture make_fixture(const FixtureSpec& spec) {
  if (spec.items_per_class == 0) throw InvalidArgument("items_per_class must be at least 1");
  Fixture fx = [&] {
    switch (spec.kind) {
      case FixtureKind::DenseMnistLike:
        return dense_mnist_like(spec);
      case FixtureKind::ConvImage:
        return conv_image(spec);
      case FixtureKind::Conv1dText:
        return conv1d_text(spec);
    }
    throw InvalidArgument("unknown fixture kind");
  }();
  for (const FixtureItem& item : fx.items) check_margin(fx.model, item);
  return fx;
}

void write_fixture(const Fixture& fixture, const std::filesystem::path& out_dir) {
  const auto inputs = out_dir / "inputs";
  std::filesystem::create_directories(inputs);
  save_model(out_dir / "model.json", fixture.model);
  std::vector<AnnotationRecord> notes;
  for (const FixtureItem& item : fixture.items) {
    if (item.tokens.empty()) {
      save_tensor(inputs / (item.id + ".tnsr"), item.input);
    } else {
      save_tokenized(inputs / (item.id + ".tokens"), inputs / (item.id + ".tnsr"), TokenizedInput{item.tokens, item.input});
    }
    notes.push_back(AnnotationRecord{item.id, item.box, item.rationale, item.label});
  }
  save_annotations(out_dir / "annotations.csv", notes);
}

void generate(const FixtureSpec& spec, const std::filesystem::path& out_dir) { write_fixture(make_fixture(spec), out_dir); }

std::vector<FixtureSpec> default_fixture_specs() {
  return {FixtureSpec{11, FixtureKind::DenseMnistLike, 2}, FixtureSpec{23, FixtureKind::ConvImage, 2},
          FixtureSpec{37, FixtureKind::Conv1dText, 2}};
}

Network constant_confidence_model(const Shape& input_shape, std::size_t classes) {
  if (classes < 2) throw InvalidArgument("constant model needs at least two classes");
  const std::size_t n = element_count(input_shape);
  Dense d{n, classes, std::vector<float>(n * classes, 0.0f), std::vector<float>(classes, 0.0f)};
  d.biases[0] = 100.0f;
  return Network(input_shape, {Flatten{}, std::move(d), Softmax{}});
}

Tensor random_tensor(Xorshift64Star& rng, const Shape& shape, double lo, double hi) {
  Tensor t(shape);
  for (float& v : t.data()) v = draw(rng, lo, hi);
  return t;
}

Network random_mlp(Xorshift64Star& rng, const std::vector<std::size_t>& widths, std::optional<Layer> head) {
  if (widths.size() < 2) throw InvalidArgument("an MLP needs at least input and output widths");
  std::vector<Layer> layers;
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
    if (i > 0) layers.emplace_back(Relu{});
    layers.emplace_back(random_dense(rng, widths[i], widths[i + 1]));
  }
  if (head) layers.push_back(*head);
  return Network({widths.front()}, std::move(layers));
}

Network random_conv2d_net(Xorshift64Star& rng) {
  const std::size_t h = 5 + rng.below(3), w = 5 + rng.below(3), c = 1 + rng.below(2);
  const std::size_t filters = 2 + rng.below(2), stride = 1 + rng.below(2);
  const Padding padding = rng.below(2) ? Padding::Same : Padding::Valid;
  Conv2d conv{filters, 3, 3, c, stride, padding, std::vector<float>(filters * 9 * c), std::vector<float>(filters)};
  const double scale = 1.0 / std::sqrt(9.0 * static_cast<double>(c));
  for (float& k : conv.kernels) k = draw(rng, -1.7 * scale, 1.7 * scale);
  for (float& b : conv.biases) b = draw(rng, -0.2, 0.2);
  Network probe({h, w, c}, {conv});
  const std::size_t features = element_count(probe.output_shape());
  return Network({h, w, c}, {std::move(conv), Relu{}, Flatten{}, random_dense(rng, features, 3)});
}

Network random_conv1d_net(Xorshift64Star& rng) {
  const std::size_t len = 6 + rng.below(4), dim = 2 + rng.below(3);
  const std::size_t filters = 2 + rng.below(3), width = 2 + rng.below(2), stride = 1 + rng.below(2);
  const Padding padding = rng.below(2) ? Padding::Same : Padding::Valid;
  Conv1d conv{filters, width, dim, stride, padding, std::vector<float>(filters * width * dim), std::vector<float>(filters)};
  const double scale = 1.0 / std::sqrt(static_cast<double>(width * dim));
  for (float& k : conv.kernels) k = draw(rng, -1.7 * scale, 1.7 * scale);
  for (float& b : conv.biases) b = draw(rng, -0.2, 0.2);
  Network probe({len, dim}, {conv});
  const std::size_t features = element_count(probe.output_shape());
  return Network({len, dim}, {std::move(conv), Relu{}, Flatten{}, random_dense(rng, features, 2)});
}

MaskProblem random_mask_problem(Xorshift64Star& rng, std::size_t max_vars, std::size_t max_constraints) {
  MaskProblem p;
  const std::size_t vars = rng.below(max_vars + 1);
  const std::size_t cons = 1 + rng.below(max_constraints);
  p.input_shape = {std::max<std::size_t>(vars, 1)};
  for (std::size_t v = 0; v < vars; ++v) p.variables.push_back(MaskVariable{v, v, v, 0, {v}});
  for (std::size_t c = 0; c < cons; ++c) {
    LinearConstraint lc;
    for (std::size_t v = 0; v < vars; ++v)
      if (rng.uniform() < 0.6) lc.terms.push_back({v, rng.uniform(-10.0, 10.0)});
    lc.constant = rng.uniform(-5.0, 5.0);
    p.constraints.push_back(std::move(lc));
  }
  return p;
}

MaskProblem published_instance() {
  struct Term {
    std::size_t row, col;
    double coef;
  };
  struct Row {
    std::vector<Term> terms;
    double constant;
  };
  const std::vector<Row> rows = {
      {{{132, 132, 99.53}, {132, 136, -58.37}, {132, 140, 4.88}, {136, 132, -141.25}, {136, 136, 639.97},
        {136, 140, 10.29}, {140, 132, -9.66}, {140, 136, 20.30}, {140, 140, -25.19}},
       -0.58},
      {{{120, 150, -270.67}, {142, 144, 101.23}, {113, 124, 10.38}, {122, 121, 207.98}, {121, 121, 640.64},
        {121, 126, -100.72}, {121, 165, 25.06}, {121, 156, -75.49}, {112, 154, 75.47}},
       -0.36},
      {{{144, 132, 2925.38}, {144, 136, -395.09}, {148, 132, 81.61}, {148, 136, -999.88}, {152, 132, -82.70},
        {152, 136, 17.08}},
       0.21},
      {{{76, 80, -20.87}, {76, 84, 8.40}, {80, 80, -122.72}, {80, 84, 929.71}, {84, 80, 85.52}, {84, 84, 138.99}},
       -0.01},
      {{{168, 148, 231.34}, {168, 152, 722.71}, {172, 148, 80.18}, {172, 152, 663.96}, {176, 148, 5.37},
        {176, 152, 4.63}},
       0.12},
  };
  std::vector<std::pair<std::size_t, std::size_t>> cells;
  for (const Row& r : rows)
    for (const Term& t : r.terms) cells.emplace_back(t.row, t.col);
  std::sort(cells.begin(), cells.end());
  cells.erase(std::unique(cells.begin(), cells.end()), cells.end());

  MaskProblem p;
  p.input_shape = {224, 224, 3};
  p.grid_size = 4;
  for (std::size_t v = 0; v < cells.size(); ++v) p.variables.push_back(MaskVariable{v, v, cells[v].first, cells[v].second, {}});
  for (const Row& r : rows) {
    LinearConstraint c;
    for (const Term& t : r.terms) {
      const auto id = static_cast<std::size_t>(
          std::lower_bound(cells.begin(), cells.end(), std::pair{t.row, t.col}) - cells.begin());
      c.terms.push_back({id, t.coef});
    }
    std::sort(c.terms.begin(), c.terms.end(), [](const LinearTerm& a, const LinearTerm& b) { return a.var < b.var; });
    c.constant = r.constant;
    p.constraints.push_back(std::move(c));
  }
  return p;
}

}  // namespace minmask
