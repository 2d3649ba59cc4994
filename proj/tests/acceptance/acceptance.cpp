// One PASS/FAIL line per acceptance criterion; exit status 1 if any fails.
#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <string>

#include "minmask/attribution.hpp"
#include "minmask/experiment.hpp"
#include "minmask/fixtures.hpp"
#include "minmask/lsc.hpp"
#include "minmask/smtlib.hpp"
#include "minmask/solver.hpp"
#include "support/golden.hpp"
#include "support/oracles.hpp"
#include "support/tempdir.hpp"

using namespace minmask;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

/// One fixture item with the settings the command line would use for it.
struct Case {
  std::string id;
  Network net;
  Tensor x;
  std::size_t label;
  std::size_t output;
  std::size_t grid;
  std::size_t k;
  bool image;
};

std::vector<Case> fixture_cases() {
  std::vector<Case> out;
  for (const FixtureSpec& spec : default_fixture_specs()) {
    const Fixture f = make_fixture(spec);
    const bool text = spec.kind == FixtureKind::Conv1dText;
    for (const auto& item : f.items)
      out.push_back({item.id, f.model, item.input, item.label, output_for_label(f.model, item.label),
                     text ? kDefaultTextGridSize : kDefaultGridSize, text ? kDefaultTextK : kDefaultImageK, !text});
  }
  return out;
}

const std::vector<Case>& cases() {
  static const std::vector<Case> c = fixture_cases();
  return c;
}

TopKSelection selection(const Case& c, std::size_t k) {
  return top_k_positive(first_layer_attribution(c.net, c.x, c.output), k);
}

Outcome solver_oracle() {
  Xorshift64Star rng(2024);
  int exact = 0;
  for (int i = 0; i < 200; ++i) {
    const MaskProblem p = random_mask_problem(rng, 16, 8);
    const MaskSolution a = solve_min(p), b = brute_force(p);
    exact += a.status == b.status && a.objective == b.objective && a.assignment == b.assignment;
  }
  return {exact == 200, std::to_string(exact) + "/200 exact"};
}

Outcome ig_completeness() {
  Xorshift64Star rng(4096);
  double worst = 0.0;
  for (int i = 0; i < 20; ++i) {
    const Network net = i % 2 ? random_mlp(rng, {6, 8, 5, 3}) : random_conv2d_net(rng);
    const Tensor x = random_tensor(rng, net.input_shape(), -1, 1);
    const std::size_t out = rng.below(element_count(net.output_shape()));
    AttributionConfig cfg;
    cfg.steps = 256;
    const Tensor ig = integrated_gradients(net, x, out, cfg);
    double sum = 0.0;
    for (float v : ig.data()) sum += v;
    const double delta = oracle::forward(net, oracle::to_double(x))[out] -
                         oracle::forward(net, std::vector<double>(x.size(), 0.0))[out];
    worst = std::max(worst, std::fabs(sum - delta) / (1e-2 * std::max(1.0, std::fabs(delta))));
  }
  double linear_err = 0.0;
  for (int i = 0; i < 20; ++i) {
    Dense d{5, 2, std::vector<float>(10), std::vector<float>(2)};
    for (auto& w : d.weights) w = static_cast<float>(rng.uniform(-2, 2));
    for (auto& b : d.biases) b = static_cast<float>(rng.uniform(-1, 1));
    const Network net({5}, {d});
    const Tensor x = random_tensor(rng, {5}, -1, 1);
    AttributionConfig cfg;
    cfg.steps = 1;
    const Tensor ig = integrated_gradients(net, x, 1, cfg);
    double sum = 0.0;
    for (float v : ig.data()) sum += v;
    const double delta = oracle::forward(net, oracle::to_double(x))[1] - static_cast<double>(d.biases[1]);
    linear_err = std::max(linear_err, std::fabs(sum - delta));
  }
  char buf[128];
  std::snprintf(buf, sizeof buf, "worst relu error %.3g of tolerance, linear error %.3g", worst, linear_err);
  return {worst <= 1.0 && linear_err <= 1e-6, buf};
}

Outcome gradient_fd() {
  Xorshift64Star rng(8);
  std::size_t checked = 0, bad = 0;
  for (int i = 0; i < 20; ++i) {
    const Network net = i % 4 == 0   ? random_mlp(rng, {5, 7, 3}, Softmax{})
                        : i % 4 == 1 ? random_mlp(rng, {4, 6, 6, 2}, Sigmoid{})
                        : i % 4 == 2 ? random_conv2d_net(rng)
                                     : random_conv1d_net(rng);
    const Tensor x = random_tensor(rng, net.input_shape(), -1, 1);
    const std::size_t out = rng.below(element_count(net.output_shape()));
    const Tensor g = gradient(net, x, out);
    const auto fd = oracle::fd_gradient(net, x, out, 1e-3);
    const auto fd_half = oracle::fd_gradient(net, x, out, 5e-4);
    for (std::size_t j = 0; j < g.size(); ++j) {
      if (std::fabs(fd[j] - fd_half[j]) > 1e-4 * std::max(1.0, std::fabs(fd[j]))) continue;
      if (std::fabs(fd[j]) <= 1e-6 && std::fabs(g[j]) <= 1e-6) continue;
      ++checked;
      bad += std::fabs(g[j] - fd[j]) > 1e-3 * std::max(std::fabs(fd[j]), 1e-3);
    }
  }
  return {bad == 0 && checked > 0, std::to_string(checked - bad) + "/" + std::to_string(checked) + " entries within 1e-3"};
}

Outcome encoding_consistency() {
  Xorshift64Star rng(50);
  double worst = 0.0;
  for (const Case& c : cases()) {
    const MaskProblem p = build_partial_encoding(c.net, c.x, selection(c, c.k), 0.5, c.grid);
    const auto x = oracle::to_double(c.x);
    const auto o = oracle::first_preactivations(c.net, x);
    for (int t = 0; t < 50; ++t) {
      std::vector<std::uint8_t> bits(p.variables.size());
      for (auto& b : bits) b = static_cast<std::uint8_t>(rng.below(2));
      const auto mask = expand_to_input(p, bits);
      auto masked = x;
      for (std::size_t i = 0; i < masked.size(); ++i)
        if (!mask[i]) masked[i] = 0.0;
      const auto pre = oracle::first_preactivations(c.net, masked);
      for (const LinearConstraint& lc : p.constraints) {
        const double want = pre[*lc.neuron] - p.gamma * o[*lc.neuron];
        worst = std::max(worst, std::fabs(constraint_value(lc, bits) - want));
      }
    }
  }
  char buf[96];
  std::snprintf(buf, sizeof buf, "max |LHS - forward| = %.3g over %zu items", worst, cases().size());
  return {worst <= 1e-5, buf};
}

Outcome full_mask_feasible() {
  std::size_t ok = 0, total = 0;
  for (const Case& c : cases()) {
    const auto sel = selection(c, c.k);
    for (double gamma : {0.0, 0.5, 0.9}) {
      ++total;
      if (sel.empty()) continue;
      const MaskProblem p = build_partial_encoding(c.net, c.x, sel, gamma, c.grid);
      ok += verify(p, std::vector<std::uint8_t>(p.variables.size(), 1));
    }
  }
  return {ok == total, std::to_string(ok) + "/" + std::to_string(total) + " encodings"};
}

Outcome monotonicity() {
  std::size_t ok = 0;
  for (const Case& c : cases()) {
    const auto attr = first_layer_attribution(c.net, c.x, c.output);
    const auto all = top_k_positive(attr, attr.neuron_count());
    bool good = !all.empty();
    std::size_t prev = 0;
    for (double gamma : {0.0, 0.5, 0.9}) {
      const MaskSolution s = solve_min(build_partial_encoding(c.net, c.x, all, gamma, c.grid));
      good = good && s.status == SolveStatus::Sat && *s.objective >= prev;
      if (s.objective) prev = *s.objective;
    }
    prev = 0;
    for (std::size_t k : {std::size_t{4}, std::size_t{8}, all.indices.size()}) {
      const MaskSolution s = solve_min(build_partial_encoding(c.net, c.x, top_k_positive(attr, k), 0.0, c.grid));
      good = good && s.status == SolveStatus::Sat && *s.objective >= prev;
      if (s.objective) prev = *s.objective;
    }
    ok += good;
  }
  return {ok == cases().size(), std::to_string(ok) + "/" + std::to_string(cases().size()) + " items monotone"};
}

Outcome sparsity_dominance() {
  std::size_t ok = 0, strict = 0;
  double smug_sum = 0.0, base_sum = 0.0;
  for (const Case& c : cases()) {
    ExplainOptions opt;
    opt.k = c.k;
    opt.grid_size = c.grid;
    const Explanation e = explain(c.net, c.x, c.label, opt);
    const double s = sparsity(e.smug), b = sparsity(e.smug_base);
    ok += s <= b;
    strict += s < b;
    smug_sum += s;
    base_sum += b;
  }
  char buf[128];
  const double n = static_cast<double>(cases().size());
  std::snprintf(buf, sizeof buf, "%zu/%zu items, %zu strict, mean %.3f vs %.3f", ok, cases().size(), strict,
                smug_sum / n, base_sum / n);
  return {ok == cases().size() && strict > 0, buf};
}

Outcome lsc_analytic() {
  bool good = lsc(1, 1) == 0.0 && std::fabs(lsc(0.01, 0.5) - (-2.302585)) <= 1e-6 &&
              std::fabs(lsc(0.01, 0.5) - (std::log(0.05) - std::log(0.5))) <= 1e-9;
  double worst = 0.0;
  for (const Case& c : cases()) {
    if (!c.image) continue;
    const double score = fixed_boxes(c.net, c.x, c.label).max_box.score;
    worst = std::max(worst, std::fabs(score + std::log(confidence(c.net, c.x, c.label))));
  }
  char buf[96];
  std::snprintf(buf, sizeof buf, "closed forms hold; max |MaxBox + ln c_full| = %.3g", worst);
  return {good && worst <= 1e-9, buf};
}

Outcome optbox_dominance() {
  std::size_t ok = 0, images = 0;
  for (const Case& c : cases()) {
    if (!c.image) continue;
    ++images;
    ok += optbox(c.net, c.x, c.label).score <= fixed_boxes(c.net, c.x, c.label).max_box.score;
  }
  const Network stub = constant_confidence_model({10, 10, 1});
  const LscRecord r = optbox(stub, Tensor({10, 10, 1}, std::vector<float>(100, 0.5f)), 0);
  const bool stub_ok = r.box == Box{0, 0, 0, 0} && std::fabs(r.score - std::log(0.05)) <= 1e-9;
  return {ok == images && stub_ok, std::to_string(ok) + "/" + std::to_string(images) + " images; stub box " +
                                       to_string(r.box) + " score " + format_real(r.score)};
}

Outcome full_encoding() {
  const auto start = std::chrono::steady_clock::now();
  const Fixture f = make_fixture({11, FixtureKind::DenseMnistLike, 2});
  std::size_t ok = 0, total = 0;
  std::string sizes;
  for (std::size_t grid : {std::size_t{4}, std::size_t{2}}) {
    for (const auto& item : f.items) {
      ++total;
      const MaskProblem p = build_full_encoding(f.model, item.input, item.label, grid);
      if (p.variables.size() > 16) continue;
      const MaskSolution s = enumerate_full(p);
      if (s.status != SolveStatus::Sat || !verify(p, s.assignment)) continue;
      const Tensor masked = apply_mask(item.input, expand_to_input(p, s.assignment));
      ok += argmax(predict(f.model, masked).data()) == item.label;
      if (item.id == f.items[0].id) sizes += " grid " + std::to_string(grid) + ": " + std::to_string(*s.objective) + "/" +
                                             std::to_string(p.variables.size()) + " cells";
    }
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  char buf[64];
  std::snprintf(buf, sizeof buf, " in %.2f s", secs);
  return {ok == total && secs < 60.0, std::to_string(ok) + "/" + std::to_string(total) + " verified;" + sizes + buf};
}

Outcome golden_smt() {
  const std::pair<const char*, MaskProblem> docs[] = {{"two_vars.smt2", golden::two_vars()},
                                                      {"empty.smt2", golden::empty()},
                                                      {"published_five.smt2", published_instance()}};
  int same = 0;
  for (const auto& [name, p] : docs) {
    try {
      same += emit_smtlib(p) == golden::read(name);
    } catch (const std::exception&) {
    }
  }
  return {same == 3, std::to_string(same) + "/3 byte-identical"};
}

int run(const std::string& args) {
  const std::string cmd = std::string(MINMASK_CLI) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

Outcome end_to_end() {
  TempDir dir("acceptance");
  const std::string d = dir.path().string();
  if (run("fixtures --out-dir " + d + "/fx") != 0) return {false, "fixture generation failed"};
  std::size_t same = 0, total = 0;
  for (const char* kind : {"dense-mnist-like", "conv-image", "conv1d-text"}) {
    const std::string fx = d + "/fx/" + kind;
    const std::string common = "evaluate --model " + fx + "/model.json --input-dir " + fx + "/inputs --annotations " + fx +
                               "/annotations.csv --out-dir ";
    if (run(common + d + "/" + kind + "-1 --jobs 1") != 0 || run(common + d + "/" + kind + "-2 --jobs 4") != 0)
      return {false, std::string("evaluate failed on ") + kind};
    for (const char* csv : {"records.csv", "aggregate.csv"}) {
      ++total;
      same += read_file(d + "/" + kind + "-1/" + csv) == read_file(d + "/" + kind + "-2/" + csv);
    }
  }
  return {same == total, std::to_string(same) + "/" + std::to_string(total) + " CSV reports identical"};
}

}  // namespace

int main() {
  const std::pair<const char*, std::function<Outcome()>> criteria[] = {
      {"solver matches brute force on 200 random problems", solver_oracle},
      {"IG completeness", ig_completeness},
      {"gradient vs central differences", gradient_fd},
      {"encoding consistency with masked forward", encoding_consistency},
      {"full-mask feasibility", full_mask_feasible},
      {"monotonicity in gamma and k", monotonicity},
      {"sparsity dominance over the unminimized mask", sparsity_dominance},
      {"LSC closed forms and MaxBox", lsc_analytic},
      {"OptBox dominance and stub gaming", optbox_dominance},
      {"whole-network encoding at tiny scale", full_encoding},
      {"golden SMT-LIB documents", golden_smt},
      {"end-to-end report determinism", end_to_end},
  };
  int failed = 0, n = 0;
  for (const auto& [name, check] : criteria) {
    ++n;
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    failed += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << " " << n << " " << name << ": " << o.detail << "\n";
  }
  return failed == 0 ? 0 : 1;
}
