#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "minmask/errors.hpp"
#include "minmask/experiment.hpp"
#include "minmask/fixtures.hpp"
#include "minmask/model_io.hpp"
#include "minmask/smtlib.hpp"
#include "minmask/solver.hpp"

namespace mm = minmask;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Options {
  std::string model;
  std::vector<std::string> inputs;
  std::string input_dir;
  std::string annotations;
  std::vector<std::size_t> ks;
  std::vector<double> gammas;
  std::optional<std::size_t> grid;
  std::size_t ig_steps = mm::kDefaultIgSteps;
  std::uint64_t budget_ms = 0;
  std::size_t thresholds = mm::kDefaultThresholds;
  std::vector<std::string> methods;
  std::string out_dir = "report";
  std::string solver_cmd;
  std::optional<std::size_t> label;
  std::size_t jobs = 0;
  bool timing = false;
  bool render = false;
  bool full = false;
  bool brute = false;
  std::string smt_file;
  std::string out_file;
  std::string kind;
  std::optional<std::uint64_t> seed;
};

void add_model(CLI::App* cmd, Options& o) { cmd->add_option("--model", o.model, "model JSON file")->required(); }

void add_encoding(CLI::App* cmd, Options& o, bool list_k) {
  if (list_k) {
    cmd->add_option("--k", o.ks, "top-k values (comma separated)")->delimiter(',');
    cmd->add_option("--gamma", o.gammas, "gamma values (comma separated)")->delimiter(',');
  } else {
    cmd->add_option("--k", o.ks, "number of first-layer neurons kept")->expected(1);
    cmd->add_option("--gamma", o.gammas, "activation retention factor in [0, 1)")->expected(1);
  }
  cmd->add_option("--grid", o.grid, "mask cell size (pixels or tokens)")->check(CLI::PositiveNumber);
  cmd->add_option("--ig-steps", o.ig_steps, "Integrated Gradients steps")->check(CLI::PositiveNumber);
}

void add_solver(CLI::App* cmd, Options& o) {
  cmd->add_option("--budget-ms", o.budget_ms, "solver time budget, 0 = unlimited");
  cmd->add_option("--solver-cmd", o.solver_cmd, "external solver command; {file} is replaced by the .smt2 path");
}

mm::ExplainOptions explain_options(const Options& o, bool text) {
  mm::ExplainOptions e;
  e.k = o.ks.empty() ? (text ? mm::kDefaultTextK : mm::kDefaultImageK) : o.ks.front();
  e.gamma = o.gammas.empty() ? mm::kDefaultGamma : o.gammas.front();
  e.grid_size = o.grid.value_or(text ? mm::kDefaultTextGridSize : mm::kDefaultGridSize);
  e.ig_steps = o.ig_steps;
  e.budget_ms = o.budget_ms;
  e.solver_cmd = o.solver_cmd;
  return e;
}

mm::ExperimentConfig experiment_config(const Options& o) {
  mm::ExperimentConfig cfg;
  cfg.model = o.model;
  for (const auto& p : o.inputs) cfg.inputs.emplace_back(p);
  if (!o.input_dir.empty()) cfg.input_dir = o.input_dir;
  if (cfg.inputs.empty() && !cfg.input_dir) throw UsageError("give --input or --input-dir");
  if (!o.annotations.empty()) cfg.annotations = o.annotations;
  if (!o.methods.empty()) cfg.methods = o.methods;
  cfg.thresholds = o.thresholds;
  cfg.out_dir = o.out_dir;
  cfg.jobs = o.jobs;
  cfg.record_timing = o.timing;
  cfg.render = o.render;
  return cfg;
}

/// The model's input layout decides the image/text default for k.
bool text_model(const mm::Network& net) { return net.input_shape().size() != 3; }

std::size_t resolve_label(const Options& o, const mm::Network& net, const mm::Item& item) {
  if (o.label) return *o.label;
  if (!o.annotations.empty())
    for (const auto& a : mm::load_annotations(o.annotations))
      if (a.item_id == item.id) return a.label;
  return mm::predicted_label(net, item.input);
}

mm::Item single_item(const Options& o) {
  if (o.inputs.size() != 1) throw UsageError("give exactly one --input");
  return mm::load_item(o.inputs.front());
}

int cmd_explain(const Options& o) {
  const mm::Network net = mm::load_model(o.model);
  const mm::Item item = single_item(o);
  const std::size_t label = resolve_label(o, net, item);
  const mm::Explanation ex = mm::explain(net, item.input, label, explain_options(o, text_model(net)));

  const std::filesystem::path dir = o.out_dir;
  std::filesystem::create_directories(dir);
  mm::render_map(ex.smug, item, dir, "smug");
  mm::render_map(ex.smug_base, item, dir, "smug-base");
  if (!ex.selection.empty()) mm::write_file(dir / (item.id + ".smt2"), mm::emit_smtlib(ex.problem));

  std::vector<mm::ReportRow> rows;
  rows.push_back(mm::smug_record(net, item, label, ex, o.thresholds, o.timing));
  rows.push_back(mm::map_record(net, item, label, "smug-base", ex.smug_base, o.thresholds));
  const std::string csv = mm::records_csv(rows, o.timing);
  mm::write_file(dir / (item.id + ".csv"), csv);
  std::cout << csv;
  return 0;
}

int cmd_evaluate(const Options& o) {
  mm::ExperimentConfig cfg = experiment_config(o);
  const bool text = text_model(mm::load_model(cfg.model));
  cfg.explain = explain_options(o, text);
  const mm::ExperimentReport report = mm::run_experiment(cfg);
  std::cout << mm::aggregate_csv(report.summary);
  for (const auto& f : report.failures) std::cerr << "failed: " << f.item_id << " " << f.method << ": " << f.message << "\n";
  return report.failures.empty() ? 0 : 2;
}

int cmd_emit(const Options& o) {
  const mm::Network net = mm::load_model(o.model);
  const mm::Item item = single_item(o);
  const std::size_t label = resolve_label(o, net, item);
  mm::MaskProblem problem;
  if (o.full) {
    problem = mm::build_full_encoding(net, item.input, label, explain_options(o, text_model(net)).grid_size);
  } else {
    const mm::ExplainOptions e = explain_options(o, text_model(net));
    const std::size_t out = mm::output_for_label(net, label);
    const auto sel = mm::top_k_positive(mm::first_layer_attribution(net, item.input, out, e.ig_steps), e.k);
    problem = mm::build_partial_encoding(net, item.input, sel, e.gamma, e.grid_size);
  }
  const std::string doc = mm::emit_smtlib(problem);
  if (o.out_file.empty())
    std::cout << doc;
  else
    mm::write_file(o.out_file, doc);
  return 0;
}

std::string objective_term(std::size_t n) {
  if (n == 0) return "0";
  if (n == 1) return "m_0";
  std::string s = "(+";
  for (std::size_t i = 0; i < n; ++i) s += " m_" + std::to_string(i);
  return s + ")";
}

int cmd_solve(const Options& o) {
  const mm::MaskProblem problem = mm::parse_smtlib_problem(mm::read_file(o.smt_file));
  const mm::MaskSolution sol = !o.solver_cmd.empty() ? mm::solve_external(problem, o.solver_cmd)
                               : o.brute                ? mm::brute_force(problem)
                                                        : mm::solve_min(problem, o.budget_ms);
  std::cout << mm::to_string(sol.status) << "\n";
  if (sol.status == mm::SolveStatus::Sat) {
    std::cout << "(objectives\n (" << objective_term(problem.variables.size()) << " " << *sol.objective << ")\n)\n";
    std::cout << "(model\n";
    for (std::size_t v = 0; v < sol.assignment.size(); ++v)
      std::cout << "  (define-fun m_" << v << " () Int " << int(sol.assignment[v]) << ")\n";
    std::cout << ")\n";
  }
  std::cerr << "nodes " << sol.stats.nodes << "\n";
  return 0;
}

int cmd_sweep(const Options& o) {
  mm::SweepConfig cfg;
  cfg.base = experiment_config(o);
  const bool text = text_model(mm::load_model(cfg.base.model));
  cfg.base.explain = explain_options(o, text);
  cfg.ks = o.ks.empty() ? std::vector<std::size_t>{cfg.base.explain.k} : o.ks;
  cfg.gammas = o.gammas.empty() ? std::vector<double>{0.0, 0.5, 0.9} : o.gammas;
  std::cout << mm::sweep_csv(mm::run_sweep(cfg));
  return 0;
}

int cmd_fixtures(const Options& o) {
  for (mm::FixtureSpec spec : mm::default_fixture_specs()) {
    if (!o.kind.empty() && mm::to_string(spec.kind) != o.kind) continue;
    if (o.seed) spec.seed = *o.seed;
    mm::generate(spec, std::filesystem::path(o.out_dir) / std::string(mm::to_string(spec.kind)));
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Minimal input masks: explain, evaluate and solve"};
  app.require_subcommand(1);
  Options o;

  auto* explain = app.add_subcommand("explain", "explain one input: saliency maps, .smt2 and LSC record");
  add_model(explain, o);
  explain->add_option("--input", o.inputs, "input tensor (.tnsr)")->required()->expected(1);
  explain->add_option("--annotations", o.annotations, "annotation CSV (true labels)");
  explain->add_option("--label", o.label, "label to explain (default: annotation, else prediction)");
  add_encoding(explain, o, false);
  add_solver(explain, o);
  explain->add_option("--thresholds", o.thresholds, "LSC threshold count")->check(CLI::PositiveNumber);
  explain->add_option("--out-dir", o.out_dir, "output directory");
  explain->add_flag("--timing", o.timing, "fill the solver_ms column");

  auto* evaluate = app.add_subcommand("evaluate", "evaluate methods on a set of inputs");
  add_model(evaluate, o);
  evaluate->add_option("--input", o.inputs, "input tensor (repeatable)");
  evaluate->add_option("--input-dir", o.input_dir, "directory of .tnsr inputs");
  evaluate->add_option("--annotations", o.annotations, "annotation CSV");
  add_encoding(evaluate, o, false);
  add_solver(evaluate, o);
  evaluate->add_option("--thresholds", o.thresholds, "LSC threshold count")->check(CLI::PositiveNumber);
  evaluate->add_option("--methods", o.methods, "methods (comma separated)")->delimiter(',');
  evaluate->add_option("--out-dir", o.out_dir, "report directory");
  evaluate->add_option("--jobs", o.jobs, "worker threads, 0 = all cores");
  evaluate->add_flag("--timing", o.timing, "fill the solver_ms column (not reproducible)");
  evaluate->add_flag("--render", o.render, "write saliency images / HTML under <out-dir>/maps");

  auto* emit = app.add_subcommand("emit-smt", "write the mask problem of one input as SMT-LIB v2");
  add_model(emit, o);
  emit->add_option("--input", o.inputs, "input tensor")->required()->expected(1);
  emit->add_option("--annotations", o.annotations, "annotation CSV (true labels)");
  emit->add_option("--label", o.label, "label to explain");
  add_encoding(emit, o, false);
  emit->add_flag("--full", o.full, "whole-network encoding instead of the first-layer one");
  emit->add_option("--out", o.out_file, "output file (default stdout)");

  auto* solve = app.add_subcommand("solve", "solve a linear .smt2 mask problem");
  solve->add_option("file", o.smt_file, "problem file")->required()->check(CLI::ExistingFile);
  add_solver(solve, o);
  solve->add_flag("--brute-force", o.brute, "exhaustive search (at most 24 variables)");

  auto* sweep = app.add_subcommand("sweep", "mask size over a k x gamma grid");
  add_model(sweep, o);
  sweep->add_option("--input", o.inputs, "input tensor (repeatable)");
  sweep->add_option("--input-dir", o.input_dir, "directory of .tnsr inputs");
  sweep->add_option("--annotations", o.annotations, "annotation CSV");
  add_encoding(sweep, o, true);
  add_solver(sweep, o);
  sweep->add_option("--out-dir", o.out_dir, "report directory");
  sweep->add_option("--jobs", o.jobs, "worker threads, 0 = all cores");

  auto* fixtures = app.add_subcommand("fixtures", "generate the synthetic fixture sets");
  fixtures->add_option("--out-dir", o.out_dir, "output directory")->required();
  fixtures->add_option("--kind", o.kind, "only this kind")->check(CLI::IsMember({"dense-mnist-like", "conv-image", "conv1d-text"}));
  fixtures->add_option("--seed", o.seed, "override the default seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    if (*explain) return cmd_explain(o);
    if (*evaluate) return cmd_evaluate(o);
    if (*emit) return cmd_emit(o);
    if (*solve) return cmd_solve(o);
    if (*sweep) return cmd_sweep(o);
    if (*fixtures) return cmd_fixtures(o);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
