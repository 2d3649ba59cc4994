#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "minmask/lsc.hpp"
#include "minmask/mask_problem.hpp"
#include "minmask/model_io.hpp"
#include "minmask/network.hpp"
#include "minmask/saliency.hpp"
#include "minmask/solver.hpp"

namespace minmask {

inline const std::vector<std::string> kAllMethods = {"smug",   "smug-base", "ig-input", "groundtruth",
                                                     "centerbox", "maxbox", "optbox"};

struct ExplainOptions {
  std::size_t k = kDefaultImageK;
  double gamma = kDefaultGamma;
  std::size_t grid_size = kDefaultGridSize;
  std::size_t ig_steps = kDefaultIgSteps;
  std::uint64_t budget_ms = 0;
  std::string solver_cmd;  // external solver template; internal solver when empty
};

struct Explanation {
  std::size_t output_index = 0;  // network output the attribution follows
  TopKSelection selection;
  MaskProblem problem;
  MaskSolution solution;
  SaliencyMap smug;       // SMUG_base map when the solver gave no answer
  SaliencyMap smug_base;
  bool fallback = false;  // smug holds the SMUG_base map
  std::string status;     // sat / unsat / unknown / empty-selection
};

/// Output entry followed for `label`: 0 for single-output networks, the label otherwise.
std::size_t output_for_label(const Network& net, std::size_t label);

/// Attribution, top-k selection, partial encoding, solve, and scored maps.
/// An empty selection or a solver without an answer yields the SMUG_base map.
Explanation explain(const Network& net, const Tensor& x, std::size_t label, const ExplainOptions& options);

/// Per-pixel (or per-token) Integrated Gradients on the input against a
/// black baseline; channels summed, negative totals clipped to 0.
SaliencyMap ig_input_map(const Network& net, const Tensor& x, std::size_t label, std::size_t steps);

struct Item {
  std::string id;
  Tensor input;
  std::vector<std::string> tokens;  // text items only
  bool is_image() const noexcept { return input.rank() == 3; }
};

/// `<stem>.tnsr` files; a sibling `<stem>.tokens` makes a text item.
Item load_item(const std::filesystem::path& tensor_path);
std::vector<Item> load_item_dir(const std::filesystem::path& dir);

struct ExperimentConfig {
  std::filesystem::path model;
  std::vector<std::filesystem::path> inputs;
  std::optional<std::filesystem::path> input_dir;
  std::optional<std::filesystem::path> annotations;
  std::vector<std::string> methods = kAllMethods;
  ExplainOptions explain;
  std::size_t thresholds = kDefaultThresholds;
  std::filesystem::path out_dir = "report";
  std::size_t jobs = 0;          // 0: one per hardware thread
  bool record_timing = false;    // solver_ms column (wall clock, not reproducible)
  bool render = false;           // saliency images / HTML per item

  /// Throws InvalidArgument on k = 0, gamma outside [0, 1), no thresholds or an unknown method.
  void validate() const;
};

struct ReportRow {
  std::string item_id;
  std::string method;
  std::optional<double> lsc;
  std::optional<double> area;
  std::optional<double> confidence;
  std::optional<double> threshold;
  std::optional<double> sparsity;
  std::optional<std::size_t> mask_bits;
  std::string solver_status;
  std::optional<double> solver_ms;
  bool degenerate = false;
};

struct ItemFailure {
  std::string item_id;
  std::string method;
  std::string message;
};

struct MethodSummary {
  std::string method;
  std::size_t scored = 0;  // rows with an LSC value
  std::optional<double> lsc_q25, lsc_median, lsc_q75;
  std::optional<double> win_pct;
  std::optional<double> sparsity_mean;
  std::size_t fallbacks = 0;
};

struct ExperimentReport {
  std::vector<ReportRow> rows;  // sorted by item id, then method order
  std::vector<ItemFailure> failures;
  std::vector<MethodSummary> summary;
};

/// Row for a saliency-map method: sparsity always, LSC (best threshold) for images.
ReportRow map_record(const Network& net, const Item& item, std::size_t label, const std::string& method,
                     const SaliencyMap& map, std::size_t thresholds);

/// Row for the smug method of an explanation.
ReportRow smug_record(const Network& net, const Item& item, std::size_t label, const Explanation& ex,
                      std::size_t thresholds, bool with_timing);

/// Label to explain when no annotation gives one: argmax, or p >= 0.5 for a single sigmoid output.
std::size_t predicted_label(const Network& net, const Tensor& x);

/// Writes rescaled PGM + overlay PPM (images) or HTML (text) as <dir>/<id>.<method>.*
void render_map(const SaliencyMap& map, const Item& item, const std::filesystem::path& dir, const std::string& method);

/// Runs every requested method on a single item. Failures are appended, never thrown.
std::vector<ReportRow> evaluate_item(const Network& net, const Item& item, const AnnotationRecord* annotation,
                                     const ExperimentConfig& cfg, std::vector<ItemFailure>& failures);

std::vector<MethodSummary> summarize(const std::vector<ReportRow>& rows, const std::vector<std::string>& methods);

/// Loads everything, evaluates items on a worker pool and writes
/// records.csv, aggregate.csv, failures.csv and summary.json to cfg.out_dir.
ExperimentReport run_experiment(const ExperimentConfig& cfg);

std::string records_csv(const std::vector<ReportRow>& rows, bool with_timing);
std::string aggregate_csv(const std::vector<MethodSummary>& summary);

struct SweepConfig {
  ExperimentConfig base;
  std::vector<std::size_t> ks;
  std::vector<double> gammas;
};

struct SweepRow {
  std::string item_id;
  std::size_t k = 0;
  double gamma = 0.0;
  std::string status;
  std::optional<std::size_t> mask_bits;
  double sparsity = 0.0;
  std::uint64_t nodes = 0;
};

/// Mask size and sparsity over a k x gamma grid; writes sweep.csv.
std::vector<SweepRow> run_sweep(const SweepConfig& cfg);
std::string sweep_csv(const std::vector<SweepRow>& rows);

/// Shortest round-trip decimal; "inf" / "-inf" / "nan" for non-finite values.
std::string format_real(double value);

}  // namespace minmask
