#include "minmask/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <set>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "minmask/errors.hpp"

namespace minmask {

namespace {

bool single_output(const Network& net) { return element_count(net.output_shape()) == 1; }

SaliencyMap empty_map(const Shape& input_shape) {
  const Shape shape = map_shape(input_shape);
  const std::size_t n = element_count(shape);
  return SaliencyMap{shape, std::vector<double>(n, 0.0), std::vector<std::uint8_t>(n, 0),
                     shape.size() == 2 ? MapKind::Image : MapKind::Text};
}

Explanation explain_from(const Network& net, const Tensor& x, std::size_t output_index, const AttributionVector& attr,
                         const ExplainOptions& options) {
  Explanation ex;
  ex.output_index = output_index;
  ex.selection = top_k_positive(attr, options.k);
  if (ex.selection.empty()) {
    ex.smug = ex.smug_base = empty_map(x.shape());
    ex.fallback = true;
    ex.status = "empty-selection";
    return ex;
  }
  const Shape shape = map_shape(x.shape());
  const AffineMap affine = first_layer_affine(net, x.shape());
  const auto fields = receptive_fields(affine, ex.selection.indices);
  ex.smug_base = smug_base_mask(shape, ex.selection, fields);
  ex.problem = build_partial_encoding(net, x, ex.selection, options.gamma, options.grid_size);
  ex.solution = options.solver_cmd.empty() ? solve_min(ex.problem, options.budget_ms)
                                           : solve_external(ex.problem, options.solver_cmd);
  ex.status = std::string(to_string(ex.solution.status));
  if (ex.solution.status == SolveStatus::Sat) {
    const auto input_mask = expand_to_input(ex.problem, ex.solution.assignment);
    ex.smug = score_mask(shape, to_map_mask(x.shape(), input_mask), ex.selection, fields);
  } else {
    ex.smug = ex.smug_base;
    ex.fallback = true;
  }
  return ex;
}

template <typename Fn>
void parallel_for(std::size_t n, std::size_t jobs, Fn&& fn) {
  if (jobs == 0) jobs = std::max(1u, std::thread::hardware_concurrency());
  jobs = std::min(jobs, n);
  if (jobs <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < jobs; ++t)
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) fn(i);
    });
  for (auto& th : pool) th.join();
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += '"';
    out += ch;
  }
  return out + "\"";
}

template <typename T>
std::string opt(const std::optional<T>& v) {
  if (!v) return "";
  if constexpr (std::is_floating_point_v<T>)
    return format_real(*v);
  else
    return std::to_string(*v);
}

nlohmann::ordered_json json_real(std::optional<double> v) {
  if (!v) return nullptr;
  if (!std::isfinite(*v)) return format_real(*v);
  return *v;
}

std::vector<Item> gather_items(const ExperimentConfig& cfg) {
  std::vector<Item> items;
  for (const auto& p : cfg.inputs) items.push_back(load_item(p));
  if (cfg.input_dir)
    for (Item& it : load_item_dir(*cfg.input_dir)) items.push_back(std::move(it));
  std::sort(items.begin(), items.end(), [](const Item& a, const Item& b) { return a.id < b.id; });
  for (std::size_t i = 1; i < items.size(); ++i)
    if (items[i].id == items[i - 1].id) throw InvalidArgument("duplicate item id '" + items[i].id + "'");
  return items;
}

std::map<std::string, AnnotationRecord> gather_annotations(const ExperimentConfig& cfg, const std::vector<Item>& items) {
  std::map<std::string, AnnotationRecord> out;
  if (!cfg.annotations) return out;
  std::map<std::string, ItemDimensions> dims;
  for (const Item& it : items)
    if (it.is_image()) dims[it.id] = ItemDimensions{it.input.shape()[0], it.input.shape()[1]};
  const auto records = load_annotations(*cfg.annotations, [&](const std::string& id) -> std::optional<ItemDimensions> {
    auto found = dims.find(id);
    if (found == dims.end()) return std::nullopt;
    return found->second;
  });
  for (const auto& r : records) out[r.item_id] = r;
  return out;
}

}  // namespace

std::size_t predicted_label(const Network& net, const Tensor& x) {
  const Tensor out = predict(net, x);
  if (out.size() == 1) return out[0] >= 0.5f ? 1 : 0;
  return argmax(out.data());
}

void render_map(const SaliencyMap& map, const Item& item, const std::filesystem::path& dir, const std::string& method) {
  std::filesystem::create_directories(dir);
  const SaliencyMap vis = rescale_visual(map);
  const std::string stem = item.id + "." + method;
  if (item.is_image()) {
    render_image(vis, dir / (stem + ".pgm"));
    render_overlay(vis, item.input, dir / (stem + ".ppm"));
  } else if (!item.tokens.empty()) {
    render_text(item.tokens, vis, dir / (stem + ".html"));
  }
}

ReportRow map_record(const Network& net, const Item& item, std::size_t label, const std::string& method,
                     const SaliencyMap& map, std::size_t thresholds) {
  ReportRow row{item.id, method};
  row.sparsity = sparsity(map);
  if (item.is_image()) {
    const LscRecord rec = lsc_for_map(net, item.input, label, map, thresholds, method);
    row.lsc = rec.score;
    row.area = rec.area;
    row.confidence = rec.confidence;
    row.threshold = rec.threshold;
    row.degenerate = rec.degenerate;
  }
  return row;
}

ReportRow smug_record(const Network& net, const Item& item, std::size_t label, const Explanation& ex,
                      std::size_t thresholds, bool with_timing) {
  ReportRow row = map_record(net, item, label, "smug", ex.smug, thresholds);
  row.solver_status = ex.status;
  if (ex.solution.objective && !ex.fallback) row.mask_bits = *ex.solution.objective;
  if (with_timing) row.solver_ms = ex.solution.stats.wall_ms;
  return row;
}

std::size_t output_for_label(const Network& net, std::size_t label) { return single_output(net) ? 0 : label; }

Explanation explain(const Network& net, const Tensor& x, std::size_t label, const ExplainOptions& options) {
  const std::size_t out = output_for_label(net, label);
  return explain_from(net, x, out, first_layer_attribution(net, x, out, options.ig_steps), options);
}

SaliencyMap ig_input_map(const Network& net, const Tensor& x, std::size_t label, std::size_t steps) {
  AttributionConfig cfg;
  cfg.steps = steps;
  const Tensor ig = integrated_gradients(net, x, output_for_label(net, label), cfg);
  SaliencyMap map = empty_map(x.shape());
  for (std::size_t p = 0; p < ig.size(); ++p) map.scores[map_coord(x.shape(), p)] += ig[p];
  for (std::size_t i = 0; i < map.size(); ++i) {
    if (!(map.scores[i] > 0.0)) map.scores[i] = 0.0;
    map.mask[i] = map.scores[i] > 0.0 ? 1 : 0;
  }
  return map;
}

Item load_item(const std::filesystem::path& tensor_path) {
  Item item;
  item.id = tensor_path.stem().string();
  std::filesystem::path tokens = tensor_path;
  tokens.replace_extension(".tokens");
  if (std::filesystem::exists(tokens)) {
    TokenizedInput t = load_tokenized(tokens, tensor_path);
    item.tokens = std::move(t.tokens);
    item.input = std::move(t.embeddings);
  } else {
    item.input = load_tensor(tensor_path);
  }
  return item;
}

std::vector<Item> load_item_dir(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw IoError("input directory '" + dir.string() + "' does not exist");
  std::vector<std::filesystem::path> paths;
  for (const auto& entry : std::filesystem::directory_iterator(dir))
    if (entry.is_regular_file() && entry.path().extension() == ".tnsr") paths.push_back(entry.path());
  std::sort(paths.begin(), paths.end());
  std::vector<Item> items;
  for (const auto& p : paths) items.push_back(load_item(p));
  return items;
}

void ExperimentConfig::validate() const {
  if (explain.k == 0) throw InvalidArgument("k must be at least 1");
  if (!(explain.gamma >= 0.0 && explain.gamma < 1.0)) throw InvalidArgument("gamma must lie in [0, 1)");
  if (explain.grid_size == 0) throw InvalidArgument("grid size must be at least 1");
  if (explain.ig_steps == 0) throw InvalidArgument("IG steps must be at least 1");
  if (thresholds == 0) throw InvalidArgument("threshold count must be at least 1");
  for (const auto& m : methods)
    if (std::find(kAllMethods.begin(), kAllMethods.end(), m) == kAllMethods.end())
      throw InvalidArgument("unknown method '" + m + "'");
}

std::vector<ReportRow> evaluate_item(const Network& net, const Item& item, const AnnotationRecord* annotation,
                                     const ExperimentConfig& cfg, std::vector<ItemFailure>& failures) {
  std::vector<ReportRow> rows;
  std::size_t label = 0;
  try {
    if (item.input.shape() != net.input_shape())
      throw ShapeError("input shape " + to_string(item.input.shape()) + " does not match model input " +
                       to_string(net.input_shape()));
    label = annotation ? annotation->label : predicted_label(net, item.input);
  } catch (const std::exception& e) {
    failures.push_back({item.id, "*", e.what()});
    return rows;
  }

  std::optional<Explanation> ex;
  std::optional<FixedBoxes> fixed;
  const auto explanation = [&]() -> const Explanation& {
    if (!ex) ex = explain(net, item.input, label, cfg.explain);
    return *ex;
  };
  const auto map_row = [&](const std::string& method, const SaliencyMap& map) {
    if (cfg.render) render_map(map, item, cfg.out_dir / "maps", method);
    return map_record(net, item, label, method, map, cfg.thresholds);
  };
  const auto box_row = [&](const LscRecord& rec) {
    ReportRow row{item.id, rec.method};
    row.lsc = rec.score;
    row.area = rec.area;
    row.confidence = rec.confidence;
    return row;
  };

  for (const std::string& method : cfg.methods) {
    try {
      if (method == "smug") {
        const Explanation& e = explanation();
        if (cfg.render) render_map(e.smug, item, cfg.out_dir / "maps", method);
        rows.push_back(smug_record(net, item, label, e, cfg.thresholds, cfg.record_timing));
      } else if (method == "smug-base") {
        rows.push_back(map_row(method, explanation().smug_base));
      } else if (method == "ig-input") {
        rows.push_back(map_row(method, ig_input_map(net, item.input, label, cfg.explain.ig_steps)));
      } else if (method == "groundtruth") {
        if (!annotation) throw InvalidArgument("no annotation for item");
        if (item.is_image()) {
          if (!annotation->box) throw InvalidArgument("annotation has no box");
          rows.push_back(box_row(score_box(net, item.input, label, *annotation->box, method)));
        } else {
          ReportRow row{item.id, method};
          const std::size_t n = element_count(map_shape(item.input.shape()));
          std::set<std::size_t> unique(annotation->rationale.begin(), annotation->rationale.end());
          for (std::size_t i : unique)
            if (i >= n) throw InvalidArgument("rationale index " + std::to_string(i) + " out of range");
          row.sparsity = static_cast<double>(unique.size()) / static_cast<double>(n);
          rows.push_back(std::move(row));
        }
      } else if (!item.is_image()) {
        continue;  // box baselines only exist for images
      } else if (method == "maxbox" || method == "centerbox") {
        if (!fixed) fixed = fixed_boxes(net, item.input, label);
        rows.push_back(box_row(method == "maxbox" ? fixed->max_box : fixed->center_box));
      } else if (method == "optbox") {
        rows.push_back(box_row(optbox(net, item.input, label)));
      }
    } catch (const std::exception& e) {
      failures.push_back({item.id, method, e.what()});
    }
  }
  return rows;
}

std::vector<MethodSummary> summarize(const std::vector<ReportRow>& rows, const std::vector<std::string>& methods) {
  std::vector<MethodScore> scores;
  for (const ReportRow& r : rows)
    if (r.lsc) scores.push_back({r.item_id, r.method, *r.lsc});
  const auto wins = win_rate(scores);
  std::vector<MethodSummary> out;
  for (const std::string& m : methods) {
    MethodSummary s{m};
    std::vector<double> lscs, sparse;
    for (const ReportRow& r : rows) {
      if (r.method != m) continue;
      if (r.lsc) lscs.push_back(*r.lsc);
      if (r.sparsity) sparse.push_back(*r.sparsity);
      if (m == "smug" && r.solver_status != "sat") ++s.fallbacks;
    }
    s.scored = lscs.size();
    if (!lscs.empty()) {
      s.lsc_q25 = quantile(lscs, 0.25);
      s.lsc_median = quantile(lscs, 0.5);
      s.lsc_q75 = quantile(lscs, 0.75);
    }
    if (auto w = wins.find(m); w != wins.end()) s.win_pct = w->second;
    if (!sparse.empty()) {
      double total = 0.0;
      for (double v : sparse) total += v;
      s.sparsity_mean = total / static_cast<double>(sparse.size());
    }
    out.push_back(std::move(s));
  }
  return out;
}

std::string records_csv(const std::vector<ReportRow>& rows, bool with_timing) {
  std::ostringstream out;
  out << "item_id,method,lsc,a,c,threshold,sparsity,mask_bits,solver_status,solver_ms\n";
  for (const ReportRow& r : rows) {
    out << csv_field(r.item_id) << ',' << r.method << ',' << opt(r.lsc) << ',' << opt(r.area) << ','
        << opt(r.confidence) << ',' << opt(r.threshold) << ',' << opt(r.sparsity) << ',' << opt(r.mask_bits) << ','
        << r.solver_status << ',' << (with_timing ? opt(r.solver_ms) : std::string()) << '\n';
  }
  return out.str();
}

std::string aggregate_csv(const std::vector<MethodSummary>& summary) {
  std::ostringstream out;
  out << "method,items,lsc_q25,lsc_median,lsc_q75,win_pct,sparsity_mean,fallbacks\n";
  for (const MethodSummary& s : summary)
    out << s.method << ',' << s.scored << ',' << opt(s.lsc_q25) << ',' << opt(s.lsc_median) << ',' << opt(s.lsc_q75)
        << ',' << opt(s.win_pct) << ',' << opt(s.sparsity_mean) << ',' << s.fallbacks << '\n';
  return out.str();
}

ExperimentReport run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  const Network net = load_model(cfg.model);
  const std::vector<Item> items = gather_items(cfg);
  const auto annotations = gather_annotations(cfg, items);

  std::vector<std::vector<ReportRow>> rows(items.size());
  std::vector<std::vector<ItemFailure>> failures(items.size());
  parallel_for(items.size(), cfg.jobs, [&](std::size_t i) {
    auto found = annotations.find(items[i].id);
    rows[i] = evaluate_item(net, items[i], found == annotations.end() ? nullptr : &found->second, cfg, failures[i]);
  });

  ExperimentReport report;
  for (std::size_t i = 0; i < items.size(); ++i) {
    for (auto& r : rows[i]) report.rows.push_back(std::move(r));
    for (auto& f : failures[i]) report.failures.push_back(std::move(f));
  }
  report.summary = summarize(report.rows, cfg.methods);

  std::filesystem::create_directories(cfg.out_dir);
  write_file(cfg.out_dir / "records.csv", records_csv(report.rows, cfg.record_timing));
  write_file(cfg.out_dir / "aggregate.csv", aggregate_csv(report.summary));
  std::ostringstream fail;
  fail << "item_id,method,message\n";
  for (const auto& f : report.failures) fail << csv_field(f.item_id) << ',' << f.method << ',' << csv_field(f.message) << '\n';
  write_file(cfg.out_dir / "failures.csv", fail.str());

  nlohmann::ordered_json doc;
  doc["items"] = items.size();
  doc["records"] = report.rows.size();
  doc["failures"] = report.failures.size();
  doc["config"] = {{"methods", cfg.methods},
                   {"k", cfg.explain.k},
                   {"gamma", cfg.explain.gamma},
                   {"grid", cfg.explain.grid_size},
                   {"ig_steps", cfg.explain.ig_steps},
                   {"budget_ms", cfg.explain.budget_ms},
                   {"thresholds", cfg.thresholds},
                   {"solver", cfg.explain.solver_cmd.empty() ? "internal" : "external"}};
  doc["conventions"] = {
      {"lsc_log", "natural"},
      {"lsc_area_floor", kAreaFloor},
      {"zero_confidence", "confidence <= 1e-12 scores +inf"},
      {"resize", "bilinear, half-pixel centres, clamped at edges"},
      {"centerbox", "sides round(H/sqrt(2)) x round(W/sqrt(2)), offsets floor((H-h)/2), floor((W-w)/2)"},
      {"optbox_grid", kOptBoxGrid},
      {"thresholds", "t_j = max * j / n for j = 1..n, ties keep the smaller threshold"},
      {"groundtruth", "one annotation box per item, scored directly"},
      {"ig", "midpoint rule, alpha_t = (t + 0.5) / steps"},
      {"strict_epsilon", kStrictEpsilon},
      {"solver_fallback", "smug uses the smug-base map when the solver reports unsat or unknown"}};
  nlohmann::ordered_json methods = nlohmann::ordered_json::array();
  for (const MethodSummary& s : report.summary) {
    methods.push_back({{"method", s.method},
                       {"items", s.scored},
                       {"lsc_q25", json_real(s.lsc_q25)},
                       {"lsc_median", json_real(s.lsc_median)},
                       {"lsc_q75", json_real(s.lsc_q75)},
                       {"win_pct", json_real(s.win_pct)},
                       {"sparsity_mean", json_real(s.sparsity_mean)},
                       {"fallbacks", s.fallbacks}});
  }
  doc["methods"] = std::move(methods);
  write_file(cfg.out_dir / "summary.json", doc.dump(2) + "\n");
  return report;
}

std::vector<SweepRow> run_sweep(const SweepConfig& cfg) {
  cfg.base.validate();
  if (cfg.ks.empty() || cfg.gammas.empty()) throw InvalidArgument("sweep needs at least one k and one gamma");
  for (std::size_t k : cfg.ks)
    if (k == 0) throw InvalidArgument("k must be at least 1");
  for (double g : cfg.gammas)
    if (!(g >= 0.0 && g < 1.0)) throw InvalidArgument("gamma must lie in [0, 1)");
  const Network net = load_model(cfg.base.model);
  const std::vector<Item> items = gather_items(cfg.base);
  const auto annotations = gather_annotations(cfg.base, items);

  std::vector<std::vector<SweepRow>> rows(items.size());
  parallel_for(items.size(), cfg.base.jobs, [&](std::size_t i) {
    const Item& item = items[i];
    auto found = annotations.find(item.id);
    const std::size_t label = found != annotations.end() ? found->second.label : predicted_label(net, item.input);
    const std::size_t out = output_for_label(net, label);
    const AttributionVector attr = first_layer_attribution(net, item.input, out, cfg.base.explain.ig_steps);
    for (std::size_t k : cfg.ks)
      for (double g : cfg.gammas) {
        ExplainOptions opts = cfg.base.explain;
        opts.k = k;
        opts.gamma = g;
        const Explanation ex = explain_from(net, item.input, out, attr, opts);
        SweepRow row{item.id, k, g, ex.status};
        if (!ex.fallback) row.mask_bits = ex.solution.objective;
        row.sparsity = sparsity(ex.smug);
        row.nodes = ex.solution.stats.nodes;
        rows[i].push_back(std::move(row));
      }
  });
  std::vector<SweepRow> flat;
  for (auto& r : rows)
    for (auto& x : r) flat.push_back(std::move(x));
  std::filesystem::create_directories(cfg.base.out_dir);
  write_file(cfg.base.out_dir / "sweep.csv", sweep_csv(flat));
  return flat;
}

std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::ostringstream out;
  out << "item_id,k,gamma,solver_status,mask_bits,sparsity,nodes\n";
  for (const SweepRow& r : rows)
    out << csv_field(r.item_id) << ',' << r.k << ',' << format_real(r.gamma) << ',' << r.status << ','
        << opt(r.mask_bits) << ',' << format_real(r.sparsity) << ',' << r.nodes << '\n';
  return out.str();
}

std::string format_real(double value) {
  if (std::isnan(value)) return "nan";
  if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, ptr);
}

}  // namespace minmask
