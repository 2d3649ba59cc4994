#include "minmask/solver.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <limits>
#include <memory>
#include <numeric>
#include <random>

#include "minmask/errors.hpp"
#include "minmask/model_io.hpp"
#include "minmask/smtlib.hpp"

namespace minmask {

std::string_view to_string(SolveStatus status) noexcept {
  switch (status) {
    case SolveStatus::Sat:
      return "sat";
    case SolveStatus::Unsat:
      return "unsat";
    case SolveStatus::Unknown:
      return "unknown";
  }
  return "unknown";
}

namespace {

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point start) {
  return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

struct BudgetExceeded {};

/// Branch-and-bound state shared by both search phases.
class Search {
 public:
  Search(const MaskProblem& problem, std::uint64_t budget_ms)
      : n_(problem.variables.size()),
        constraints_(problem.constraints),
        budget_ms_(budget_ms),
        start_(Clock::now()),
        occurs_(n_) {
    for (std::size_t c = 0; c < constraints_.size(); ++c) {
      std::vector<LinearTerm> positive;
      for (const LinearTerm& t : constraints_[c].terms) {
        occurs_[t.var].push_back({c, t.coef});
        if (t.coef > 0.0) positive.push_back(t);
      }
      std::stable_sort(positive.begin(), positive.end(),
                       [](const LinearTerm& a, const LinearTerm& b) { return a.coef > b.coef; });
      positive_desc_.push_back(std::move(positive));
    }
    reset();
  }

  std::uint64_t nodes() const noexcept { return nodes_; }
  double wall_ms() const { return elapsed_ms(start_); }

  /// Phase 1: minimum cardinality. Returns false if infeasible.
  bool minimize(std::size_t& best_count, std::vector<std::uint8_t>& best) {
    greedy_incumbent(best_count, best);
    reset();
    best_count_ = best_count;
    best_ = best;
    dfs_min();
    best_count = best_count_;
    best = best_;
    return best_count_ <= n_;
  }

  /// Phase 2: lexicographically smallest set of exactly `target` ids.
  std::vector<std::uint8_t> lexicographic(std::size_t target) {
    reset();
    target_ = target;
    found_.clear();
    dfs_lex(0);
    return found_;
  }

  std::size_t best_count_so_far() const noexcept { return best_count_; }
  const std::vector<std::uint8_t>& incumbent() const noexcept { return best_; }

 private:
  struct Occurrence {
    std::size_t constraint;
    double coef;
  };

  void reset() {
    trail_.clear();
    value_.assign(n_, kFree);
    ones_ = 0;
    sum_.assign(constraints_.size(), 0.0);
    free_positive_.assign(constraints_.size(), 0.0);
    for (std::size_t c = 0; c < constraints_.size(); ++c) {
      sum_[c] = constraints_[c].constant;
      for (const LinearTerm& t : constraints_[c].terms)
        if (t.coef > 0.0) free_positive_[c] += t.coef;
    }
  }

  void tick() {
    ++nodes_;
    if (budget_ms_ != 0 && (nodes_ & 255) == 0 && elapsed_ms(start_) > static_cast<double>(budget_ms_))
      throw BudgetExceeded{};
  }

  // Sums are restored from a trail on backtrack so every node sees exactly
  // the values its path produced.
  void assign(std::size_t v, std::uint8_t val) {
    value_[v] = val;
    for (const Occurrence& o : occurs_[v]) {
      trail_.push_back({sum_[o.constraint], free_positive_[o.constraint]});
      if (o.coef > 0.0) free_positive_[o.constraint] -= o.coef;
      if (val) sum_[o.constraint] += o.coef;
    }
    ones_ += val;
  }

  void unassign(std::size_t v) {
    for (auto it = occurs_[v].rbegin(); it != occurs_[v].rend(); ++it) {
      sum_[it->constraint] = trail_.back().first;
      free_positive_[it->constraint] = trail_.back().second;
      trail_.pop_back();
    }
    ones_ -= value_[v];
    value_[v] = kFree;
  }

  /// Exact check in the same summation order as verify().
  bool verified() const {
    std::vector<std::uint8_t> a(n_, 0);
    for (std::size_t v = 0; v < n_; ++v) a[v] = value_[v] == 1 ? 1 : 0;
    for (const LinearConstraint& c : constraints_)
      if (constraint_value(c, a) < kStrictEpsilon) return false;
    return true;
  }

  bool satisfied(std::size_t c) const { return sum_[c] >= kStrictEpsilon; }

  /// Some constraint cannot reach the threshold even with every free
  /// positive-coefficient variable set.
  bool dead_end() const {
    for (std::size_t c = 0; c < constraints_.size(); ++c)
      if (sum_[c] + free_positive_[c] < kStrictEpsilon) return true;
    return false;
  }

  /// Lower bound on additional ones: each violated constraint alone needs at
  /// least this many of its largest free positive coefficients.
  std::size_t ones_needed() const {
    std::size_t bound = 0;
    for (std::size_t c = 0; c < constraints_.size(); ++c) {
      if (satisfied(c)) continue;
      double s = sum_[c];
      std::size_t r = 0;
      for (const LinearTerm& t : positive_desc_[c]) {
        if (value_[t.var] != kFree) continue;
        s += t.coef;
        ++r;
        if (s >= kStrictEpsilon) break;
      }
      bound = std::max(bound, r);
    }
    return bound;
  }

  bool all_satisfied() const {
    for (std::size_t c = 0; c < constraints_.size(); ++c)
      if (!satisfied(c)) return false;
    return true;
  }

  void record(std::vector<std::uint8_t>& out) const {
    out.assign(n_, 0);
    for (std::size_t v = 0; v < n_; ++v) out[v] = value_[v] == 1 ? 1 : 0;
  }

  // Greedy repair from the empty mask; falls back to the full mask.
  void greedy_incumbent(std::size_t& best_count, std::vector<std::uint8_t>& best) {
    best_count = n_ + 1;
    best.clear();
    reset();
    while (!all_satisfied()) {
      std::size_t pick = n_;
      double pick_score = 0.0;
      for (std::size_t v = 0; v < n_; ++v) {
        if (value_[v] != kFree) continue;
        double score = 0.0;
        for (const Occurrence& o : occurs_[v])
          if (!satisfied(o.constraint) && o.coef > 0.0) score += o.coef;
        if (score > pick_score) {
          pick_score = score;
          pick = v;
        }
      }
      if (pick == n_) break;
      assign(pick, 1);
    }
    if (all_satisfied() && verified()) {
      best_count = ones_;
      record(best);
      return;
    }
    reset();
    for (std::size_t v = 0; v < n_; ++v) assign(v, 1);
    if (verified()) {
      best_count = n_;
      record(best);
    }
  }

  void dfs_min() {
    tick();
    if (dead_end()) return;
    if (all_satisfied() && verified()) {
      if (ones_ < best_count_) {
        best_count_ = ones_;
        record(best_);
      }
      return;
    }
    if (ones_ + ones_needed() >= best_count_) return;
    // Branch on the free variable that repairs the most violated weight.
    std::size_t pick = n_;
    double pick_score = 0.0;
    for (std::size_t v = 0; v < n_; ++v) {
      if (value_[v] != kFree) continue;
      double score = 0.0;
      for (const Occurrence& o : occurs_[v])
        if (!satisfied(o.constraint) && o.coef > 0.0) score += o.coef;
      if (score > pick_score) {
        pick_score = score;
        pick = v;
      }
    }
    if (pick == n_) return;
    assign(pick, 1);
    dfs_min();
    unassign(pick);
    assign(pick, 0);
    dfs_min();
    unassign(pick);
  }

  bool dfs_lex(std::size_t next) {
    tick();
    if (dead_end()) return false;
    if (all_satisfied() && verified()) {
      record(found_);
      return true;
    }
    if (ones_ + ones_needed() > target_ || next == n_) return false;
    for (std::uint8_t val : {std::uint8_t{1}, std::uint8_t{0}}) {
      assign(next, val);
      const bool done = dfs_lex(next + 1);
      unassign(next);
      if (done) return true;
    }
    return false;
  }

  static constexpr std::uint8_t kFree = 2;

  std::size_t n_;
  const std::vector<LinearConstraint>& constraints_;
  std::uint64_t budget_ms_;
  Clock::time_point start_;
  std::vector<std::vector<Occurrence>> occurs_;
  std::vector<std::vector<LinearTerm>> positive_desc_;

  std::vector<std::uint8_t> value_;
  std::size_t ones_ = 0;
  std::vector<double> sum_;
  std::vector<double> free_positive_;
  std::vector<std::pair<double, double>> trail_;
  std::uint64_t nodes_ = 0;

  std::size_t best_count_ = 0;
  std::vector<std::uint8_t> best_;
  std::size_t target_ = 0;
  std::vector<std::uint8_t> found_;
};

void require_linear(const MaskProblem& problem) {
  if (!problem.is_linear())
    throw UnsupportedProblem("whole-network encodings are non-linear; use enumerate_full or an external solver");
  problem.validate();
}

MaskSolution sat_solution(std::vector<std::uint8_t> assignment) {
  MaskSolution sol;
  sol.status = SolveStatus::Sat;
  sol.objective = static_cast<std::size_t>(std::accumulate(assignment.begin(), assignment.end(), std::size_t{0}));
  sol.assignment = std::move(assignment);
  return sol;
}

/// Visits assignments in cardinality-then-lexicographic order of their set
/// ids until `accept` returns true.
template <class Accept>
MaskSolution enumerate(std::size_t n, Accept accept) {
  const auto start = Clock::now();
  std::uint64_t visited = 0;
  std::vector<std::uint8_t> assignment(n, 0);
  for (std::size_t k = 0; k <= n; ++k) {
    std::vector<std::size_t> pick(k);
    std::iota(pick.begin(), pick.end(), std::size_t{0});
    while (true) {
      std::fill(assignment.begin(), assignment.end(), std::uint8_t{0});
      for (std::size_t v : pick) assignment[v] = 1;
      ++visited;
      if (accept(assignment)) {
        MaskSolution sol = sat_solution(assignment);
        sol.stats.nodes = visited;
        sol.stats.wall_ms = elapsed_ms(start);
        return sol;
      }
      // Next k-combination in lexicographic order.
      std::size_t i = k;
      while (i > 0 && pick[i - 1] == n - k + i - 1) --i;
      if (i == 0) break;
      ++pick[i - 1];
      for (std::size_t j = i; j < k; ++j) pick[j] = pick[j - 1] + 1;
    }
  }
  MaskSolution sol;
  sol.status = SolveStatus::Unsat;
  sol.stats.nodes = visited;
  sol.stats.wall_ms = elapsed_ms(start);
  return sol;
}

bool full_mask_keeps_label(const MaskProblem& problem, std::span<const std::uint8_t> assignment) {
  const FullEncoding& full = *problem.full;
  const Tensor masked = apply_mask(full.input, expand_to_input(problem, assignment));
  const Tensor logits = predict(full.logits, masked);
  for (std::size_t l = 0; l < logits.size(); ++l)
    if (l != full.label && !(logits[full.label] > logits[l])) return false;
  return true;
}

}  // namespace

MaskSolution solve_min(const MaskProblem& problem, std::uint64_t budget_ms) {
  require_linear(problem);
  Search search(problem, budget_ms);
  MaskSolution sol;
  std::size_t best_count = 0;
  std::vector<std::uint8_t> best;
  try {
    if (!search.minimize(best_count, best)) {
      sol.status = SolveStatus::Unsat;
    } else {
      sol = sat_solution(search.lexicographic(best_count));
    }
  } catch (const BudgetExceeded&) {
    sol = MaskSolution{};
    sol.status = SolveStatus::Unknown;
    if (search.best_count_so_far() <= problem.variables.size() && !search.incumbent().empty())
      sol.stats.incumbent = search.incumbent();
  }
  sol.stats.nodes = search.nodes();
  sol.stats.wall_ms = search.wall_ms();
  return sol;
}

MaskSolution brute_force(const MaskProblem& problem, std::size_t var_limit) {
  require_linear(problem);
  if (problem.variables.size() > var_limit)
    throw InvalidArgument("brute force limited to " + std::to_string(var_limit) + " variables, problem has " +
                          std::to_string(problem.variables.size()));
  return enumerate(problem.variables.size(), [&](const std::vector<std::uint8_t>& a) {
    for (const LinearConstraint& c : problem.constraints)
      if (constraint_value(c, a) < kStrictEpsilon) return false;
    return true;
  });
}

bool verify(const MaskProblem& problem, std::span<const std::uint8_t> assignment) {
  if (assignment.size() != problem.variables.size())
    throw InvalidArgument("assignment covers " + std::to_string(assignment.size()) + " of " +
                          std::to_string(problem.variables.size()) + " variables");
  for (std::uint8_t b : assignment)
    if (b > 1) throw InvalidArgument("assignment values must be 0 or 1");
  if (!problem.is_linear()) return full_mask_keeps_label(problem, assignment);
  for (const LinearConstraint& c : problem.constraints)
    if (constraint_value(c, assignment) < kStrictEpsilon) return false;
  return true;
}

MaskSolution enumerate_full(const MaskProblem& problem, std::size_t var_limit) {
  if (problem.is_linear()) throw InvalidArgument("enumerate_full expects a whole-network encoding");
  if (problem.variables.size() > var_limit)
    throw InvalidArgument("enumeration limited to " + std::to_string(var_limit) + " variables, problem has " +
                          std::to_string(problem.variables.size()));
  return enumerate(problem.variables.size(),
                   [&](const std::vector<std::uint8_t>& a) { return full_mask_keeps_label(problem, a); });
}

MaskSolution solve_external(const MaskProblem& problem, const std::string& command_template) {
  namespace fs = std::filesystem;
  const auto start = Clock::now();
  std::random_device rd;
  const fs::path file = fs::temp_directory_path() / ("minmask-" + std::to_string(rd()) + "-" + std::to_string(rd()) + ".smt2");
  write_file(file, emit_smtlib(problem));
  std::string command = command_template;
  if (const auto pos = command.find("{file}"); pos != std::string::npos)
    command.replace(pos, 6, file.string());
  else
    command += " " + file.string();

  std::string output;
  int status = -1;
  {
    std::unique_ptr<FILE, int (*)(FILE*)> pipe(popen(command.c_str(), "r"), pclose);
    if (!pipe) {
      fs::remove(file);
      throw IoError("cannot run solver command: " + command);
    }
    std::array<char, 4096> buf{};
    std::size_t got = 0;
    while ((got = std::fread(buf.data(), 1, buf.size(), pipe.get())) > 0) output.append(buf.data(), got);
    status = pclose(pipe.release());
  }
  std::error_code ignored;
  fs::remove(file, ignored);
  if (output.empty()) throw IoError("solver command produced no output (exit status " + std::to_string(status) + ")");
  MaskSolution sol = parse_solver_output(output, problem);
  sol.stats.wall_ms = elapsed_ms(start);
  return sol;
}

}  // namespace minmask
