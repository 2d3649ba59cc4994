#include "minmask/smtlib.hpp"

#include <charconv>
#include <cmath>
#include <map>
#include <sstream>

#include "minmask/errors.hpp"
#include "minmask/sexpr.hpp"

namespace minmask {

std::string smt_decimal(double value) {
  if (!std::isfinite(value)) throw InvalidArgument("cannot render a non-finite value in SMT-LIB");
  if (value == 0.0) return "0.0";
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, std::fabs(value), std::chars_format::scientific, 16);
  (void)ec;
  const std::string_view sci(buf, static_cast<std::size_t>(end - buf));
  const std::size_t e_pos = sci.find('e');
  std::string digits;
  for (char c : sci.substr(0, e_pos))
    if (c != '.') digits += c;
  int exponent = 0;
  const std::string_view exp_text = sci.substr(e_pos + 1);
  std::from_chars(exp_text.data() + (exp_text[0] == '+' ? 1 : 0), exp_text.data() + exp_text.size(), exponent);

  std::string integer, fraction;
  if (exponent >= 0) {
    const std::size_t int_len = static_cast<std::size_t>(exponent) + 1;
    if (int_len >= digits.size()) {
      integer = digits + std::string(int_len - digits.size(), '0');
    } else {
      integer = digits.substr(0, int_len);
      fraction = digits.substr(int_len);
    }
  } else {
    integer = "0";
    fraction = std::string(static_cast<std::size_t>(-exponent - 1), '0') + digits;
  }
  while (!fraction.empty() && fraction.back() == '0') fraction.pop_back();
  if (fraction.empty()) fraction = "0";
  const std::string text = integer + "." + fraction;
  return value < 0 ? "(- " + text + ")" : text;
}

namespace {

std::string var_name(std::size_t id) { return "m_" + std::to_string(id); }

std::string linear_sum(const std::vector<LinearTerm>& terms, double constant, bool wrap_to_real) {
  std::vector<std::string> parts;
  for (const LinearTerm& t : terms) {
    const std::string v = wrap_to_real ? "(to_real " + var_name(t.var) + ")" : var_name(t.var);
    parts.push_back("(* " + smt_decimal(t.coef) + " " + v + ")");
  }
  parts.push_back(smt_decimal(constant));
  if (parts.size() == 1) return parts[0];
  std::string out = "(+";
  for (const std::string& p : parts) out += " " + p;
  return out + ")";
}

std::string objective(std::size_t n) {
  if (n == 0) return "0";
  if (n == 1) return var_name(0);
  std::string out = "(+";
  for (std::size_t v = 0; v < n; ++v) out += " " + var_name(v);
  return out + ")";
}

void emit_variables(std::ostringstream& out, const MaskProblem& problem) {
  for (const MaskVariable& v : problem.variables) {
    out << "(declare-const " << var_name(v.id) << " Int) ; cell (" << v.row << "," << v.col << ")\n";
    out << "(assert (and (>= " << var_name(v.id) << " 0) (<= " << var_name(v.id) << " 1)))\n";
  }
}

void emit_full(std::ostringstream& out, const MaskProblem& problem) {
  const FullEncoding& full = *problem.full;
  const auto& layers = full.logits.layers();
  std::size_t width = full.first_layer.size();
  std::string prev = "z1_";
  std::size_t depth = 1;
  for (std::size_t j = 0; j < full.first_layer.size(); ++j) {
    out << "(declare-const z1_" << j << " Real)\n";
    out << "(assert (= z1_" << j << " " << linear_sum(full.first_layer[j].terms, full.first_layer[j].constant, true)
        << "))\n";
  }
  for (std::size_t i = full.first_affine + 1; i < layers.size(); ++i) {
    if (std::holds_alternative<Relu>(layers[i])) {
      for (std::size_t j = 0; j < width; ++j) {
        const std::string z = "z" + std::to_string(depth) + "_" + std::to_string(j);
        const std::string a = "a" + std::to_string(depth) + "_" + std::to_string(j);
        out << "(declare-const " << a << " Real)\n";
        out << "(assert (or (and (> " << z << " 0.0) (= " << a << " " << z << ")) (and (<= " << z << " 0.0) (= " << a
            << " 0.0))))\n";
      }
      prev = "a" + std::to_string(depth) + "_";
      continue;
    }
    const Dense& d = std::get<Dense>(layers[i]);
    ++depth;
    for (std::size_t o = 0; o < d.outputs; ++o) {
      const std::string z = "z" + std::to_string(depth) + "_" + std::to_string(o);
      std::vector<std::string> parts;
      for (std::size_t k = 0; k < d.inputs; ++k)
        if (const float w = d.weights[o * d.inputs + k]; w != 0.0f)
          parts.push_back("(* " + smt_decimal(w) + " " + prev + std::to_string(k) + ")");
      parts.push_back(smt_decimal(d.biases[o]));
      std::string rhs = parts.size() == 1 ? parts[0] : "(+";
      if (parts.size() > 1) {
        for (const std::string& p : parts) rhs += " " + p;
        rhs += ")";
      }
      out << "(declare-const " << z << " Real)\n";
      out << "(assert (= " << z << " " << rhs << "))\n";
    }
    width = d.outputs;
  }
  const std::string logits = "z" + std::to_string(depth) + "_";
  for (std::size_t l = 0; l < width; ++l)
    if (l != full.label)
      out << "(assert (> " << logits << full.label << " " << logits << l << "))\n";
}

}  // namespace

std::string emit_smtlib(const MaskProblem& problem) {
  problem.validate();
  std::ostringstream out;
  if (problem.is_linear()) {
    out << "; minimal input mask: " << problem.variables.size() << " variables, " << problem.constraints.size()
        << " constraints, gamma " << smt_decimal(problem.gamma) << "\n";
  } else {
    out << "; minimal input mask, whole-network encoding: " << problem.variables.size() << " variables, label "
        << problem.full->label << "\n";
  }
  out << "(set-option :produce-models true)\n";
  emit_variables(out, problem);
  if (problem.is_linear()) {
    for (const LinearConstraint& c : problem.constraints) {
      if (c.neuron) out << "; neuron " << *c.neuron << "\n";
      out << "(assert (> " << linear_sum(c.terms, c.constant, true) << " 0.0))\n";
    }
  } else {
    emit_full(out, problem);
  }
  out << "(minimize " << objective(problem.variables.size()) << ")\n";
  out << "(check-sat)\n(get-objectives)\n(get-model)\n";
  return out.str();
}

// ---------------------------------------------------------------- reading

namespace {

[[noreturn]] void bad(const SExpr& e, const std::string& what) {
  throw ParseError("byte " + std::to_string(e.offset), what + ": " + to_string(e));
}

std::optional<std::size_t> mask_var_id(const std::string& name) {
  if (name.size() < 3 || name.compare(0, 2, "m_") != 0) return std::nullopt;
  std::size_t id = 0;
  auto [ptr, ec] = std::from_chars(name.data() + 2, name.data() + name.size(), id);
  if (ec != std::errc{} || ptr != name.data() + name.size()) return std::nullopt;
  if (name.size() > 3 && name[2] == '0') return std::nullopt;
  return id;
}

std::optional<double> number(const SExpr& e) {
  if (e.is_list) {
    if (e.head_is("-") && e.items.size() == 2)
      if (auto v = number(e.items[1])) return -*v;
    if (e.head_is("/") && e.items.size() == 3) {
      auto a = number(e.items[1]);
      auto b = number(e.items[2]);
      if (a && b && *b != 0.0) return *a / *b;
    }
    return std::nullopt;
  }
  double v = 0;
  const char* end = e.atom.data() + e.atom.size();
  auto [ptr, ec] = std::from_chars(e.atom.data(), end, v, std::chars_format::fixed);
  if (e.atom.empty() || ec != std::errc{} || ptr != end || e.atom[0] == '-' || e.atom[0] == '+') return std::nullopt;
  return v;
}

struct Affine {
  std::map<std::size_t, double> coef;
  double constant = 0.0;
};

std::optional<std::size_t> var_ref(const SExpr& e) {
  if (e.head_is("to_real") && e.items.size() == 2) return var_ref(e.items[1]);
  if (!e.is_list) return mask_var_id(e.atom);
  return std::nullopt;
}

void accumulate(const SExpr& e, double scale, Affine& out) {
  if (auto v = number(e)) {
    out.constant += scale * *v;
    return;
  }
  if (auto id = var_ref(e)) {
    out.coef[*id] += scale;
    return;
  }
  if (e.head_is("+")) {
    for (std::size_t i = 1; i < e.items.size(); ++i) accumulate(e.items[i], scale, out);
    return;
  }
  if (e.head_is("-") && e.items.size() >= 2) {
    if (e.items.size() == 2) return accumulate(e.items[1], -scale, out);
    accumulate(e.items[1], scale, out);
    for (std::size_t i = 2; i < e.items.size(); ++i) accumulate(e.items[i], -scale, out);
    return;
  }
  if (e.head_is("*") && e.items.size() == 3) {
    if (auto c = number(e.items[1])) return accumulate(e.items[2], scale * *c, out);
    if (auto c = number(e.items[2])) return accumulate(e.items[1], scale * *c, out);
  }
  bad(e, "not a linear term over mask variables");
}

bool is_bounds(const SExpr& e) {
  // (and (>= m 0) (<= m 1))
  if (!e.head_is("and") || e.items.size() != 3) return false;
  const SExpr& lo = e.items[1];
  const SExpr& hi = e.items[2];
  return lo.head_is(">=") && lo.items.size() == 3 && var_ref(lo.items[1]) && lo.items[2].is_atom("0") &&
         hi.head_is("<=") && hi.items.size() == 3 && var_ref(hi.items[1]) && hi.items[2].is_atom("1");
}

}  // namespace

MaskProblem parse_smtlib_problem(std::string_view text) {
  MaskProblem problem;
  std::map<std::size_t, bool> declared;
  std::vector<Affine> constraints;
  for (const SExpr& cmd : parse_sexprs(text)) {
    if (!cmd.is_list || cmd.items.empty() || cmd.items[0].is_list) bad(cmd, "expected a command");
    const std::string& head = cmd.items[0].atom;
    if (head == "declare-const" || head == "declare-fun") {
      const bool is_const = head == "declare-const";
      if (cmd.items.size() != (is_const ? 3u : 4u) || cmd.items[1].is_list) bad(cmd, "malformed declaration");
      if (!is_const && !(cmd.items[2].is_list && cmd.items[2].items.empty())) bad(cmd, "only nullary functions are supported");
      auto id = mask_var_id(cmd.items[1].atom);
      if (!id || !cmd.items.back().is_atom("Int"))
        throw UnsupportedProblem("declaration of " + cmd.items[1].atom + " is not a mask variable; only linear mask problems can be read");
      if (declared.count(*id)) bad(cmd, "variable declared twice");
      declared[*id] = true;
    } else if (head == "assert") {
      if (cmd.items.size() != 2) bad(cmd, "malformed assert");
      const SExpr& body = cmd.items[1];
      if (is_bounds(body)) continue;
      if (!body.head_is(">") || body.items.size() != 3) throw UnsupportedProblem("assertion is not of the form (> lhs 0): " + to_string(body));
      Affine lhs;
      accumulate(body.items[1], 1.0, lhs);
      accumulate(body.items[2], -1.0, lhs);
      constraints.push_back(std::move(lhs));
    } else if (head == "set-option" || head == "set-logic" || head == "set-info" || head == "minimize" ||
               head == "check-sat" || head == "get-objectives" || head == "get-model" || head == "exit") {
      continue;
    } else {
      bad(cmd, "unsupported command");
    }
  }
  std::size_t n = 0;
  for (const auto& [id, unused] : declared) {
    if (id != n) throw ParseError("", "mask variables must be m_0 .. m_(n-1) without gaps; missing m_" + std::to_string(n));
    ++n;
  }
  for (std::size_t v = 0; v < n; ++v) problem.variables.push_back(MaskVariable{v, v, 0, 0, {}});
  for (const Affine& a : constraints) {
    LinearConstraint c;
    c.constant = a.constant;
    for (const auto& [id, coef] : a.coef) {
      if (id >= n) throw ParseError("", "assertion uses undeclared variable m_" + std::to_string(id));
      if (coef != 0.0) c.terms.push_back({id, coef});
    }
    problem.constraints.push_back(std::move(c));
  }
  return problem;
}

namespace {

std::optional<long long> integer_value(const SExpr& e) {
  if (e.head_is("-") && e.items.size() == 2)
    if (auto v = integer_value(e.items[1])) return -*v;
  if (e.is_list) return std::nullopt;
  long long v = 0;
  const char* end = e.atom.data() + e.atom.size();
  auto [ptr, ec] = std::from_chars(e.atom.data(), end, v);
  if (e.atom.empty() || ec != std::errc{} || ptr != end) return std::nullopt;
  return v;
}

void read_definitions(const SExpr& list, const MaskProblem& problem, std::vector<std::uint8_t>& assignment,
                      std::vector<bool>& seen) {
  for (const SExpr& def : list.items) {
    if (!def.head_is("define-fun")) {
      if (def.is_atom("model")) continue;
      bad(def, "expected define-fun in model");
    }
    if (def.items.size() != 5 || def.items[1].is_list) bad(def, "malformed define-fun");
    const std::string& name = def.items[1].atom;
    auto id = mask_var_id(name);
    if (!id) {
      // Auxiliary reals of a whole-network encoding.
      if (!problem.is_linear()) continue;
      bad(def, "model assigns unknown symbol " + name);
    }
    if (*id >= problem.variables.size()) bad(def, "model assigns " + name + " which is not in the problem");
    auto value = integer_value(def.items[4]);
    if (!value || (*value != 0 && *value != 1)) bad(def, "mask variable value must be 0 or 1");
    assignment[*id] = static_cast<std::uint8_t>(*value);
    seen[*id] = true;
  }
}

}  // namespace

MaskSolution parse_solver_output(std::string_view text, const MaskProblem& problem) {
  const std::vector<SExpr> items = parse_sexprs(text);
  MaskSolution sol;
  std::size_t i = 0;
  for (; i < items.size(); ++i) {
    if (items[i].head_is("error")) bad(items[i], "solver reported an error");
    if (!items[i].is_list) break;
  }
  if (i == items.size()) throw ParseError("byte 0", "response has no sat/unsat/unknown status");
  const SExpr& status = items[i];
  if (status.is_atom("unsat")) {
    sol.status = SolveStatus::Unsat;
    return sol;
  }
  if (status.is_atom("unknown")) {
    sol.status = SolveStatus::Unknown;
    return sol;
  }
  if (!status.is_atom("sat")) bad(status, "expected sat, unsat or unknown");

  std::optional<long long> claimed;
  bool have_model = false;
  std::vector<std::uint8_t> assignment(problem.variables.size(), 0);
  std::vector<bool> seen(problem.variables.size(), false);
  for (++i; i < items.size(); ++i) {
    const SExpr& e = items[i];
    if (e.head_is("error")) bad(e, "solver reported an error");
    if (e.head_is("objectives")) {
      for (std::size_t k = 1; k < e.items.size(); ++k) {
        const SExpr& entry = e.items[k];
        if (!entry.is_list || entry.items.empty()) bad(entry, "malformed objective entry");
        auto v = integer_value(entry.items.back());
        if (!v) bad(entry, "objective value is not an integer");
        claimed = *v;
      }
      continue;
    }
    if (e.head_is("model") || (e.is_list && (e.items.empty() || e.items[0].head_is("define-fun")))) {
      read_definitions(e, problem, assignment, seen);
      have_model = true;
      continue;
    }
    bad(e, "unexpected response item");
  }
  if (!have_model) throw ParseError("byte " + std::to_string(status.offset), "sat response without a model");
  std::size_t ones = 0;
  for (std::uint8_t b : assignment) ones += b;
  if (claimed && *claimed != static_cast<long long>(ones))
    throw ParseError("", "objective " + std::to_string(*claimed) + " disagrees with model sum " + std::to_string(ones));
  sol.status = SolveStatus::Sat;
  sol.assignment = std::move(assignment);
  sol.objective = ones;
  return sol;
}

}  // namespace minmask
