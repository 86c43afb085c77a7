#include "qlab/spec_io.hpp"

#include <fstream>
#include <json.hpp>
#include <sstream>

#include "qlab/error.hpp"

namespace qlab {

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& source, const std::string& field, const std::string& msg) {
  throw InputError(source + ": field '" + field + "': " + msg);
}

const json& require(const json& obj, const char* key, const std::string& source, const std::string& prefix = "") {
  if (!obj.is_object()) fail(source, prefix.empty() ? "<root>" : prefix, "expected an object");
  const auto it = obj.find(key);
  if (it == obj.end()) fail(source, prefix + key, "missing");
  return *it;
}

double as_real(const json& v, const std::string& source, const std::string& field) {
  if (!v.is_number()) fail(source, field, "expected a number");
  return v.get<double>();
}

int as_int(const json& v, const std::string& source, const std::string& field) {
  if (!v.is_number_integer()) fail(source, field, "expected an integer");
  return v.get<int>();
}

Rational as_rational(const json& v, const std::string& source, const std::string& field) {
  try {
    if (v.is_number_integer()) return Rational(v.get<std::int64_t>());
    if (v.is_number_float()) {
      std::ostringstream os;
      os.precision(9);
      os << std::fixed << v.get<double>();
      return Rational::parse(os.str());
    }
    if (v.is_string()) return Rational::parse(v.get<std::string>());
  } catch (const Error& e) {
    fail(source, field, e.what());
  }
  fail(source, field, "expected a rational (integer, decimal or \"p/q\" string)");
}

cplx as_complex(const json& v, const std::string& source, const std::string& field) {
  if (v.is_number()) return {v.get<double>(), 0.0};
  if (v.is_array() && v.size() == 2 && v[0].is_number() && v[1].is_number())
    return {v[0].get<double>(), v[1].get<double>()};
  fail(source, field, "expected a number or an [re, im] pair");
}

Polynomial as_polynomial(const json& v, const std::string& source, const std::string& field) {
  if (!v.is_array()) fail(source, field, "expected a coefficient list");
  std::vector<cplx> c;
  for (std::size_t i = 0; i < v.size(); ++i) c.push_back(as_complex(v[i], source, field + "[" + std::to_string(i) + "]"));
  return Polynomial(std::move(c));
}

template <class T, class F>
std::vector<T> as_list(const json& v, const std::string& source, const std::string& field, F&& item) {
  if (!v.is_array()) fail(source, field, "expected a list");
  std::vector<T> out;
  for (std::size_t i = 0; i < v.size(); ++i) out.push_back(item(v[i], source, field + "[" + std::to_string(i) + "]"));
  return out;
}

template <class T, class F>
std::vector<std::vector<T>> as_matrix(const json& v, const std::string& source, const std::string& field, F&& item) {
  if (!v.is_array()) fail(source, field, "expected a list of lists");
  std::vector<std::vector<T>> out;
  for (std::size_t i = 0; i < v.size(); ++i)
    out.push_back(as_list<T>(v[i], source, field + "[" + std::to_string(i) + "]", item));
  return out;
}

double optional_real(const json& obj, const char* key, double fallback, const std::string& source,
                     const std::string& prefix) {
  const auto it = obj.find(key);
  return it == obj.end() ? fallback : as_real(*it, source, prefix + key);
}

CoefficientFunction as_coefficient(const json& v, const std::string& source, const std::string& field) {
  if (!v.is_object()) fail(source, field, "expected an object");
  const std::string p = field + ".";
  CoefficientFunction c;
  c.amplitude = as_real(require(v, "amplitude", source, p), source, p + "amplitude");
  c.width = optional_real(v, "width", 1.0, source, p);
  c.center = optional_real(v, "center", 0.0, source, p);
  c.eps_slope = optional_real(v, "eps_slope", 0.0, source, p);
  c.declared_bound = as_real(require(v, "declared_bound", source, p), source, p + "declared_bound");
  if (!(c.width > 0.0)) fail(source, p + "width", "must be positive");
  return c;
}

ForcingTerm as_forcing_term(const json& v, const std::string& source, const std::string& field) {
  if (!v.is_object()) fail(source, field, "expected an object");
  const std::string p = field + ".";
  ForcingTerm t;
  t.amplitude = as_real(require(v, "amplitude", source, p), source, p + "amplitude");
  t.tau_power = as_int(require(v, "tau_power", source, p), source, p + "tau_power");
  t.width = optional_real(v, "width", 1.0, source, p);
  t.center = optional_real(v, "center", 0.0, source, p);
  t.eps_slope = optional_real(v, "eps_slope", 0.0, source, p);
  if (t.tau_power < 0) fail(source, p + "tau_power", "must be nonnegative");
  if (!(t.width > 0.0)) fail(source, p + "width", "must be positive");
  return t;
}

std::pair<int, int> line_column(const std::string& text, std::size_t byte) {
  int line = 1, col = 1;
  for (std::size_t i = 0; i < byte && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return {line, col};
}

json complex_json(cplx c) { return c.imag() == 0.0 ? json(c.real()) : json::array({c.real(), c.imag()}); }

json polynomial_json(const Polynomial& p) {
  json a = json::array();
  for (const cplx& c : p.coefficients()) a.push_back(complex_json(c));
  return a;
}

}  // namespace

ProblemSpec parse_spec(const std::string& text, const std::string& source) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    const auto [line, col] = line_column(text, e.byte == 0 ? 0 : e.byte - 1);
    throw InputError(source + ":" + std::to_string(line) + ":" + std::to_string(col) + ": malformed document: " +
                     e.what());
  }
  const std::string& src = source;
  auto real = [&](const char* k) { return as_real(require(doc, k, src), src, k); };
  auto integer = [&](const char* k) { return as_int(require(doc, k, src), src, k); };
  auto rational = [&](const char* k) { return as_rational(require(doc, k, src), src, k); };

  ProblemSpec s;
  s.q = real("q");
  s.k1 = integer("k1");
  s.k1p = integer("k1p");
  s.k1pp = real("k1pp");
  s.k2 = integer("k2");
  s.D1 = integer("D1");
  s.D2 = integer("D2");
  s.lambda1 = integer("lambda1");
  s.lambda2 = integer("lambda2");
  s.mu2 = integer("mu2");
  s.Delta = as_matrix<Rational>(require(doc, "Delta", src), src, "Delta", as_rational);
  s.Delta_top = rational("Delta_top");
  s.d = as_list<Rational>(require(doc, "d", src), src, "d", as_rational);
  s.d_top = rational("d_top");
  s.delta = as_list<Rational>(require(doc, "delta", src), src, "delta", as_rational);
  s.delta_tilde = as_list<Rational>(require(doc, "delta_tilde", src), src, "delta_tilde", as_rational);
  s.delta_tilde_top = rational("delta_tilde_top");
  s.Q = as_polynomial(require(doc, "Q", src), src, "Q");
  s.R = as_matrix<Polynomial>(require(doc, "R", src), src, "R", as_polynomial);
  s.R_top = as_polynomial(require(doc, "R_top", src), src, "R_top");
  s.C = as_matrix<CoefficientFunction>(require(doc, "C", src), src, "C", as_coefficient);
  {
    const json& psi = require(doc, "psi", src);
    s.psi.terms = as_list<ForcingTerm>(require(psi, "terms", src, "psi."), src, "psi.terms", as_forcing_term);
    s.psi.declared_bound = as_real(require(psi, "declared_bound", src, "psi."), src, "psi.declared_bound");
  }
  s.mu = real("mu");
  s.beta = real("beta");
  s.alpha = real("alpha");
  s.delta_off = real("delta_off");
  s.rho = real("rho");
  s.epsilon0 = real("epsilon0");

  if (s.D1 < 2 || s.D2 < 2) fail(src, "D1/D2", "must be at least 2");
  auto check_len = [&](std::size_t got, int want, const std::string& field) {
    if (static_cast<int>(got) != want)
      fail(src, field, "expected " + std::to_string(want) + " entries, found " + std::to_string(got));
  };
  check_len(s.d.size(), s.n1(), "d");
  check_len(s.delta.size(), s.n1(), "delta");
  check_len(s.delta_tilde.size(), s.n2(), "delta_tilde");
  check_len(s.Delta.size(), s.n1(), "Delta");
  check_len(s.R.size(), s.n1(), "R");
  check_len(s.C.size(), s.n1(), "C");
  for (int a = 0; a < s.n1(); ++a) {
    check_len(s.Delta[a].size(), s.n2(), "Delta[" + std::to_string(a) + "]");
    check_len(s.R[a].size(), s.n2(), "R[" + std::to_string(a) + "]");
    check_len(s.C[a].size(), s.n2(), "C[" + std::to_string(a) + "]");
  }
  if (s.Q.is_zero()) fail(src, "Q", "must not be the zero polynomial");
  if (s.R_top.is_zero()) fail(src, "R_top", "must not be the zero polynomial");
  return s;
}

ProblemSpec load_spec(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError(path + ": cannot open spec document");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_spec(buf.str(), path);
}

std::string dump_spec(const ProblemSpec& s) {
  json doc;
  doc["q"] = s.q;
  doc["k1"] = s.k1;
  doc["k1p"] = s.k1p;
  doc["k1pp"] = s.k1pp;
  doc["k2"] = s.k2;
  doc["D1"] = s.D1;
  doc["D2"] = s.D2;
  doc["lambda1"] = s.lambda1;
  doc["lambda2"] = s.lambda2;
  doc["mu2"] = s.mu2;
  auto rat_list = [](const std::vector<Rational>& v) {
    json a = json::array();
    for (const auto& r : v) a.push_back(r.str());
    return a;
  };
  doc["Delta"] = json::array();
  for (const auto& row : s.Delta) doc["Delta"].push_back(rat_list(row));
  doc["Delta_top"] = s.Delta_top.str();
  doc["d"] = rat_list(s.d);
  doc["d_top"] = s.d_top.str();
  doc["delta"] = rat_list(s.delta);
  doc["delta_tilde"] = rat_list(s.delta_tilde);
  doc["delta_tilde_top"] = s.delta_tilde_top.str();
  doc["Q"] = polynomial_json(s.Q);
  doc["R"] = json::array();
  for (const auto& row : s.R) {
    json r = json::array();
    for (const auto& p : row) r.push_back(polynomial_json(p));
    doc["R"].push_back(r);
  }
  doc["R_top"] = polynomial_json(s.R_top);
  doc["C"] = json::array();
  for (const auto& row : s.C) {
    json r = json::array();
    for (const auto& c : row)
      r.push_back({{"amplitude", c.amplitude},
                   {"width", c.width},
                   {"center", c.center},
                   {"eps_slope", c.eps_slope},
                   {"declared_bound", c.declared_bound}});
    doc["C"].push_back(r);
  }
  json terms = json::array();
  for (const auto& t : s.psi.terms)
    terms.push_back({{"amplitude", t.amplitude},
                     {"tau_power", t.tau_power},
                     {"width", t.width},
                     {"center", t.center},
                     {"eps_slope", t.eps_slope}});
  doc["psi"] = {{"terms", terms}, {"declared_bound", s.psi.declared_bound}};
  doc["mu"] = s.mu;
  doc["beta"] = s.beta;
  doc["alpha"] = s.alpha;
  doc["delta_off"] = s.delta_off;
  doc["rho"] = s.rho;
  doc["epsilon0"] = s.epsilon0;
  return doc.dump(2) + "\n";
}

}  // namespace qlab
