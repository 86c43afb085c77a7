#include "qlab/problem.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include "qlab/error.hpp"

namespace qlab {

namespace {

constexpr double kPi = std::numbers::pi;

double gaussian(double m, double center, double width) {
  const double x = (m - center) / width;
  return std::exp(-0.5 * x * x);
}

std::string idx(int a) { return "[" + std::to_string(a) + "]"; }
std::string idx(int a, int b) { return "[" + std::to_string(a) + "," + std::to_string(b) + "]"; }

ConstraintCheck make_check(std::string id, std::string statement, double lhs, double rhs, std::string relation,
                           bool passed) {
  return ConstraintCheck{std::move(id), std::move(statement), lhs, rhs, std::move(relation), passed};
}

// Distinct arguments of the roots of P_m over a set of m values.
std::vector<double> root_arguments(const ProblemSpec& s, const std::vector<double>& ms) {
  std::vector<double> args;
  for (double m : ms) {
    for (const cplx& r : pm_roots(s, m)) {
      const double a = std::arg(r);
      const bool seen = std::any_of(args.begin(), args.end(), [&](double b) { return std::abs(wrap_angle(a - b)) < 1e-9; });
      if (!seen) args.push_back(a);
    }
  }
  return args;
}

// Extremes of an affine angle expression over the corners of a rectangle.
std::pair<double, double> corner_range(const std::vector<double>& corner_values) {
  return {*std::min_element(corner_values.begin(), corner_values.end()),
          *std::max_element(corner_values.begin(), corner_values.end())};
}

struct DirectionMargins {
  double delta1 = 0.0;
  double delta2 = 0.0;
  double delta3 = 0.0;
  double roots = 0.0;
};

// Angular range of gamma - k2 arg(T2) over eps in the sector and t2 (or x2) in its domain.
std::pair<double, double> t2_angle_range(const SectorCovering& cov, const ProblemSpec& s, int h, double gamma,
                                         const AngularDomain& t2) {
  const EpsSector& e = cov.sectors[h];
  std::vector<double> corners;
  for (double phi : {e.arg_low, e.arg_high}) {
    for (double th : {t2.arg_center - 0.5 * t2.aperture, t2.arg_center + 0.5 * t2.aperture}) {
      const double argT2 = cov.kind == CoveringKind::Outer ? s.lambda2 * phi + th
                                                           : (s.lambda2 - s.mu2) * phi + th + cov.theta_h[h];
      corners.push_back(gamma - s.k2 * argT2);
    }
  }
  return corner_range(corners);
}

// Angular range of gamma - arg(T1) over eps in the sector and t1 in its domain.
std::pair<double, double> t1_angle_range(const EpsSector& e, const ProblemSpec& s, double gamma, const AngularDomain& t1) {
  std::vector<double> corners;
  for (double phi : {e.arg_low, e.arg_high})
    for (double th : {t1.arg_center - 0.5 * t1.aperture, t1.arg_center + 0.5 * t1.aperture})
      corners.push_back(gamma - (s.lambda1 * phi + th));
  return corner_range(corners);
}

DirectionMargins direction_margins(const SectorCovering& cov, const ProblemSpec& s, int h, double gamma,
                                   const AngularDomain& t1, const AngularDomain& t2, const std::vector<double>& root_args,
                                   double sep_aperture) {
  DirectionMargins dm;
  const auto [lo1, hi1] = t1_angle_range(cov.sectors[h], s, gamma, t1);
  dm.delta1 = min_ray_distance_over_interval(lo1, hi1);
  const auto [lo3, hi3] = t2_angle_range(cov, s, h, gamma, t2);
  dm.delta3 = min_cos_over_interval(lo3, hi3);
  dm.delta2 = hi3 - lo3 >= kPi ? -1.0 : 0.5 * kPi - std::max(std::abs(wrap_angle(lo3)), std::abs(wrap_angle(hi3)));
  if (min_cos_over_interval(lo3, hi3) <= 0.0) dm.delta2 = std::min(dm.delta2, 0.0);
  double dist = kPi;
  for (double r : root_args) dist = std::min(dist, std::abs(wrap_angle(gamma - r)));
  dm.roots = dist - 0.5 * sep_aperture;
  return dm;
}

}  // namespace

// ------------------------------------------------------------------ data ----

cplx CoefficientFunction::operator()(double m, cplx eps) const {
  if (amplitude == 0.0) return {};
  return amplitude * (1.0 + eps_slope * eps) * gaussian(m, center, width);
}

cplx Forcing::operator()(cplx tau, double m, cplx eps) const {
  cplx sum{};
  for (const auto& t : terms)
    sum += t.amplitude * (1.0 + t.eps_slope * eps) * std::pow(tau, t.tau_power) * gaussian(m, t.center, t.width);
  return sum;
}

QCalcParams ProblemSpec::qparams() const {
  QCalcParams p;
  p.q = q;
  p.k = Rational(k1);
  return p;
}

WeightParams ProblemSpec::weight(double direction, double aperture) const {
  WeightParams w;
  w.k = k1p;
  w.beta = beta;
  w.mu = mu;
  w.alpha = alpha;
  w.delta_off = delta_off;
  w.rho = rho;
  w.direction = direction;
  w.aperture = aperture;
  return w;
}

Rational ProblemSpec::dilation_exponent(int l1) const { return delta.at(l1) - d.at(l1) / Rational(k1); }

Rational ProblemSpec::eps_power(int l1, int l2) const {
  return Delta.at(l1).at(l2) - Rational(lambda1) * d.at(l1) - Rational(lambda2 * k2) * delta_tilde.at(l2);
}

Rational ProblemSpec::tau_power(int l1, int l2) const { return delta_tilde.at(l2) + d.at(l1); }

double ProblemSpec::term_coefficient(int l1, int l2) const {
  const double dt = delta_tilde.at(l2).to_double();
  const double lq = std::log(q);
  const Rational dd = d.at(l1) * (d.at(l1) - Rational(1)) / Rational(2 * k1);
  return std::exp(dt * std::log(static_cast<double>(k2)) + lq * dilation_exponent(l1).to_double() * dt -
                  lq * dd.to_double());
}

int ProblemSpec::pm_degree() const {
  const Rational n = d_top + delta_tilde_top;
  if (!n.is_integer() || n.num() < 1) throw DomainError("d_D1 + delta_tilde_D2 must be a positive integer");
  return static_cast<int>(n.num());
}

double ProblemSpec::pm_coefficient() const {
  const Rational dd = d_top * (d_top - Rational(1)) / Rational(2 * k1);
  return std::exp(delta_tilde_top.to_double() * std::log(static_cast<double>(k2)) - std::log(q) * dd.to_double());
}

ProblemSpec reference_spec() {
  ProblemSpec s;
  s.q = 2.0;
  s.k1 = 1;
  s.k1p = 2;
  s.k1pp = 0.9;
  s.k2 = 1;
  s.D1 = 2;
  s.D2 = 2;
  s.lambda1 = 3;
  s.lambda2 = 1;
  s.mu2 = 2;
  s.d_top = Rational(2);
  s.delta_tilde_top = Rational(1);
  s.Delta_top = Rational(7);
  s.d = {Rational(2)};
  s.delta = {Rational(1)};
  s.delta_tilde = {Rational(0)};
  s.Delta = {{Rational(8)}};
  s.Q = Polynomial({4.0, 0.0, -1.0});  // Q(im) = 4 + m^2
  s.R_top = Polynomial({1.0});
  s.R = {{Polynomial({1.0})}};
  CoefficientFunction c;
  c.amplitude = 1.0;
  c.width = std::sqrt(0.5);  // exp(-m^2)
  c.declared_bound = 9.0;
  s.C = {{c}};
  ForcingTerm f;
  f.amplitude = 1.0;
  f.tau_power = 1;
  f.width = std::sqrt(0.5);
  s.psi.terms = {f};
  s.psi.declared_bound = 4.0;
  s.mu = 3.0;
  s.beta = 1.0;
  s.alpha = 0.0;
  s.delta_off = 2.0;
  s.rho = 1.0;
  s.epsilon0 = 1.0;
  return s;
}

// ------------------------------------------------------------ validation ----

bool ValidationReport::all_passed() const {
  return std::all_of(checks.begin(), checks.end(), [](const ConstraintCheck& c) { return c.passed; });
}

const ConstraintCheck* ValidationReport::find(const std::string& id) const {
  for (const auto& c : checks)
    if (c.id == id) return &c;
  return nullptr;
}

ValidationReport validate_spec(const ProblemSpec& s) {
  ValidationReport rep;
  auto add = [&](ConstraintCheck c) { rep.checks.push_back(std::move(c)); };

  add(make_check("q_above_one", "q > 1", s.q, 1.0, ">", s.q > 1.0));
  add(make_check("orders_positive", "k1 >= 1 and k2 >= 1", std::min(s.k1, s.k2), 1.0, ">=", s.k1 >= 1 && s.k2 >= 1));
  add(make_check("k1p_above_k1", "k1p > k1", s.k1p, s.k1, ">", s.k1p > s.k1));
  add(make_check("k1pp_range", "0 < k1pp < k1", s.k1pp, s.k1, "<", s.k1pp > 0.0 && s.k1pp < s.k1));
  add(make_check("term_counts", "D1 >= 2 and D2 >= 2", std::min(s.D1, s.D2), 2.0, ">=", s.D1 >= 2 && s.D2 >= 2));

  const bool sizes_ok = s.D1 >= 2 && s.D2 >= 2 && static_cast<int>(s.d.size()) == s.n1() &&
                        static_cast<int>(s.delta.size()) == s.n1() && static_cast<int>(s.delta_tilde.size()) == s.n2() &&
                        static_cast<int>(s.Delta.size()) == s.n1() && static_cast<int>(s.R.size()) == s.n1() &&
                        static_cast<int>(s.C.size()) == s.n1() &&
                        std::all_of(s.Delta.begin(), s.Delta.end(), [&](const auto& r) { return static_cast<int>(r.size()) == s.n2(); }) &&
                        std::all_of(s.R.begin(), s.R.end(), [&](const auto& r) { return static_cast<int>(r.size()) == s.n2(); }) &&
                        std::all_of(s.C.begin(), s.C.end(), [&](const auto& r) { return static_cast<int>(r.size()) == s.n2(); });
  add(make_check("array_shapes", "per-term arrays have D1-1 by D2-1 entries", sizes_ok ? 1.0 : 0.0, 1.0, "==", sizes_ok));
  if (!sizes_ok) return rep;

  bool integral = (s.d_top + s.delta_tilde_top).is_integer() && (s.d_top + s.delta_tilde_top).num() >= 1 &&
                  s.delta_tilde_top.is_integer();
  for (const auto& dt : s.delta_tilde) integral = integral && dt.is_integer() && dt >= Rational(0);
  add(make_check("integral_orders", "derivative orders and deg P_m are nonnegative integers", integral ? 1.0 : 0.0, 1.0,
                 "==", integral));

  const Rational k1(s.k1), k1p(s.k1p);
  for (int a = 0; a < s.n1(); ++a) {
    for (int b = 0; b < s.n2(); ++b) {
      const Rational rhs = (k1p / k1 - Rational(1)) * s.d[a] + s.d_top + s.delta_tilde_top - k1p * s.delta[a];
      add(make_check("growth_exponents" + idx(a + 1, b + 1),
                     "delta_tilde_l2 <= (k1p/k1 - 1) d_l1 + d_D1 + delta_tilde_D2 - k1p delta_l1",
                     s.delta_tilde[b].to_double(), rhs.to_double(), "<=", s.delta_tilde[b] <= rhs));
    }
  }
  {
    const Rational rhs = Rational(s.lambda1) * s.d_top + Rational(s.lambda2 * s.k2) * s.delta_tilde_top;
    add(make_check("top_exponent_balance", "Delta_D1D2 = lambda1 d_D1 + lambda2 k2 delta_tilde_D2",
                   s.Delta_top.to_double(), rhs.to_double(), "==", s.Delta_top == rhs));
  }
  for (int a = 0; a < s.n1(); ++a) {
    add(make_check("dilation_inward" + idx(a + 1), "k1 delta_l1 < d_l1", (k1 * s.delta[a]).to_double(),
                   s.d[a].to_double(), "<", k1 * s.delta[a] < s.d[a]));
    for (int b = 0; b < s.n2(); ++b) {
      const Rational lhs = Rational(s.lambda1) * s.d[a] + Rational(s.lambda2 * s.k2) * s.delta_tilde[b];
      add(make_check("perturbation_exponent" + idx(a + 1, b + 1), "lambda1 d_l1 + lambda2 k2 delta_tilde_l2 < Delta_l1l2",
                     lhs.to_double(), s.Delta[a][b].to_double(), "<", lhs < s.Delta[a][b]));
    }
  }
  for (int a = 0; a < s.n1(); ++a) {
    for (int b = 0; b < s.n2(); ++b) {
      add(make_check("degree_order" + idx(a + 1, b + 1), "deg R_D1D2 >= deg R_l1l2", s.R_top.degree(), s.R[a][b].degree(),
                     ">=", s.R_top.degree() >= s.R[a][b].degree()));
      add(make_check("mu_vs_degree" + idx(a + 1, b + 1), "mu > deg R_l1l2 + 1", s.mu, s.R[a][b].degree() + 1.0, ">",
                     s.mu > s.R[a][b].degree() + 1.0));
    }
  }

  // R_top(im) must not vanish on the real line: grid scan plus the leading coefficient.
  const FourierGrid mg{50.0, 20001};
  double min_r = std::numeric_limits<double>::infinity();
  for (int j = 0; j < mg.n; ++j) min_r = std::min(min_r, std::abs(s.R_top.at_im(mg.node(j))));
  const bool r_ok = !s.R_top.is_zero() && min_r > 1e-10;
  add(make_check("top_symbol_nonvanishing", "min |R_D1D2(im)| > 0", min_r, 0.0, ">", r_ok));

  // The quotient Q(im)/R_top(im) stays in a sector {|z| >= r, |arg z - d| <= eta}.
  {
    bool ok = r_ok && s.Q.degree() >= s.R_top.degree();
    double rmin = std::numeric_limits<double>::infinity();
    std::vector<double> args;
    if (ok) {
      std::vector<double> ms = mg.nodes();
      for (double big : {1e3, 1e5, 1e7}) {
        ms.push_back(big);
        ms.push_back(-big);
      }
      for (double m : ms) {
        const cplx z = s.Q.at_im(m) / s.R_top.at_im(m);
        rmin = std::min(rmin, std::abs(z));
        args.push_back(std::arg(z));
      }
    }
    double eta = kPi;
    if (ok && !args.empty()) {
      // Circular mean direction and largest deviation from it.
      cplx mean{};
      for (double a : args) mean += std::polar(1.0, a);
      const double center = std::arg(mean);
      eta = 0.0;
      for (double a : args) eta = std::max(eta, std::abs(wrap_angle(a - center)));
    }
    ok = ok && rmin > 1e-10 && eta < 0.5 * kPi;
    add(make_check("quotient_sector", "Q(im)/R_D1D2(im) in a sector: min modulus r > 0 and half aperture eta < pi/2",
                   std::isfinite(rmin) ? rmin : 0.0, eta, "r>0,eta<pi/2", ok));
  }
  add(make_check("inner_scale_order", "mu2 > lambda2", s.mu2, s.lambda2, ">", s.mu2 > s.lambda2));
  {
    const double lhs = static_cast<double>(s.k1) * s.lambda1 * s.lambda1;
    const double t = static_cast<double>(s.mu2 - s.lambda2) * s.k2;
    const double rhs = static_cast<double>(s.k1p) * t * t;
    add(make_check("outer_vs_inner_rate", "k1 lambda1^2 > k1p ((mu2 - lambda2) k2)^2", lhs, rhs, ">", lhs > rhs));
  }

  // Declared bounds of the coefficients and of the forcing, sampled over |eps| <= epsilon0.
  const FourierGrid cg{30.0, 1201};
  std::vector<cplx> eps_samples;
  for (int i = 0; i < 8; ++i) eps_samples.push_back(std::polar(s.epsilon0, 2.0 * kPi * i / 8.0));
  eps_samples.push_back(0.0);
  for (int a = 0; a < s.n1(); ++a) {
    for (int b = 0; b < s.n2(); ++b) {
      double worst = 0.0;
      for (cplx e : eps_samples) {
        std::vector<cplx> v(cg.n);
        for (int j = 0; j < cg.n; ++j) v[j] = s.C[a][b](cg.node(j), e);
        worst = std::max(worst, ebm_norm(v, cg, s.beta, s.mu));
      }
      add(make_check("coefficient_bound" + idx(a + 1, b + 1), "sup_eps ||C_l1l2(., eps)||_(beta,mu) <= declared", worst,
                     s.C[a][b].declared_bound, "<=", worst <= s.C[a][b].declared_bound));
    }
  }
  {
    const WeightParams w = s.weight();
    double worst = 0.0;
    for (int i = -60; i <= 60; ++i) {
      const double r = std::pow(10.0, i / 10.0);
      for (double ang : {0.0, kPi / 3.0, kPi}) {
        for (int j = 0; j < cg.n; j += 4) {
          const double m = cg.node(j);
          for (cplx e : eps_samples) {
            const double a = std::abs(s.psi(std::polar(r, ang), m, e));
            if (a > 0.0) worst = std::max(worst, std::exp(std::log(a) + w.log_weight(r, m, s.q)));
          }
        }
      }
    }
    add(make_check("forcing_bound", "sampled qExp norm of psi <= declared C_psi", worst, s.psi.declared_bound, "<=",
                   worst <= s.psi.declared_bound));
  }
  return rep;
}

// ------------------------------------------------------ characteristic poly ----

cplx pm_eval(const ProblemSpec& s, cplx tau, double m) {
  return s.Q.at_im(m) - s.pm_coefficient() * std::pow(tau, s.pm_degree()) * s.R_top.at_im(m);
}

cplx pm_derivative(const ProblemSpec& s, cplx tau, double m) {
  const int n = s.pm_degree();
  return -s.pm_coefficient() * static_cast<double>(n) * std::pow(tau, n - 1) * s.R_top.at_im(m);
}

std::vector<cplx> pm_roots(const ProblemSpec& s, double m) {
  const cplx r = s.R_top.at_im(m);
  if (std::abs(r) < 1e-300) throw SingularityError("pm_roots: R_D1D2(im) vanishes at m = " + std::to_string(m));
  const int n = s.pm_degree();
  const cplx ratio = s.Q.at_im(m) / (s.pm_coefficient() * r);
  const double modulus = std::pow(std::abs(ratio), 1.0 / n);
  const double base = std::arg(ratio) / n;
  std::vector<cplx> roots;
  for (int l = 0; l < n; ++l) roots.push_back(std::polar(modulus, base + 2.0 * kPi * l / n));
  return roots;
}

// -------------------------------------------------------------- geometry ----

double min_ray_distance_over_interval(double lo, double hi) {
  if (hi < lo) std::swap(lo, hi);
  if (hi - lo >= 2.0 * kPi) return 0.0;
  // The distance depends only on how close phi is to pi (mod 2 pi).
  const double k = std::ceil((lo - kPi) / (2.0 * kPi));
  if (kPi + 2.0 * kPi * k <= hi) return 0.0;
  return std::min(ray_distance_to_minus_one(lo), ray_distance_to_minus_one(hi));
}

double min_cos_over_interval(double lo, double hi) {
  if (hi < lo) std::swap(lo, hi);
  if (hi - lo >= 2.0 * kPi) return -1.0;
  const double k = std::ceil((lo - kPi) / (2.0 * kPi));
  if (kPi + 2.0 * kPi * k <= hi) return -1.0;
  return std::min(std::cos(lo), std::cos(hi));
}

bool angle_between(double a, double b, double x) {
  const double d = wrap_angle(b - a);
  const double t = wrap_angle(x - a);
  return d > 0.0 ? (t > 0.0 && t < d) : (t < 0.0 && t > d);
}

std::vector<cplx> separation_tau_grid(double d, double aperture, double rho, double r_max, int per_decade) {
  std::vector<cplx> nodes;
  const RadialGrid rg = RadialGrid::spanning(1e-3, r_max, std::log(10.0) / per_decade);
  for (double ang : {d - 0.5 * aperture, d, d + 0.5 * aperture})
    for (int j = 0; j < rg.n; ++j) nodes.push_back(std::polar(rg.radius(j), ang));
  const int n_ang = 64, n_rad = 24;
  for (int a = 0; a < n_ang; ++a)
    for (int j = 1; j <= n_rad; ++j) nodes.push_back(std::polar(rho * j / n_rad, 2.0 * kPi * a / n_ang));
  nodes.push_back(0.0);
  return nodes;
}

std::vector<double> separation_m_grid(const FourierGrid& g) {
  std::vector<double> ms = g.nodes();
  for (double big : {20.0, 50.0, 1e2, 1e3, 1e4}) {
    ms.push_back(big);
    ms.push_back(-big);
  }
  return ms;
}

GeometryReport sector_separation(const ProblemSpec& s, double d, double rho, const std::vector<double>& m_grid,
                                 const std::vector<cplx>& tau_grid) {
  GeometryReport rep;
  rep.M1 = std::numeric_limits<double>::infinity();
  rep.C_P = std::numeric_limits<double>::infinity();
  const int n = s.pm_degree();
  cplx worst_tau_m1{}, worst_tau_cp{};
  double worst_m_m1 = 0.0, worst_m_cp = 0.0;
  for (double m : m_grid) {
    const auto roots = pm_roots(s, m);
    const double rabs = std::abs(s.R_top.at_im(m));
    // Closest points of the central ray and of the disc to each root join the grid.
    std::vector<cplx> nodes = tau_grid;
    for (const cplx& r : roots) {
      const double along = std::real(r * std::polar(1.0, -d));
      if (along > 0.0) nodes.push_back(std::polar(along, d));
      if (std::abs(r) <= rho) nodes.push_back(r);
    }
    for (const cplx& tau : nodes) {
      const double scale = 1.0 + std::abs(tau);
      for (const cplx& r : roots) {
        const double v = std::abs(tau - r) / scale;
        if (v < rep.M1) {
          rep.M1 = v;
          worst_tau_m1 = tau;
          worst_m_m1 = m;
        }
      }
      const double cp = std::abs(pm_eval(s, tau, m)) / (rabs * std::pow(scale, n));
      if (cp < rep.C_P) {
        rep.C_P = cp;
        worst_tau_cp = tau;
        worst_m_cp = m;
      }
    }
  }
  std::ostringstream a, b;
  a << "M1 attained at tau=" << worst_tau_m1 << " m=" << worst_m_m1 << " (direction " << d << ", rho " << rho << ")";
  b << "C_P attained at tau=" << worst_tau_cp << " m=" << worst_m_cp;
  rep.diagnostics = {a.str(), b.str()};
  rep.admissible = rep.M1 > 1e-8 && rep.C_P > 1e-8;
  return rep;
}

bool SectorCovering::sectors_intersect(int i, int j) const {
  const EpsSector &a = sectors.at(i), &b = sectors.at(j);
  const double dist = std::abs(wrap_angle(a.center() - b.center()));
  return dist <= 0.5 * (a.arg_high - a.arg_low) + 0.5 * (b.arg_high - b.arg_low);
}

std::pair<double, double> SectorCovering::overlap_args(int h) const {
  const EpsSector& a = sectors.at(h);
  const EpsSector& b = sectors.at((h + 1) % iota);
  const double shift = h + 1 == iota ? 2.0 * kPi : 0.0;
  return {b.arg_low + shift, a.arg_high};
}

SectorCovering build_good_covering(int iota, double epsilon0, double overlap, CoveringKind kind,
                                   const CoveringExtras& extras) {
  if (iota < 2) throw PreconditionError("build_good_covering: iota must be at least 2");
  if (!(overlap > 0.0) || !(overlap < 2.0 * kPi / iota))
    throw PreconditionError("build_good_covering: overlap must lie in (0, 2 pi / iota)");
  if (!(epsilon0 > 0.0)) throw PreconditionError("build_good_covering: epsilon0 must be positive");

  SectorCovering cov;
  cov.iota = iota;
  cov.kind = kind;
  cov.overlap = overlap;
  cov.t1 = extras.t1;
  if (kind == CoveringKind::Inner)
    cov.chi2 = extras.t2;
  else {
    cov.t2 = extras.t2;
    cov.rho2 = extras.t2.r_high;
  }
  const double ap = 2.0 * kPi / iota + overlap;
  for (int h = 0; h < iota; ++h) {
    const double c = 2.0 * kPi * h / iota;
    cov.sectors.push_back({c - 0.5 * ap, c + 0.5 * ap, epsilon0});
  }
  // Consecutive sectors intersect; all other pairs are disjoint.
  for (int i = 0; i < iota; ++i) {
    for (int j = i + 1; j < iota; ++j) {
      const bool consecutive = j == i + 1 || (i == 0 && j == iota - 1);
      if (cov.sectors_intersect(i, j) != consecutive)
        throw GeometryError("build_good_covering: sectors " + std::to_string(i) + " and " + std::to_string(j) +
                            (consecutive ? " do not overlap" : " overlap although not consecutive"));
    }
  }

  cov.directions.assign(iota, 0.0);
  cov.theta_h.assign(iota, 0.0);
  if (extras.spec == nullptr) {
    for (int h = 0; h < iota; ++h) cov.directions[h] = cov.sectors[h].center();
    return cov;
  }
  const ProblemSpec& s = *extras.spec;
  const auto root_args = root_arguments(s, separation_m_grid(FourierGrid{8.0, 161}));
  for (int h = 0; h < iota; ++h) {
    double best_score = -std::numeric_limits<double>::infinity();
    double best_gamma = 0.0;
    for (int c = 0; c < extras.candidates; ++c) {
      const double gamma = -kPi + 2.0 * kPi * c / extras.candidates;
      if (kind == CoveringKind::Inner)
        cov.theta_h[h] = gamma / s.k2 - (s.lambda2 - s.mu2) * cov.sectors[h].center() - extras.t2.arg_center;
      const auto dm = direction_margins(cov, s, h, gamma, extras.t1, extras.t2, root_args, extras.separation_aperture);
      const double score = std::min({dm.delta1, dm.delta3, std::sin(std::min(dm.roots, 0.5 * kPi))});
      if (score > best_score) {
        best_score = score;
        best_gamma = gamma;
      }
    }
    if (!(best_score > 0.0))
      throw GeometryError("build_good_covering: no admissible direction for sector " + std::to_string(h) +
                          " (best margin " + std::to_string(best_score) + ")");
    cov.directions[h] = best_gamma;
    if (kind == CoveringKind::Inner)
      cov.theta_h[h] = best_gamma / s.k2 - (s.lambda2 - s.mu2) * cov.sectors[h].center() - extras.t2.arg_center;
  }
  return cov;
}

GeometryReport check_admissible(const SectorCovering& cov, const AngularDomain& t1, const AngularDomain& t2,
                                const ProblemSpec& s) {
  GeometryReport rep;
  rep.delta1 = rep.delta2 = rep.delta3 = std::numeric_limits<double>::infinity();
  rep.M1 = rep.C_P = std::numeric_limits<double>::infinity();
  const auto ms = separation_m_grid(FourierGrid{8.0, 81});
  for (int h = 0; h < cov.iota; ++h) {
    const double gamma = cov.directions.at(h);
    const auto dm = direction_margins(cov, s, h, gamma, t1, t2, {}, 0.0);
    auto note = [&](const char* name, double v, double& slot) {
      if (v < slot) {
        slot = v;
        rep.diagnostics.push_back(std::string(name) + " lowered to " + std::to_string(v) + " by sector " +
                                  std::to_string(h) + " (direction " + std::to_string(gamma) + ")");
      }
    };
    note("delta1", dm.delta1, rep.delta1);
    note("delta2", dm.delta2, rep.delta2);
    note("delta3", dm.delta3, rep.delta3);
    const auto sep = sector_separation(s, gamma, s.rho, ms, separation_tau_grid(gamma, 0.05, s.rho, 1e3, 10));
    note("M1", sep.M1, rep.M1);
    note("C_P", sep.C_P, rep.C_P);
  }
  rep.admissible = rep.delta1 > 0.0 && rep.delta2 > 0.0 && rep.delta3 > 0.0 && rep.M1 > 1e-8 && rep.C_P > 1e-8;
  return rep;
}

std::vector<OverlapInfo> overlap_singularities(const SectorCovering& cov, const ProblemSpec& s) {
  std::vector<OverlapInfo> out;
  const auto ms = separation_m_grid(FourierGrid{8.0, 161});
  const int n = s.pm_degree();
  for (int h = 0; h < cov.iota; ++h) {
    OverlapInfo info;
    info.h = h;
    const double g0 = cov.directions.at(h), g1 = cov.directions.at((h + 1) % cov.iota);
    for (int l = 0; l < n; ++l) {
      bool between = false;
      double where = 0.0;
      for (double m : ms) {
        const double a = std::arg(pm_roots(s, m)[l]);
        if (angle_between(g0, g1, a)) {
          between = true;
          where = a;
          break;
        }
      }
      if (between) {
        ++info.roots_between;
        info.root_args.push_back(where);
      }
    }
    // Zeros of theta(u / T1) lie on the ray arg u = pi + arg T1.
    const auto [plo, phi] = cov.overlap_args(h);
    for (int i = 0; i <= 40 && !info.theta_zero_between; ++i)
      for (int j = 0; j <= 8 && !info.theta_zero_between; ++j) {
        const double arg_eps = plo + (phi - plo) * i / 40.0;
        const double arg_t1 = cov.t1.arg_center + cov.t1.aperture * (j / 8.0 - 0.5);
        info.theta_zero_between = angle_between(g0, g1, kPi + s.lambda1 * arg_eps + arg_t1);
      }
    out.push_back(info);
  }
  return out;
}

}  // namespace qlab
