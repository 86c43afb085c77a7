/**
 * \file asymptotics.cpp
 * \brief Mixed envelope and maximizer, growth bounds of U_gamma, cocycle ladders
 *        and certification of the hypotheses of the Ramis-Sibuya theorem.
 */
#include <algorithm>
#include <boost/math/tools/minima.hpp>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>

#include "qlab/asymptotics.hpp"
#include "qlab/error.hpp"

namespace qlab {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double log_add(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double m = std::max(a, b);
  return m + std::log1p(std::exp(std::min(a, b) - m));
}

std::string format_double(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", x);
  return buf;
}

/// Coefficients of tau -> log Psi(e^tau) = n tau - a tau^2 + b tau log tau.
struct PsiExponent {
  double a = 0.0;
  double b = 0.0;
};

PsiExponent psi_exponent(const EnvelopeParams& e, double q) {
  const double lq = std::log(q);
  return {(e.k1pp * e.lambda1 * e.lambda1).to_double() / (2.0 * lq), e.A().to_double() / lq};
}

double log_psi_bar(int n, double tau, const PsiExponent& c) {
  const double loglog = tau > 0.0 ? c.b * tau * std::log(tau) : 0.0;
  return n * tau - c.a * tau * tau + loglog;
}

}  // namespace

// ------------------------------------------------------ mixed envelope ----

EnvelopeParams EnvelopeParams::from_spec(const ProblemSpec& s) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9f", s.k1pp);
  EnvelopeParams e;
  e.k1 = Rational(s.k1);
  e.k1p = Rational(s.k1p);
  e.k1pp = Rational::parse(buf);
  e.k2 = Rational(s.k2);
  e.lambda1 = Rational(s.lambda1);
  e.lambda2 = Rational(s.lambda2);
  e.mu2 = Rational(s.mu2);
  return e;
}

Rational EnvelopeParams::A() const { return k1p * (mu2 - lambda2) * k2; }
Rational EnvelopeParams::C() const { return k1pp * lambda1 * lambda1 / A(); }
Rational EnvelopeParams::S() const { return A() / (k1pp * lambda1 * lambda1); }
Rational EnvelopeParams::K() const { return Rational(9) * k1pp * lambda1 * lambda1 / Rational(7); }

void EnvelopeParams::validate() const {
  const Rational zero{0};
  if (!(mu2 > lambda2)) throw PreconditionError("envelope parameters: mu2 must exceed lambda2");
  if (!(k1pp > zero && k1pp < k1)) throw PreconditionError("envelope parameters: k1'' must lie in (0, k1)");
  if (!(k1p > zero && k2 > zero && lambda1 != zero))
    throw PreconditionError("envelope parameters: k1', k2 must be positive and lambda1 nonzero");
  if (!(A() > zero && C() > zero && S() > zero && K() > zero))
    throw PreconditionError("envelope parameters: A, C, S and K must be positive");
}

double log_psi_envelope(int n, double x, const EnvelopeParams& e, double q) {
  if (!(x > 0.0)) throw DomainError("psi_envelope: x must be positive");
  return log_psi_bar(n, std::log(x), psi_exponent(e, q));
}

double psi_envelope(int n, double x, const EnvelopeParams& e, double q) {
  return std::exp(log_psi_envelope(n, x, e, q));
}

int tau_threshold(const EnvelopeParams& e, double q) {
  const double t = e.A().to_double() * std::log(e.C().to_double()) / std::log(q);
  return std::max(0, static_cast<int>(std::floor(t)) + 1);
}

TauMaximizer tau_n_maximizer(int n, const EnvelopeParams& e, double q) {
  e.validate();
  const double lq = std::log(q);
  const double A = e.A().to_double(), C = e.C().to_double();
  TauMaximizer r;
  r.u0 = n * lq / A - std::log(C);
  if (!(r.u0 > 0.0)) {
    const int n0 = tau_threshold(e, q);
    throw RangeError("tau_n_maximizer: n = " + std::to_string(n) + " is too small, the maximizer needs n >= " +
                         std::to_string(n0),
                     n0);
  }
  // C tau - log(C tau) = u0 + 1, i.e. -C tau = W_{-1}(-e^{-1-u0}).
  r.tau = -lambert_w_minus1_from_log(-1.0 - r.u0) / C;
  const double root = std::sqrt(2.0 * r.u0);
  r.low = (1.0 + root + 2.0 * r.u0 / 3.0) / C;
  r.high = (1.0 + root + r.u0) / C;
  const double kl2 = (e.k1pp * e.lambda1 * e.lambda1).to_double();
  r.stationarity = n - kl2 / lq * r.tau + A / lq * (std::log(r.tau) + 1.0);
  return r;
}

double log_psi_grid_max(int n, const EnvelopeParams& e, double q, double tau_lo, double tau_hi, int points) {
  if (points < 2 || !(tau_hi > tau_lo)) throw PreconditionError("log_psi_grid_max: empty grid");
  const PsiExponent c = psi_exponent(e, q);
  double best = kNegInf;
  for (int i = 0; i < points; ++i) {
    const double tau = tau_lo + (tau_hi - tau_lo) * i / (points - 1);
    best = std::max(best, log_psi_bar(n, tau, c));
  }
  return best;
}

MixedBoundReport check_mixed_bound(int n_first, int n_last, const EnvelopeParams& e, double q) {
  e.validate();
  if (n_last < n_first + 2) throw PreconditionError("check_mixed_bound: the n range needs at least three values");
  const PsiExponent c = psi_exponent(e, q);
  const double lq = std::log(q);
  const double S = e.S().to_double(), K = e.K().to_double();
  MixedBoundReport rep;
  for (int n = n_first; n <= n_last; ++n) {
    const TauMaximizer t = tau_n_maximizer(n, e, q);
    const double at_tau_n = log_psi_bar(n, t.tau, c);
    const auto [tau_star, neg] = boost::math::tools::brent_find_minima(
        [&](double tau) { return -log_psi_bar(n, tau, c); }, 0.5 * t.low, 1.5 * t.high,
        std::numeric_limits<double>::digits);
    MixedBoundRow row;
    row.n = n;
    row.tau_star = -neg >= at_tau_n ? tau_star : t.tau;
    row.log_max_psi = std::max(-neg, at_tau_n);
    rep.max_refinement_shift = std::max(rep.max_refinement_shift, std::abs(-neg - at_tau_n));
    row.y = row.log_max_psi - S * std::lgamma(n + 1.0) - n * (n + 1.0) * lq / K;
    rep.rows.push_back(row);
  }
  // Least-squares line y = log C_hat + n log A_hat.
  const auto m = static_cast<double>(rep.rows.size());
  double sn = 0.0, sy = 0.0, snn = 0.0, sny = 0.0;
  for (const auto& r : rep.rows) {
    sn += r.n;
    sy += r.y;
    snn += static_cast<double>(r.n) * r.n;
    sny += r.n * r.y;
  }
  const double slope = (m * sny - sn * sy) / (m * snn - sn * sn);
  const double intercept = (sy - slope * sn) / m;
  std::vector<double> raw;
  for (const auto& r : rep.rows) raw.push_back(r.y - intercept - slope * r.n);
  const std::size_t L = raw.size();
  if (raw[L - 1] > 0.0 && raw[L - 2] > 0.0 && raw[L - 3] > 0.0 && raw[L - 1] > raw[L - 2] && raw[L - 2] > raw[L - 3])
    throw BoundViolationError("check_mixed_bound: regression residuals are positive and growing at n = " +
                              std::to_string(rep.rows.back().n));
  rep.log_A_hat = slope;
  rep.log_C_hat = intercept + *std::max_element(raw.begin(), raw.end());
  rep.holds = true;
  for (auto& r : rep.rows) {
    r.residual = r.y - rep.log_C_hat - rep.log_A_hat * r.n;
    rep.holds = rep.holds && r.residual <= 1e-12 * std::max(1.0, std::abs(r.y));
  }
  return rep;
}

// ------------------------------------------------------------ U bounds ----

std::vector<SamplePoint> u_bound_samples(const ProblemSpec& s, double gamma, double t1_abs, double lo, double hi,
                                         int count) {
  if (count < 2 || !(hi > lo) || !(lo > 0.0)) throw PreconditionError("u_bound_samples: need 0 < lo < hi and count >= 2");
  std::vector<SamplePoint> out;
  for (int i = 0; i < count; ++i) {
    SamplePoint p;
    p.T1 = std::polar(t1_abs, gamma);
    p.T2 = std::polar(lo * std::pow(hi / lo, static_cast<double>(i) / (count - 1)), gamma / s.k2);
    out.push_back(p);
  }
  return out;
}

UBoundReport verify_U_bounds(const ProblemSpec& s, const OmegaField& omega, URegime regime, double gamma,
                             const std::vector<SamplePoint>& samples, const UBoundOptions& opt) {
  if (samples.size() < 2) throw PreconditionError("verify_U_bounds: at least two samples are required");
  const double lq = std::log(s.q);
  const FourierGrid& mg = omega.grid.mgrid;
  UBoundReport rep;
  rep.regime = regime;
  for (const auto& p : samples) {
    const double r1 = std::abs(p.T1), r2 = std::abs(p.T2);
    if (!(r1 < opt.rho1)) throw PreconditionError("verify_U_bounds: |T1| = " + format_double(r1) + " is not below rho1");
    const bool in_regime = regime == URegime::Far ? r2 > opt.t2_threshold : r2 < opt.t2_threshold;
    if (!in_regime)
      throw PreconditionError("verify_U_bounds: |T2| = " + format_double(r2) + " lies outside the " +
                              (regime == URegime::Far ? "far" : "near") + " regime");
    UBoundRow row;
    row.t2_abs = r2;
    row.delta3 = std::cos(gamma - s.k2 * std::arg(p.T2));
    if (!(row.delta3 > 0.0)) throw PreconditionError("verify_U_bounds: cos(gamma - k2 arg T2) must be positive");

    const Eigen::VectorXcd U = assemble_U(s, omega, gamma, p.T1, p.T2).values;
    row.log_max_weighted = kNegInf;
    double log_max_U = kNegInf;
    for (int j = 0; j < mg.n; ++j) {
      const double m = std::abs(mg.node(j));
      const double lu = std::log(std::abs(U(j)));
      log_max_U = std::max(log_max_U, lu);
      row.log_max_weighted = std::max(row.log_max_weighted, lu + s.mu * std::log1p(m) + s.beta * m);
    }
    const double t2k = std::pow(r2, s.k2);
    row.near_literal = log_max_U + s.rho * row.delta3 / (2.0 * t2k);

    const double lr = std::log(s.rho / r1);
    const double t1_part = 0.5 * std::log(r1) - s.k1 / (2.0 * lq) * lr * lr;
    if (regime == URegime::Far) {
      const double lx = std::log(t2k / row.delta3);
      const double kp = s.k1p / lq;
      const double inner = 0.5 * std::log(lx) + kp * lx * lx * std::log(kp * lx);
      const double term = t1_part + lx + 0.5 * kp * lx * lx + s.alpha * lx + log_add(0.0, inner);
      row.log_bracket = log_add(0.0, term);
    } else {
      row.log_bracket = log_add(0.0, t1_part - s.rho * row.delta3 / (2.0 * t2k));
    }
    row.log_ratio = row.log_max_weighted - row.log_bracket;
    rep.rows.push_back(row);
  }
  std::sort(rep.rows.begin(), rep.rows.end(), [](const UBoundRow& a, const UBoundRow& b) { return a.t2_abs < b.t2_abs; });
  const std::size_t half = rep.rows.size() / 2;
  double small_half = kNegInf, large_half = kNegInf;
  for (std::size_t i = 0; i < rep.rows.size(); ++i) {
    double& dst = i < half ? small_half : large_half;
    dst = std::max(dst, rep.rows[i].log_ratio);
  }
  rep.max_log_ratio_limit_half = regime == URegime::Far ? large_half : small_half;
  rep.max_log_ratio_other_half = regime == URegime::Far ? small_half : large_half;
  rep.log_constant = std::max(small_half, large_half);
  rep.passed = rep.max_log_ratio_limit_half == kNegInf ||
               rep.max_log_ratio_limit_half <= rep.max_log_ratio_other_half + std::log(opt.growth_factor);
  return rep;
}

// ----------------------------------------------------------- cocycles ----

std::vector<double> eps_ladder(double eps0, double decades, double ratio) {
  if (!(eps0 > 0.0) || !(decades > 0.0) || !(ratio > 0.0 && ratio < 1.0))
    throw PreconditionError("eps_ladder: need eps0 > 0, decades > 0 and ratio in (0, 1)");
  const int steps = static_cast<int>(std::ceil(decades * std::log(10.0) / -std::log(ratio) - 1e-9));
  std::vector<double> out;
  for (int i = 0; i <= steps; ++i) out.push_back(eps0 * std::pow(ratio, i));
  return out;
}

std::string to_string(CocycleSource s) {
  switch (s) {
    case CocycleSource::Zero:
      return "zero";
    case CocycleSource::Residue:
      return "residue";
    case CocycleSource::Direct:
      return "direct";
    case CocycleSource::Unmeasured:
      return "unmeasured";
  }
  return "unknown";
}

std::vector<std::pair<double, double>> OverlapCocycles::pairs() const {
  std::vector<std::pair<double, double>> out;
  for (std::size_t i = 0; i < abs_eps.size(); ++i) out.emplace_back(abs_eps[i], log_abs[i]);
  return out;
}

cplx overlap_t2(const ProblemSpec& s, const SectorCovering& cov, int h, const CocyclePoint& p, cplx eps) {
  if (cov.kind == CoveringKind::Outer) return p.t2_or_x2;
  return p.t2_or_x2 * std::polar(1.0, cov.theta_h.at(static_cast<std::size_t>(h))) /
         rational_power(eps, Rational(s.mu2));
}

OverlapCocycles residue_cocycles(const ProblemSpec& s, const SectorCovering& cov, int h, const CocyclePoint& p,
                                 const std::vector<double>& ladder, const CocycleOptions& opt) {
  OverlapCocycles out;
  out.h = h;
  const auto [lo, hi] = cov.overlap_args(h);
  out.eps_arg = 0.5 * (lo + hi);
  int roots = 0;
  double worst_skip = kNegInf;
  for (const double a : ladder) {
    const cplx eps = std::polar(a, out.eps_arg);
    if (theta_zero_between(s, cov, h, p.t1, eps)) {
      out.source = CocycleSource::Unmeasured;
      out.abs_eps.clear();
      out.log_abs.clear();
      out.note = "a zero of theta(u/T1) lies between the directions at |eps| = " + format_double(a) +
                 "; the residue formula does not apply";
      return out;
    }
    const CocycleValue v = cocycle_residue(s, cov, h, p.t1, overlap_t2(s, cov, h, p, eps), p.z, eps, opt);
    roots = std::max(roots, v.roots_crossed);
    if (v.roots_crossed == 0) continue;
    out.abs_eps.push_back(a);
    out.log_abs.push_back(v.value.log_abs);
    if (v.m_skipped > 0) worst_skip = std::max(worst_skip, v.skipped_log_bound - v.value.log_abs);
  }
  if (roots == 0) {
    out.source = CocycleSource::Zero;
    out.abs_eps.clear();
    out.log_abs.clear();
    out.note = "no root of P_m and no theta zero between the directions";
    return out;
  }
  out.source = CocycleSource::Residue;
  out.note = std::to_string(roots) + " root(s) of P_m crossed";
  if (worst_skip > kNegInf) out.note += "; skipped m samples bounded by exp(" + format_double(worst_skip) + ") relative";
  return out;
}

OverlapCocycles direct_cocycles(const ProblemSpec& s, const SectorCovering& cov, int h, const CocyclePoint& p,
                                const std::vector<double>& ladder, const SolverOptions& opt, double floor_rel) {
  OverlapCocycles out;
  out.h = h;
  out.source = CocycleSource::Direct;
  const auto [lo, hi] = cov.overlap_args(h);
  out.eps_arg = 0.5 * (lo + hi);
  const int next = (h + 1) % cov.iota;
  for (const double a : ladder) {
    const cplx eps = std::polar(a, out.eps_arg);
    const cplx t2 = overlap_t2(s, cov, h, p, eps);
    const auto w0 = solve_omega(s, cov.directions[static_cast<std::size_t>(h)], eps, opt).first;
    const auto w1 = solve_omega(s, cov.directions[static_cast<std::size_t>(next)], eps, opt).first;
    cplx u0{}, u1{};
    try {
      u0 = assemble_u(s, w0, p.t1, t2, p.z);
      u1 = assemble_u(s, w1, p.t1, t2, p.z);
    } catch (const DomainError& e) {
      out.note = "stopped at |eps| = " + format_double(a) + ": " + e.what();
      return out;
    }
    const double diff = std::abs(u1 - u0);
    if (!(diff > floor_rel * std::abs(u0))) {
      out.note = "difference below the cancellation floor " + format_double(floor_rel) + " |u_h| at |eps| = " +
                 format_double(a);
      return out;
    }
    out.abs_eps.push_back(a);
    out.log_abs.push_back(std::log(diff));
    out.log_reference.push_back(std::log(std::abs(u0)));
  }
  out.note = "full ladder measured";
  return out;
}

// ------------------------------------------------------- Ramis-Sibuya ----

bool RamisSibuyaReport::all_passed() const {
  return std::all_of(overlaps.begin(), overlaps.end(), [](const OverlapVerdict& v) { return v.passed(); });
}

RamisSibuyaReport ramis_sibuya_check(const SectorCovering& cov, const std::vector<OverlapCocycles>& data,
                                     const FlatnessModel& model, double k, double q, double lead_tol) {
  RamisSibuyaReport rep;
  rep.k = k;
  rep.q = q;
  const double target = -k / (2.0 * std::log(q));
  for (int h = 0; h < cov.iota; ++h) {
    const auto it = std::find_if(data.begin(), data.end(), [h](const OverlapCocycles& d) { return d.h == h; });
    if (it == data.end()) throw InputError("ramis_sibuya_check: no cocycle data for overlap " + std::to_string(h));
    OverlapVerdict v;
    v.h = h;
    v.source = it->source;
    v.leading_target = target;
    if (it->source == CocycleSource::Zero) {
      v.bounded = v.flat = true;
      v.note = "zero cocycle";
      rep.overlaps.push_back(v);
      continue;
    }
    if (it->source == CocycleSource::Unmeasured || it->abs_eps.empty()) {
      v.note = "not certified: " + it->note;
      rep.overlaps.push_back(v);
      continue;
    }
    // Boundedness: finite values, and the smallest decade does not exceed the rest.
    const double e_min = *std::min_element(it->abs_eps.begin(), it->abs_eps.end());
    double small = kNegInf, rest = kNegInf;
    bool finite = true;
    for (std::size_t i = 0; i < it->abs_eps.size(); ++i) {
      finite = finite && std::isfinite(it->log_abs[i]);
      double& dst = it->abs_eps[i] <= 10.0 * e_min ? small : rest;
      dst = std::max(dst, it->log_abs[i]);
    }
    v.bounded = finite && (rest == kNegInf || small <= rest + std::log(2.0));
    try {
      FlatnessFit fit = fit_flatness(it->pairs(), model);
      const double c1 = fit.coefficients(1);
      double g_small = kNegInf, g_rest = kNegInf;
      for (std::size_t i = 0; i < fit.abs_eps.size(); ++i) {
        const double L = std::log(fit.abs_eps[i]);
        const double g = fit.log_values[i] + k / (2.0 * std::log(q)) * L * L - c1 * L;
        double& dst = fit.abs_eps[i] <= 10.0 * e_min ? g_small : g_rest;
        dst = std::max(dst, g);
      }
      const bool lead_ok = model.kind == FlatnessModelKind::Gevrey ||
                           std::abs(fit.leading() - target) <= lead_tol * std::abs(target);
      const bool remainder_ok = g_rest == kNegInf || g_small <= g_rest + std::log(2.0);
      v.flat = fit.accepted() && lead_ok && remainder_ok;
      v.note = "leading " + format_double(fit.leading()) + " (target " + format_double(target) + "), residual " +
               format_double(fit.residual);
      if (!fit.accepted()) v.note += "; model rejected";
      if (!lead_ok) v.note += "; leading coefficient off target";
      if (!remainder_ok) v.note += "; remainder grows on the smallest decade";
      v.fit = std::move(fit);
    } catch (const Error& e) {
      v.note = std::string("not certified: ") + e.what();
    }
    rep.overlaps.push_back(std::move(v));
  }
  return rep;
}

}  // namespace qlab
