/**
 * \file difference.cpp
 * \brief Differences of solutions attached to consecutive sectors: direct,
 *        by the ray and arc decomposition, and by residues at the roots of P_m.
 */
#include <algorithm>
#include <boost/math/quadrature/gauss.hpp>
#include <cmath>
#include <numbers>
#include <numeric>

#include "qlab/error.hpp"
#include "qlab/solver.hpp"

namespace qlab {

namespace {

constexpr double kInvSqrt2Pi = 0.39894228040143267794;

/// Nodes and weights of the n-point Gauss-Legendre rule on [-1, 1].
template <int N>
std::pair<std::vector<double>, std::vector<double>> gauss_rule() {
  using G = boost::math::quadrature::gauss<double, N>;
  std::vector<double> x, w;
  const auto& a = G::abscissa();
  const auto& b = G::weights();
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] == 0.0) {
      x.push_back(0.0);
      w.push_back(b[i]);
      continue;
    }
    x.push_back(a[i]);
    w.push_back(b[i]);
    x.push_back(-a[i]);
    w.push_back(b[i]);
  }
  return {x, w};
}

std::pair<std::vector<double>, std::vector<double>> gauss_legendre(int n) {
  switch (n) {
    case 10: return gauss_rule<10>();
    case 15: return gauss_rule<15>();
    case 20: return gauss_rule<20>();
    case 25: return gauss_rule<25>();
    case 30: return gauss_rule<30>();
    case 40: return gauss_rule<40>();
    case 50: return gauss_rule<50>();
    case 60: return gauss_rule<60>();
    default: throw PreconditionError("unsupported Gauss-Legendre order " + std::to_string(n));
  }
}

std::vector<cplx> to_std(const Eigen::VectorXcd& v) { return {v.data(), v.data() + v.size()}; }

struct Directions {
  double g0 = 0.0, g1 = 0.0;
};

Directions overlap_directions(const SectorCovering& cov, int h) {
  if (h < 0 || h >= cov.iota || static_cast<int>(cov.directions.size()) != cov.iota)
    throw PreconditionError("sector index out of range");
  return {cov.directions[h], cov.directions[(h + 1) % cov.iota]};
}

/// Log of the m-independent Laplace kernel exp(-log theta(u/T1) - u / T2^k2).
cplx log_kernel(const ProblemSpec& s, cplx u, cplx T1, cplx T2) {
  return -log_theta_q(u / T1, s.qparams()) - std::pow(1.0 / T2, s.k2) * u;
}

}  // namespace

bool theta_zero_between(const ProblemSpec& s, const SectorCovering& cov, int h, cplx t1, cplx epsilon) {
  const auto [g0, g1] = overlap_directions(cov, h);
  const cplx T1 = rational_power(epsilon, Rational(s.lambda1)) * t1;
  return angle_between(g0, g1, wrap_angle(std::arg(T1) + std::numbers::pi));
}

DifferenceResult solution_difference(const ProblemSpec& s, const SectorCovering& cov, int h, const OmegaField& w_h,
                                     const OmegaField& w_next, cplx t1, cplx t2, cplx z,
                                     const DifferenceOptions& opt) {
  const auto [g0, g1] = overlap_directions(cov, h);
  if (std::abs(wrap_angle(w_h.direction - g0)) > 1e-9 || std::abs(wrap_angle(w_next.direction - g1)) > 1e-9)
    throw PreconditionError("fields are not solved for the directions of sectors h and h+1");
  if (std::abs(w_h.epsilon - w_next.epsilon) > 1e-15 * std::abs(w_h.epsilon))
    throw PreconditionError("fields are solved at different eps");
  const cplx eps = w_h.epsilon;
  const cplx T1 = rational_power(eps, Rational(s.lambda1)) * t1;
  const cplx T2 = rational_power(eps, Rational(s.lambda2)) * t2;
  const FourierGrid& mg = w_h.grid.mgrid;
  const double pq = pi_constant(s.qparams());

  DifferenceResult out;
  const Eigen::VectorXcd U0 = assemble_U(s, w_h, g0, T1, T2).values;
  const Eigen::VectorXcd U1 = assemble_U(s, w_next, g1, T1, T2).values;
  out.direct = inverse_fourier(to_std(U1 - U0), mg, z);

  const RadialGrid& radial = w_h.grid.rays[w_h.ray_index(g0)].radial;
  const int j_arc = static_cast<int>(std::lround((std::log(0.5 * s.rho) - radial.log_r0) / radial.h));
  out.arc_radius = radial.radius(j_arc);

  if (angle_between(g0, g1, wrap_angle(std::arg(T1) + std::numbers::pi)))
    throw GeometryError("a zero of theta(u / T1) lies between the directions of sectors " + std::to_string(h) +
                        " and " + std::to_string((h + 1) % cov.iota));
  for (int j = 0; j < mg.n; ++j)
    for (const cplx r : pm_roots(s, mg.node(j)))
      if (std::abs(r) <= out.arc_radius * (1.0 + 1e-9) && angle_between(g0, g1, std::arg(r)))
        throw GeometryError("a root of P_m lies inside the arc between the directions");

  const auto [xs, ws] = gauss_legendre(opt.panel_nodes);
  auto integrand = [&](cplx u) -> Eigen::VectorXcd {
    return std::exp(log_kernel(s, u, T1, T2)) * omega_pointwise(s, eps, u, mg, w_h.r_min);
  };
  auto ray_integral = [&](double gamma) -> Eigen::VectorXcd {
    Eigen::VectorXcd acc = Eigen::VectorXcd::Zero(mg.n);
    double s0 = std::log(out.arc_radius);
    double prev_log = -std::numeric_limits<double>::infinity();
    for (int panel = 0; panel < 400; ++panel, s0 += opt.panel_width) {
      Eigen::VectorXcd part = Eigen::VectorXcd::Zero(mg.n);
      for (std::size_t k = 0; k < xs.size(); ++k) {
        const double sk = s0 + 0.5 * opt.panel_width * (xs[k] + 1.0);
        part += (0.5 * opt.panel_width * ws[k]) * integrand(std::polar(std::exp(sk), gamma));
      }
      acc += part;
      const double end_log = log_kernel(s, std::polar(std::exp(s0 + opt.panel_width), gamma), T1, T2).real();
      const double size = part.cwiseAbs().maxCoeff(), total = acc.cwiseAbs().maxCoeff();
      if (end_log < prev_log && size <= opt.tail_cut * total) return acc;
      prev_log = end_log;
    }
    throw AccuracyError("ray integral did not decay within 400 panels");
  };
  const Eigen::VectorXcd j1 = ray_integral(g1) / pq;
  const Eigen::VectorXcd j2 = ray_integral(g0) / pq;

  const auto [xa, wa] = gauss_legendre(opt.arc_nodes);
  const double sweep = wrap_angle(g1 - g0);
  Eigen::VectorXcd j3 = Eigen::VectorXcd::Zero(mg.n);
  for (std::size_t k = 0; k < xa.size(); ++k) {
    const double th = g0 + 0.5 * sweep * (xa[k] + 1.0);
    j3 += (0.5 * sweep * wa[k]) * cplx(0.0, 1.0) * integrand(std::polar(out.arc_radius, th));
  }
  j3 /= pq;
  out.J1 = inverse_fourier(to_std(j1), mg, z);
  out.J2 = inverse_fourier(to_std(j2), mg, z);
  out.J3 = inverse_fourier(to_std(j3), mg, z);
  return out;
}

namespace {

/// log(sum exp(a_i)) for complex logarithms a_i.
cplx log_sum_exp(const std::vector<cplx>& a) {
  double top = -std::numeric_limits<double>::infinity();
  for (const cplx& x : a) top = std::max(top, x.real());
  if (!std::isfinite(top)) return cplx(-std::numeric_limits<double>::infinity(), 0.0);
  cplx sum{};
  for (const cplx& x : a) sum += std::exp(x - top);
  return top + std::log(sum);
}

struct ResidueSample {
  bool skipped = false;
  bool empty = true;
  cplx L{};                 ///< log of (u_{h+1} - u_h)(m) e^{i z m} when not skipped
  double skip_log = -std::numeric_limits<double>::infinity();
};

}  // namespace

CocycleValue cocycle_residue(const ProblemSpec& s, const SectorCovering& cov, int h, cplx t1, cplx t2, cplx z,
                             cplx epsilon, const CocycleOptions& opt) {
  const auto [g0, g1] = overlap_directions(cov, h);
  if (theta_zero_between(s, cov, h, t1, epsilon))
    throw GeometryError("a zero of theta(u / T1) lies between the directions; the residue formula does not apply");
  const cplx T1 = rational_power(epsilon, Rational(s.lambda1)) * t1;
  const cplx T2 = rational_power(epsilon, Rational(s.lambda2)) * t2;
  const QCalcParams qp = s.qparams();
  const FourierGrid& mg = opt.mgrid;
  const double lq = std::log(s.q);
  const int N = s.pm_degree();
  const double pc = s.pm_coefficient();
  const cplx inv_t2k = std::pow(1.0 / T2, s.k2);
  // Closing the contour at infinity: the difference is -2 pi i (counterclockwise) times the residues.
  const double orient = wrap_angle(g1 - g0) > 0.0 ? 1.0 : -1.0;
  const cplx log_pref = std::log(orient * cplx(0.0, -2.0 * std::numbers::pi) / pi_constant(qp));

  const int n_sub = dilation_subdivision(s, 1);
  std::int64_t g = 0;
  for (int l1 = 0; l1 < s.n1(); ++l1) g = std::gcd(g, std::abs((s.dilation_exponent(l1) * Rational(n_sub * s.k1)).num()));
  const double step = lq * static_cast<double>(g) / (n_sub * s.k1);

  auto chain_ok = [&](cplx tau) {
    const double r = std::abs(tau);
    if (r <= opt.r_min) return true;
    const int J = static_cast<int>(std::floor(std::log(r / opt.r_min) / step));
    for (int j = 0; j <= J; ++j) {
      const cplx x = tau * std::exp(-j * step);
      for (int i = 0; i < mg.n; ++i) {
        const double m1 = mg.node(i);
        const double scale = std::abs(s.Q.at_im(m1)) + pc * std::pow(std::abs(x), N) * std::abs(s.R_top.at_im(m1));
        if (std::abs(pm_eval(s, x, m1)) < opt.chain_margin * scale) return false;
      }
    }
    return true;
  };

  auto sample = [&](double m) {
    ResidueSample out;
    std::vector<cplx> logs;
    for (const cplx q0 : pm_roots(s, m)) {
      if (!angle_between(g0, g1, std::arg(q0))) continue;
      out.empty = false;
      const cplx base = -inv_t2k * q0 - log_theta_q(q0 / T1, qp) - std::log(q0) - std::log(pm_derivative(s, q0, m));
      cplx numer = s.psi(q0, m, epsilon);
      for (int l1 = 0; l1 < s.n1() && !out.skipped; ++l1) {
        const cplx tau = std::exp(lq * s.dilation_exponent(l1).to_double()) * q0;
        if (!chain_ok(tau)) {
          out.skipped = true;
          break;
        }
        const Eigen::VectorXcd w = omega_pointwise(s, epsilon, tau, mg, opt.r_min);
        for (int l2 = 0; l2 < s.n2(); ++l2) {
          cplx conv{};
          for (int i = 0; i < mg.n; ++i)
            conv += s.C[l1][l2](m - mg.node(i), epsilon) * s.R[l1][l2].at_im(mg.node(i)) * w(i);
          conv *= kInvSqrt2Pi * mg.h();
          numer += rational_power(epsilon, s.eps_power(l1, l2)) * s.term_coefficient(l1, l2) *
                   rational_power(q0, s.tau_power(l1, l2)) * conv;
        }
      }
      if (out.skipped) {
        const double est = std::log(10.0 * std::abs(s.psi(q0, m, epsilon))) + base.real() + log_pref.real();
        out.skip_log = std::max(out.skip_log, est);
        continue;
      }
      logs.push_back(base + std::log(numer));
    }
    if (!out.skipped && !out.empty) out.L = log_pref + log_sum_exp(logs) + cplx(0.0, 1.0) * z * m;
    return out;
  };

  CocycleValue res;
  std::vector<double> ms;
  std::vector<ResidueSample> coarse;
  for (int j = 0; j < mg.n; ++j) {
    ms.push_back(mg.node(j));
    coarse.push_back(sample(mg.node(j)));
  }
  double top = -std::numeric_limits<double>::infinity();
  for (const auto& c : coarse)
    if (!c.skipped && !c.empty) top = std::max(top, c.L.real());
  for (const auto& c : coarse) {
    if (!c.empty) res.roots_crossed = 1;
    res.skipped_log_bound = std::max(res.skipped_log_bound, c.skip_log);
  }
  if (!std::isfinite(top)) {
    for (const auto& c : coarse) res.m_skipped += c.skipped ? 1 : 0;
    return res;
  }
  int lo = mg.n, hi = -1;
  for (int j = 0; j < mg.n; ++j)
    if (!coarse[j].skipped && !coarse[j].empty && coarse[j].L.real() > top - 40.0) {
      lo = std::min(lo, j);
      hi = std::max(hi, j);
    }
  lo = std::max(lo - 1, 0);
  hi = std::min(hi + 1, mg.n - 1);
  res.roots_crossed = 0;
  for (const cplx q0 : pm_roots(s, mg.node((lo + hi) / 2)))
    if (angle_between(g0, g1, std::arg(q0))) ++res.roots_crossed;

  const int P = std::max(opt.refine_points, 3);
  const double a = mg.node(lo), b = mg.node(hi), dm = (b - a) / (P - 1);
  std::vector<cplx> terms;
  for (int k = 0; k < P; ++k) {
    const ResidueSample r = sample(a + k * dm);
    if (r.skipped) {
      ++res.m_skipped;
      res.skipped_log_bound = std::max(res.skipped_log_bound, r.skip_log + std::log(dm));
      continue;
    }
    if (r.empty) continue;
    const double w = (k == 0 || k == P - 1) ? 0.5 : 1.0;
    terms.push_back(r.L + std::log(w * dm * kInvSqrt2Pi));
  }
  const cplx total = log_sum_exp(terms);
  res.value.log_abs = total.real();
  res.value.arg = total.imag();
  return res;
}

}  // namespace qlab
