#include "qlab/qkernel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

namespace qlab {

namespace {

constexpr double kMaxLog = 709.0;  // exp() overflows slightly above this

// log of |theta term n|: -n(n-1)/2 * lp + n * log|x|.
double log_term_modulus(long n, double lp, double log_abs_x) {
  const double nd = static_cast<double>(n);
  return -0.5 * nd * (nd - 1.0) * lp + nd * log_abs_x;
}

}  // namespace

void QuadratureConfig::validate() const {
  if (radial_nodes_per_decade <= 0) throw InputError("radial_nodes_per_decade must be positive");
  if (!(r_min > 0.0 && r_min < r_max)) throw InputError("need 0 < r_min < r_max");
  if (!(fourier_m_max > 0.0)) throw InputError("fourier_m_max must be positive");
  if (fourier_nodes < 3 || fourier_nodes % 2 == 0) throw InputError("fourier_nodes must be odd and >= 3");
  if (!(quad_tol > 0.0) || !(edge_tol > 0.0)) throw InputError("quadrature tolerances must be positive");
}

void QCalcParams::validate() const {
  if (!(q > 1.0)) throw DomainError("q must exceed 1");
  if (k <= Rational(0)) throw DomainError("k must be positive");
  if (!(series_tol > 0.0)) throw DomainError("series_tol must be positive");
  quad.validate();
}

RadialGrid RadialGrid::spanning(double r_min, double r_max, double h) {
  if (!(r_min > 0.0 && r_min < r_max) || !(h > 0.0)) throw DomainError("bad radial grid request");
  RadialGrid g;
  g.log_r0 = std::log(r_min);
  g.h = h;
  g.n = static_cast<int>(std::ceil((std::log(r_max) - g.log_r0) / h - 1e-9)) + 1;
  return g;
}

int RadialGrid::index_shift(double log_factor) const {
  const double s = log_factor / h;
  const double rounded = std::round(s);
  if (std::abs(s - rounded) > 1e-8 * std::max(1.0, std::abs(s)))
    throw AlignmentError("dilation by exp(" + std::to_string(log_factor) + ") is not a multiple of the grid step");
  return static_cast<int>(rounded);
}

std::vector<double> FourierGrid::nodes() const {
  std::vector<double> m(n);
  for (int j = 0; j < n; ++j) m[j] = node(j);
  return m;
}

FourierGrid FourierGrid::from(const QuadratureConfig& cfg) { return FourierGrid{cfg.fourier_m_max, cfg.fourier_nodes}; }

void FourierGrid::validate() const {
  if (!(m_max > 0.0) || n < 3 || n % 2 == 0) throw InputError("Fourier grid needs m_max > 0 and an odd node count");
}

// ---------------------------------------------------------------- theta ----

ThetaHorizon theta_horizon(cplx x, const QCalcParams& p) {
  if (x == cplx{}) throw DomainError("theta_q: x must be nonzero");
  const double lp = p.log_base();
  const double la = std::log(std::abs(x));
  const double log_cut = std::log(p.series_tol / 10.0);
  constexpr long kMaxTerms = 100000;

  ThetaHorizon hz;
  // Positive side: term ratio is |x| q^{-n/k}, so terms decrease once n >= log|x| / lp.
  const double peak_plus = la / lp;
  for (long n = 1;; ++n) {
    if (n > kMaxTerms) throw RangeError("theta_q: positive horizon exceeded", n);
    if (n >= peak_plus && log_term_modulus(n, lp, la) < log_cut) {
      hz.n_plus = n - 1;
      break;
    }
  }
  // Negative side: ratio of term -(j+1) to term -j is q^{-(j+1)/k} / |x|.
  const double peak_minus = -la / lp - 1.0;
  for (long j = 1;; ++j) {
    if (j > kMaxTerms) throw RangeError("theta_q: negative horizon exceeded", -j);
    if (j >= peak_minus && log_term_modulus(-j, lp, la) < log_cut) {
      hz.n_minus = j - 1;
      break;
    }
  }
  return hz;
}

cplx theta_q_truncated(cplx x, const QCalcParams& p, long n_minus, long n_plus) {
  if (x == cplx{}) throw DomainError("theta_q: x must be nonzero");
  const double lp = p.log_base();
  const double la = std::log(std::abs(x));
  const double ph = std::arg(x);
  cplx sum{};
  for (long n = -n_minus; n <= n_plus; ++n) {
    const double lm = log_term_modulus(n, lp, la);
    if (lm > kMaxLog) throw RangeError("theta_q: term overflows at index " + std::to_string(n), n);
    sum += std::polar(std::exp(lm), static_cast<double>(n) * ph);
  }
  return sum;
}

namespace {

/// Direct bilateral sum together with the sum of the term moduli.
std::pair<cplx, double> theta_direct(cplx x, const QCalcParams& p) {
  const ThetaHorizon hz = theta_horizon(x, p);
  const double lp = p.log_base();
  const double la = std::log(std::abs(x));
  const double ph = std::arg(x);
  cplx sum{};
  double mass = 0.0;
  for (long n = -hz.n_minus; n <= hz.n_plus; ++n) {
    const double lm = log_term_modulus(n, lp, la);
    if (lm > kMaxLog) throw RangeError("theta_q: term overflows at index " + std::to_string(n), n);
    const double t = std::exp(lm);
    sum += std::polar(t, static_cast<double>(n) * ph);
    mass += t;
  }
  return {sum, mass};
}

/**
 * Poisson-dual form: with l = log q^{1/k} and c = log(x) / l + 1/2,
 * theta(x) = sqrt(2 pi / l) e^{l c^2 / 2} sum_j e^{-2 pi^2 j^2 / l - 2 pi i j c}.
 * Each term is a Gaussian in arg x + 2 pi j, so the sum only cancels near the zeros of theta.
 */
cplx theta_dual(cplx x, const QCalcParams& p) {
  constexpr double kPi = std::numbers::pi;
  const double lp = p.log_base();
  const cplx c = cplx(std::log(std::abs(x)), std::arg(x)) / lp + 0.5;
  const cplx base = 0.5 * lp * c * c + 0.5 * std::log(2.0 * kPi / lp);
  auto log_term = [&](long j) {
    const double jd = static_cast<double>(j);
    return base - 2.0 * kPi * kPi * jd * jd / lp - cplx(0.0, 2.0 * kPi * jd) * c;
  };
  // Term moduli are log-concave in j with the peak at j in {-1, 0, 1}; stop 45 e-folds below it.
  double peak = -std::numeric_limits<double>::infinity();
  for (long j = -1; j <= 1; ++j) peak = std::max(peak, log_term(j).real());
  if (peak > kMaxLog) throw RangeError("theta_q: dual series overflows at index 0", 0);
  cplx sum = std::exp(log_term(0));
  for (long j = 1;; ++j) {
    const cplx lo = log_term(-j), hi = log_term(j);
    if (j >= 2 && std::max(lo.real(), hi.real()) < peak - 45.0) break;
    sum += std::exp(lo) + std::exp(hi);
  }
  return sum;
}

}  // namespace

cplx theta_q(cplx x, const QCalcParams& p) {
  if (x == cplx{}) throw DomainError("theta_q: x must be nonzero");
  const double lp = p.log_base();
  const double la = std::log(std::abs(x));
  // Far from the unit circle the terms grow to many times |theta|; theta(q^{j/k} x0) = q^{j(j+1)/(2k)} x0^j theta(x0)
  // moves the sum to q^{-1/k} < |x0| < q^{1/k}.
  const double j = std::trunc(la / lp);
  const double ph = std::arg(x);
  const cplx x0 = j == 0.0 ? x : std::polar(std::exp(la - j * lp), ph);
  const double log_scale = 0.5 * j * (j + 1.0) * lp + j * (la - j * lp);
  if (log_scale > kMaxLog) throw RangeError("theta_q: value overflows at reduction index", static_cast<long>(j));
  auto [value, mass] = theta_direct(x0, p);
  // For q^{1/k} close to 1 the terms stay of order one while |theta| decays like exp(-arg(x)^2 / (2 log q^{1/k})).
  if (mass > 1e4 * std::abs(value)) value = theta_dual(x0, p);
  return j == 0.0 ? value : std::polar(std::exp(log_scale), j * ph) * value;
}

cplx log_theta_q(cplx x, const QCalcParams& p) {
  if (x == cplx{}) throw DomainError("log_theta_q: x must be nonzero");
  const double lp = p.log_base();
  const double la = std::log(std::abs(x));
  const double m = std::round(la / lp);
  const cplx log_x0(la - m * lp, std::arg(x));
  const cplx x0 = std::exp(log_x0);
  const cplx th = theta_q(x0, p);
  const cplx lt = 0.5 * m * (m + 1.0) * lp + m * log_x0 + std::log(th);
  return {lt.real(), wrap_angle(lt.imag())};
}

double theta_lower_bound_margin(cplx x, const QCalcParams& p, double delta_tilde) {
  if (x == cplx{}) throw DomainError("theta_lower_bound_margin: x must be nonzero");
  if (!(delta_tilde > 0.0)) throw PreconditionError("delta_tilde must be positive");
  if (delta_tilde >= 1.0)
    throw PreconditionError("|1 + x q^{m/k}| tends to 1 <= delta_tilde as m -> -infinity");
  const double lp = p.log_base();
  const double la = std::log(std::abs(x));
  // Only indices with |x| q^{m/k} in [1 - delta_tilde, 1 + delta_tilde] can violate the condition.
  const long m_lo = static_cast<long>(std::floor((std::log(1.0 - delta_tilde) - la) / lp)) - 1;
  const long m_hi = static_cast<long>(std::ceil((std::log(1.0 + delta_tilde) - la) / lp)) + 1;
  for (long m = m_lo; m <= m_hi; ++m) {
    const double dist = std::abs(1.0 + x * std::exp(static_cast<double>(m) * lp));
    if (!(dist > delta_tilde))
      throw PreconditionError("proximity condition |1 + x q^{m/k}| > delta_tilde fails at m = " + std::to_string(m));
  }
  const double log_env = std::log(delta_tilde) + 0.5 * la * la / lp + 0.5 * la;
  return std::exp(log_theta_q(x, p).real() - log_env);
}

// ------------------------------------------------------------ Lambert W ----

std::pair<double, double> lambert_w_minus1_bracket(double u) {
  const double s = std::sqrt(2.0 * u);
  return {-1.0 - s - u, -1.0 - s - 2.0 * u / 3.0};
}

double lambert_w_minus1_from_log(double log_neg_y) {
  if (std::isnan(log_neg_y)) throw DomainError("lambert_w_minus1: NaN argument");
  // y = -exp(-u - 1); the branch point y = -1/e is u = 0.
  double u = -1.0 - log_neg_y;
  if (u < -8.0 * std::numeric_limits<double>::epsilon()) throw DomainError("lambert_w_minus1: y < -1/e");
  if (u <= 0.0) return -1.0;
  if (std::isinf(u)) throw DomainError("lambert_w_minus1: y = 0 has no finite preimage");

  auto [lo, hi] = lambert_w_minus1_bracket(u);
  // f(w) = w + log(-w) - log(-y) is increasing on w < -1 with f(lo) < 0 < f(hi).
  auto f = [&](double w) { return w + std::log(-w) - log_neg_y; };
  double w = 0.5 * (lo + hi);
  for (int it = 0; it < 200; ++it) {
    const double fw = f(w);
    if (fw == 0.0) return w;
    if (fw < 0.0)
      lo = w;
    else
      hi = w;
    const double dfw = (w + 1.0) / w;
    double next = w - fw / dfw;
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (std::abs(next - w) <= 2.0 * std::numeric_limits<double>::epsilon() * std::abs(w) || hi - lo <= 0.0)
      return next;
    w = next;
  }
  return w;
}

double lambert_w_minus1(double y) {
  constexpr double kBranch = -0.36787944117144233;  // -1/e rounded to double
  if (!(y < 0.0)) throw DomainError("lambert_w_minus1: y must be negative");
  if (y < kBranch * (1.0 + 4.0 * std::numeric_limits<double>::epsilon()))
    throw DomainError("lambert_w_minus1: y < -1/e");
  return lambert_w_minus1_from_log(std::log(-y));
}

// ----------------------------------------------------- Laplace constant ----

double pi_constant(const QCalcParams& p) {
  p.validate();
  const double lp = p.log_base();
  double log_prod = 0.0;
  for (long n = 0;; ++n) {
    const double x = std::exp(-static_cast<double>(n + 1) * lp);
    if (x < p.series_tol) break;
    log_prod -= std::log1p(-x);
  }
  return lp * std::exp(log_prod);
}

// -------------------------------------------------------- formal series ----

TruncatedSeries formal_q_borel(const TruncatedSeries& f, const QCalcParams& p) {
  TruncatedSeries out = f;
  for (std::size_t n = 0; n < out.coefficients.size(); ++n) {
    const auto nn = static_cast<std::int64_t>(n);
    const Rational e(nn * (nn - 1), 2);
    out.coefficients[n] /= std::exp(p.log_q_power_over_k(e));
  }
  return out;
}

TruncatedSeries series_times_monomial(const TruncatedSeries& f, int m, cplx scale) {
  if (m < 0) throw DomainError("series_times_monomial: negative power");
  TruncatedSeries out;
  out.coefficients.assign(f.coefficients.size() + static_cast<std::size_t>(m), cplx{});
  for (std::size_t n = 0; n < f.coefficients.size(); ++n) out.coefficients[n + m] = scale * f.coefficients[n];
  return out;
}

TruncatedSeries series_q_dilate(const TruncatedSeries& f, const Rational& j, double q) {
  TruncatedSeries out = f;
  for (std::size_t n = 0; n < out.coefficients.size(); ++n)
    out.coefficients[n] *= std::exp(std::log(q) * (j * Rational(static_cast<std::int64_t>(n))).to_double());
  return out;
}

// ------------------------------------------------------------ transforms ----

double wrap_angle(double a) { return std::remainder(a, 2.0 * std::numbers::pi); }

double ray_distance_to_minus_one(double phi) {
  const double c = std::cos(phi);
  return c >= 0.0 ? 1.0 : std::abs(std::sin(phi));
}

QuadratureResult q_laplace_ray(const RaySamples& f, cplx T, const QCalcParams& p, const LaplaceOptions& opt) {
  p.validate();
  if (T == cplx{}) throw DomainError("q_laplace_ray: T must be nonzero");
  if (static_cast<int>(f.values.size()) != f.grid.n) throw PreconditionError("q_laplace_ray: sample count mismatch");
  if (f.grid.n < 3) throw PreconditionError("q_laplace_ray: need at least three nodes");
  const double r1 = 0.5 * std::exp(std::log(p.q) * (0.5 - opt.alpha) / p.k.to_double());
  if (std::abs(T) > r1)
    throw DomainError("q_laplace_ray: |T| = " + std::to_string(std::abs(T)) + " exceeds r1 = " + std::to_string(r1));

  const cplx dir = std::polar(1.0, f.gamma);
  std::vector<cplx> g(f.grid.n);
  for (int j = 0; j < f.grid.n; ++j) {
    const cplx x = f.grid.radius(j) * dir / T;
    if (!(std::abs(1.0 + x) > opt.delta_tilde))
      throw DomainError("q_laplace_ray: node " + std::to_string(j) + " violates |1 + u/T| > delta_tilde");
    g[j] = f.values[j] == cplx{} ? cplx{} : f.values[j] * std::exp(-log_theta_q(x, p));
  }
  auto trapezoid = [&](int stride) {
    cplx s{};
    const int last = ((f.grid.n - 1) / stride) * stride;
    for (int j = 0; j <= last; j += stride) s += (j == 0 || j == last ? 0.5 : 1.0) * g[j];
    return s * (f.grid.h * stride);
  };
  const double pic = pi_constant(p);
  QuadratureResult res;
  res.value = trapezoid(1) / pic;
  const cplx half = trapezoid(2) / pic;
  res.error_estimate = std::abs(res.value - half);
  res.tail_estimate = std::max(std::abs(g.front()), std::abs(g.back())) / pic;
  const double scale = std::max(std::abs(res.value), 1e-300);
  if (res.error_estimate > p.quad.quad_tol * scale && res.error_estimate > 1e-300)
    throw AccuracyError("q_laplace_ray: half density estimate " + std::to_string(res.error_estimate) +
                        " exceeds tolerance");
  return res;
}

cplx inverse_fourier(const std::vector<cplx>& f, const FourierGrid& g, cplx z, double edge_tol) {
  g.validate();
  if (static_cast<int>(f.size()) != g.n) throw PreconditionError("inverse_fourier: sample count mismatch");
  const double h = g.h();
  cplx sum{};
  double peak = 0.0;
  for (int j = 0; j < g.n; ++j) {
    const double m = g.node(j);
    const cplx term = f[j] * std::exp(cplx(0.0, 1.0) * z * m);
    peak = std::max(peak, std::abs(term));
    sum += (j == 0 || j == g.n - 1 ? 0.5 : 1.0) * term;
  }
  const double edge = std::max(std::abs(f.front() * std::exp(cplx(0.0, 1.0) * z * g.node(0))),
                               std::abs(f.back() * std::exp(cplx(0.0, 1.0) * z * g.node(g.n - 1))));
  if (peak > 0.0 && edge > edge_tol * peak)
    throw AccuracyError("inverse_fourier: integrand not decayed at the grid edge (ratio " +
                        std::to_string(edge / peak) + ")");
  return sum * h / std::sqrt(2.0 * std::numbers::pi);
}

}  // namespace qlab
