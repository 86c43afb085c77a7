/**
 * \file qkernel.hpp
 * \brief Special functions and integral transforms of q-calculus.
 *
 * Jacobi theta of order k, the -1 branch of Lambert W, the normalizing
 * constant of the q-Laplace transform, the formal q-Borel transform, the
 * numerical q-Laplace transform along a ray and the inverse Fourier transform.
 */
#pragma once

#include <cmath>
#include <complex>
#include <utility>
#include <vector>

#include "qlab/error.hpp"
#include "qlab/polynomial.hpp"
#include "qlab/rational.hpp"

namespace qlab {

using cplx = std::complex<double>;

/// Discretization controls for ray integrals and Fourier integrals.
struct QuadratureConfig {
  int radial_nodes_per_decade = 40;
  double r_min = 1e-12;
  double r_max = 1e6;
  double fourier_m_max = 8.0;
  int fourier_nodes = 161;  ///< odd, so that m = 0 is a node and differences of nodes are nodes
  double quad_tol = 1e-9;   ///< tolerance on the full versus half density self-estimate
  double edge_tol = 1e-6;   ///< allowed relative size of a Fourier integrand at the grid edge

  void validate() const;
};

/// The pair (q, k) with truncation and quadrature controls.
struct QCalcParams {
  double q = 2.0;
  Rational k{1};
  double series_tol = 1e-17;
  QuadratureConfig quad{};

  void validate() const;
  /// log of the base q^{1/k} of the theta function.
  double log_base() const { return std::log(q) * static_cast<double>(k.den()) / static_cast<double>(k.num()); }
  /// log of q^{e/k} computed from the exact exponent e/k.
  double log_q_power_over_k(const Rational& e) const { return std::log(q) * (e / k).to_double(); }
};

/// Geometric radial grid r_j = exp(log_r0 + j h), j = 0..n-1, uniform in s = log r.
struct RadialGrid {
  double log_r0 = 0.0;
  double h = 0.1;
  int n = 0;

  double log_radius(int j) const { return log_r0 + h * j; }
  double radius(int j) const { return std::exp(log_radius(j)); }
  /// Grid with step h whose node set contains every r_min * exp(i h) up to r_max.
  static RadialGrid spanning(double r_min, double r_max, double h);
  /// Integer number of nodes corresponding to multiplication by exp(log_factor); throws AlignmentError.
  int index_shift(double log_factor) const;
};

/// Uniform symmetric grid m_j = (j - (n-1)/2) h on [-m_max, m_max] with an odd node count.
struct FourierGrid {
  double m_max = 8.0;
  int n = 161;

  double h() const { return 2.0 * m_max / (n - 1); }
  double node(int j) const { return (j - (n - 1) / 2) * h(); }
  std::vector<double> nodes() const;
  static FourierGrid from(const QuadratureConfig& cfg);
  void validate() const;
};

/// Finite power series a_0 + a_1 T + ... + a_N T^N.
struct TruncatedSeries {
  std::vector<cplx> coefficients;
};

/// Samples of a function along the ray arg u = gamma on a geometric radial grid.
struct RaySamples {
  double gamma = 0.0;
  RadialGrid grid{};
  std::vector<cplx> values;
};

struct LaplaceOptions {
  double alpha = 0.0;         ///< enters the admissible radius r1 = q^{(1/2 - alpha)/k} / 2
  double delta_tilde = 1e-3;  ///< lower bound required for |1 + u/T| on the nodes
};

/// A quadrature value with its self-reported error estimates.
struct QuadratureResult {
  cplx value{};
  double error_estimate = 0.0;  ///< |full density - half density|
  double tail_estimate = 0.0;   ///< largest integrand modulus at the two truncation ends
};

// ---------------------------------------------------------------- theta ----

/// Summation range [-n_minus, n_plus] of the bilateral theta series.
struct ThetaHorizon {
  long n_minus = 0;
  long n_plus = 0;
};

/// Smallest range whose first omitted term on each side is below series_tol / 10.
ThetaHorizon theta_horizon(cplx x, const QCalcParams& p);
/// Bilateral sum of q^{-n(n-1)/(2k)} x^n over n in [-n_minus, n_plus].
cplx theta_q_truncated(cplx x, const QCalcParams& p, long n_minus, long n_plus);
/**
 * \brief Jacobi theta of order k.
 *
 * Inside q^{-1/k} < |x| < q^{1/k} the series is summed directly with the horizon of
 * theta_horizon. Elsewhere x = q^{j/k} x0 with x0 in that annulus and the value is
 * q^{j(j+1)/(2k)} x0^j theta(x0), so the tail bound series_tol holds at x0.
 * Throws DomainError for x = 0 and RangeError carrying j when the value overflows.
 */
cplx theta_q(cplx x, const QCalcParams& p);
/**
 * \brief Logarithm of the theta function (real part log|theta|).
 *
 * The argument is first moved into the annulus |x| in [q^{-1/(2k)}, q^{1/(2k)}]
 * with the functional equation, so the result stays finite for arguments whose
 * direct series would overflow.
 */
cplx log_theta_q(cplx x, const QCalcParams& p);
/// Ratio |theta(x)| / (delta_tilde exp(k log^2|x| / (2 log q)) |x|^{1/2}).
double theta_lower_bound_margin(cplx x, const QCalcParams& p, double delta_tilde);

// ------------------------------------------------------------ Lambert W ----

/// Real branch w <= -1 of w e^w = y for y in [-1/e, 0).
double lambert_w_minus1(double y);
/// Same branch for y = -exp(log_neg_y); usable when y underflows.
double lambert_w_minus1_from_log(double log_neg_y);
/// Lower and upper bracket -1 - sqrt(2u) - u and -1 - sqrt(2u) - 2u/3 of W_{-1}(-e^{-u-1}).
std::pair<double, double> lambert_w_minus1_bracket(double u);

// ----------------------------------------------------- Laplace constant ----

/// (log q / k) prod_{n >= 0} (1 - q^{-(n+1)/k})^{-1}.
double pi_constant(const QCalcParams& p);

// -------------------------------------------------------- formal series ----

/// Coefficient n divided by q^{n(n-1)/(2k)}.
TruncatedSeries formal_q_borel(const TruncatedSeries& f, const QCalcParams& p);
/// scale * T^m * f(T).
TruncatedSeries series_times_monomial(const TruncatedSeries& f, int m, cplx scale = 1.0);
/// f(q^j T), that is a_n -> a_n q^{j n}.
TruncatedSeries series_q_dilate(const TruncatedSeries& f, const Rational& j, double q);

// ------------------------------------------------------------ transforms ----

/**
 * \brief q-Laplace transform of order k along the ray arg u = gamma.
 *
 * Trapezoidal rule in s = log|u| of (1/pi_q) f(u) / theta(u/T) ds. Throws
 * DomainError when |T| exceeds the admissible radius or a node violates
 * |1 + u/T| > delta_tilde, and AccuracyError when the half density estimate
 * exceeds quad_tol relative to the value.
 */
QuadratureResult q_laplace_ray(const RaySamples& f, cplx T, const QCalcParams& p, const LaplaceOptions& opt = {});

/// (2 pi)^{-1/2} times the trapezoidal sum of f(m) e^{i z m} over the grid.
cplx inverse_fourier(const std::vector<cplx>& f, const FourierGrid& g, cplx z, double edge_tol = 1e-6);

/// Smallest |1 + r e^{i phi}| over r >= 0.
double ray_distance_to_minus_one(double phi);

/// Angle reduced to [-pi, pi].
double wrap_angle(double a);

}  // namespace qlab
