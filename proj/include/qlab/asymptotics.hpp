/**
 * \file asymptotics.hpp
 * \brief Quantitative checks of the asymptotic statements: the mixed envelope
 *        Psi and its maximizer, the growth bounds of U_gamma, flatness-model
 *        fitting and certification of the hypotheses of the Ramis-Sibuya theorem.
 */
#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "qlab/problem.hpp"
#include "qlab/rational.hpp"
#include "qlab/solver.hpp"

namespace qlab {

// ------------------------------------------------------ mixed envelope ----

/**
 * \brief Exponents of the mixed envelope Psi and its derived constants.
 *
 * A = k1' (mu2 - lambda2) k2, C = k1'' lambda1^2 / A, S = A / (k1'' lambda1^2)
 * and K = 9 k1'' lambda1^2 / 7, all kept exact.
 */
struct EnvelopeParams {
  Rational k1{1};
  Rational k1p{2};
  Rational k1pp{9, 10};
  Rational k2{1};
  Rational lambda1{3};
  Rational lambda2{1};
  Rational mu2{2};

  /// Exponents of a spec; k1'' is converted from its decimal value.
  static EnvelopeParams from_spec(const ProblemSpec& s);

  Rational A() const;
  Rational C() const;
  Rational S() const;
  Rational K() const;
  /// Throws PreconditionError unless mu2 > lambda2, 0 < k1'' < k1 and A, C, S, K > 0.
  void validate() const;
};

/// log Psi(x); the log log term is taken as 0 for x <= 1.
double log_psi_envelope(int n, double x, const EnvelopeParams& e, double q);
/// Psi(x) = x^n exp(-k1'' lambda1^2 / (2 log q) log^2 x + A / log q log x log log x).
double psi_envelope(int n, double x, const EnvelopeParams& e, double q);

struct TauMaximizer {
  double tau = 0.0;       ///< log of the maximizing x
  double low = 0.0;       ///< lower end of the closed-form bracket
  double high = 0.0;      ///< upper end of the closed-form bracket
  double u0 = 0.0;        ///< n log q / A - log C
  double stationarity = 0.0;  ///< n - (k1'' lambda1^2 / log q) tau + (A / log q)(log tau + 1)
};

/// Smallest integer n with n log q / A - log C > 0.
int tau_threshold(const EnvelopeParams& e, double q);

/**
 * \brief Maximizer tau_n of tau -> log Psi(e^tau) through the W_{-1} branch.
 *
 * Throws RangeError carrying the threshold n0 when u0 <= 0.
 */
TauMaximizer tau_n_maximizer(int n, const EnvelopeParams& e, double q);

struct MixedBoundRow {
  int n = 0;
  double tau_star = 0.0;     ///< refined maximizer
  double log_max_psi = 0.0;  ///< log max_x Psi(x)
  double y = 0.0;            ///< log max Psi - S log n! - n (n + 1) log q / K
  double residual = 0.0;     ///< y minus the bound with the fitted constants (<= 0 when the bound holds)
};

struct MixedBoundReport {
  double log_C_hat = 0.0;
  double log_A_hat = 0.0;
  double max_refinement_shift = 0.0;  ///< largest |log Psi(refined) - log Psi(tau_n)|
  std::vector<MixedBoundRow> rows;
  bool holds = false;
};

/**
 * \brief Fits the smallest (C_hat, A_hat) with max Psi <= C_hat A_hat^n n!^S q^{n(n+1)/K}.
 *
 * The maximum at each n is located at tau_n and refined by a bracketed Brent
 * search. Throws BoundViolationError when the regression residuals at the end of
 * the range are positive and increasing.
 */
MixedBoundReport check_mixed_bound(int n_first, int n_last, const EnvelopeParams& e, double q);

/// max over a uniform grid of tau in [tau_lo, tau_hi] of log Psi(e^tau).
double log_psi_grid_max(int n, const EnvelopeParams& e, double q, double tau_lo, double tau_hi, int points);

// ------------------------------------------------------------ U bounds ----

enum class URegime { Far, Near };

/// Sample radii and thresholds of a growth-bound check.
struct UBoundOptions {
  double rho1 = 0.2;          ///< |T1| must stay below rho1
  double t2_threshold = 2.0;  ///< far regime: |T2| > threshold; near regime: |T2| < threshold
  double growth_factor = 2.0; ///< allowed growth of the ratio from one half of the span to the other
};

struct UBoundRow {
  double t2_abs = 0.0;
  double delta3 = 0.0;
  double log_max_weighted = 0.0;  ///< log max_m |U| / ((1 + |m|)^-mu e^{-beta |m|})
  double log_bracket = 0.0;       ///< log of the T-dependent factor of the envelope
  double log_ratio = 0.0;
  double near_literal = 0.0;      ///< log|U| + rho delta3 / (2 |T2|^k2) at the largest weighted m
};

struct UBoundReport {
  URegime regime = URegime::Far;
  double log_constant = 0.0;  ///< fitted log of the single constant (the largest log ratio)
  double max_log_ratio_limit_half = 0.0;
  double max_log_ratio_other_half = 0.0;
  std::vector<UBoundRow> rows;
  bool passed = false;
};

/**
 * \brief Measures |U_gamma| against the envelope of the chosen regime.
 *
 * The ratio of the weighted maximum over m to the T-dependent envelope factor is
 * computed at each sample; the check passes when the largest ratio on the half of
 * the |T2| span toward the regime limit is at most growth_factor times the largest
 * ratio on the other half. Throws PreconditionError for samples outside the regime
 * or with cos(gamma - k2 arg T2) <= 0.
 */
UBoundReport verify_U_bounds(const ProblemSpec& s, const OmegaField& omega, URegime regime, double gamma,
                             const std::vector<SamplePoint>& samples, const UBoundOptions& opt = {});

/// count samples with |T1| = t1_abs on the direction of gamma and |T2| log-spaced over [lo, hi].
std::vector<SamplePoint> u_bound_samples(const ProblemSpec& s, double gamma, double t1_abs, double lo, double hi,
                                         int count);

// ---------------------------------------------------------- flatness fit ----

enum class FlatnessModelKind { Gevrey, QGevrey, Mixed };

/**
 * \brief Basis of a log-envelope model in L = log|eps|.
 *
 * Gevrey: {1, L, |eps|^{-1/s}}. QGevrey: {1, L, L^2} plus |eps|^{-inverse_power}
 * when that power is positive. Mixed: {1, L, L^2, (-L) log(-L)}.
 */
struct FlatnessModel {
  FlatnessModelKind kind = FlatnessModelKind::QGevrey;
  double s = 1.0;
  double inverse_power = 0.0;

  std::vector<std::string> basis_names() const;
  /// Row of basis values at |eps|.
  Eigen::RowVectorXd basis(double abs_eps) const;
  /// Index of the leading coefficient: the |eps|^{-1/s} column for Gevrey, else the L^2 column.
  int leading_index() const;
};

std::string to_string(const FlatnessModel& m);

struct FlatnessFit {
  FlatnessModel model;
  Eigen::VectorXd coefficients;
  double residual = 0.0;   ///< max |y - fit| / max(|y|, 1) over the data
  double condition = 0.0;  ///< condition number of the column-scaled basis
  std::vector<double> abs_eps;
  std::vector<double> log_values;
  std::vector<double> fitted;
  double leading() const { return coefficients(model.leading_index()); }
  /// Variation of the leading term over the data, in units of log|value|.
  double leading_span() const;
  /// Leading coefficient negative, leading term varying by at least one e-fold and residual below 0.15.
  bool accepted() const;
};

/**
 * \brief Least-squares fit of log magnitudes against the model basis.
 *
 * Data are (|eps|, log|value|) pairs so that magnitudes below the double range
 * stay usable. Throws PreconditionError with fewer than 8 points or less than two
 * decades of |eps|, and FitError when the scaled basis is ill-conditioned.
 */
FlatnessFit fit_flatness(const std::vector<std::pair<double, double>>& data, const FlatnessModel& model);

// ----------------------------------------------------------- cocycles ----

/// The |eps| ladder eps0, eps0 r, eps0 r^2, ... down by the given number of decades.
std::vector<double> eps_ladder(double eps0, double decades, double ratio = 0.70710678118654752);

enum class CocycleSource { Zero, Residue, Direct, Unmeasured };
std::string to_string(CocycleSource s);

/// Measured magnitudes of u_{h+1} - u_h on one overlap along an |eps| ladder.
struct OverlapCocycles {
  int h = 0;
  CocycleSource source = CocycleSource::Unmeasured;
  double eps_arg = 0.0;
  std::vector<double> abs_eps;
  std::vector<double> log_abs;
  std::vector<double> log_reference;  ///< log|u_h| where measured directly
  std::string note;
  std::vector<std::pair<double, double>> pairs() const;
};

/// Point of evaluation of the cocycles: t2 for outer coverings, x2 for inner ones.
struct CocyclePoint {
  cplx t1{};
  cplx t2_or_x2{};
  cplx z{};
};

/// t2 used on overlap h at eps: t2 itself (outer) or x2 e^{i theta_h} / eps^mu2 (inner).
cplx overlap_t2(const ProblemSpec& s, const SectorCovering& cov, int h, const CocyclePoint& p, cplx eps);

/**
 * \brief Cocycle magnitudes from the residues at the roots of P_m crossed on overlap h.
 *
 * eps runs along the ladder on the bisector of the overlap. The source is Zero
 * when no root and no theta zero separate the directions, and Unmeasured when a
 * theta zero does at some ladder point.
 */
OverlapCocycles residue_cocycles(const ProblemSpec& s, const SectorCovering& cov, int h, const CocyclePoint& p,
                                 const std::vector<double>& ladder, const CocycleOptions& opt = {});

/**
 * \brief Cocycle magnitudes from two solved fields per ladder point.
 *
 * The ladder stops at the first point where |u_{h+1} - u_h| falls below
 * floor_rel |u_h|, the cancellation floor of the direct difference.
 */
OverlapCocycles direct_cocycles(const ProblemSpec& s, const SectorCovering& cov, int h, const CocyclePoint& p,
                                const std::vector<double>& ladder, const SolverOptions& opt = {},
                                double floor_rel = 1e-10);

// ------------------------------------------------------- Ramis-Sibuya ----

struct OverlapVerdict {
  int h = 0;
  CocycleSource source = CocycleSource::Unmeasured;
  bool bounded = false;
  bool flat = false;
  std::optional<FlatnessFit> fit;
  double leading_target = 0.0;
  std::string note;
  bool passed() const { return bounded && flat; }
};

struct RamisSibuyaReport {
  double k = 0.0;
  double q = 0.0;
  std::vector<OverlapVerdict> overlaps;
  bool all_passed() const;
};

/**
 * \brief Certifies boundedness and q-exponential flatness of order k on every overlap.
 *
 * An overlap passes the flatness hypothesis when its data fit the model, the
 * leading coefficient is within lead_tol of -k / (2 log q) and the remainder
 * log|Delta| + k/(2 log q) L^2 - c1 L does not grow on the smallest decade.
 * Zero cocycles pass; unmeasured or too short ladders do not. Throws InputError
 * when an overlap of the covering has no entry.
 */
RamisSibuyaReport ramis_sibuya_check(const SectorCovering& cov, const std::vector<OverlapCocycles>& data,
                                     const FlatnessModel& model, double k, double q, double lead_tol = 0.10);

}  // namespace qlab
