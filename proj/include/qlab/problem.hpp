/**
 * \file problem.hpp
 * \brief Problem instances, constraint validation, the characteristic
 *        polynomial P_m and the sector geometry of Borel directions and coverings.
 */
#pragma once

#include <optional>
#include <string>
#include <vector>

#include "qlab/polynomial.hpp"
#include "qlab/qkernel.hpp"
#include "qlab/rational.hpp"
#include "qlab/spaces.hpp"

namespace qlab {

/// An m-sampled coefficient C(m, eps) = amplitude (1 + eps_slope eps) exp(-(m - center)^2 / (2 width^2)).
struct CoefficientFunction {
  double amplitude = 0.0;
  double width = 1.0;
  double center = 0.0;
  double eps_slope = 0.0;
  double declared_bound = 0.0;  ///< claimed bound on the E_(beta,mu) norm, uniform in eps

  cplx operator()(double m, cplx eps) const;
};

/// One forcing term amplitude (1 + eps_slope eps) tau^power exp(-(m - center)^2 / (2 width^2)).
struct ForcingTerm {
  double amplitude = 0.0;
  int tau_power = 1;
  double width = 1.0;
  double center = 0.0;
  double eps_slope = 0.0;
};

/// The forcing psi(tau, m, eps) as a finite sum of terms, with its declared constant C_psi.
struct Forcing {
  std::vector<ForcingTerm> terms;
  double declared_bound = 0.0;

  cplx operator()(cplx tau, double m, cplx eps) const;
};

/**
 * \brief All data of the singularly perturbed equation.
 *
 * Per-term arrays are indexed [l1-1] and [l1-1][l2-1] for 1 <= l1 <= D1-1 and
 * 1 <= l2 <= D2-1; the *_top members carry the (D1, D2) term.
 */
struct ProblemSpec {
  double q = 2.0;
  int k1 = 1, k2 = 1, k1p = 2;
  double k1pp = 0.9;
  int D1 = 2, D2 = 2;
  std::vector<std::vector<Rational>> Delta;
  Rational Delta_top{7};
  std::vector<Rational> d;
  Rational d_top{2};
  std::vector<Rational> delta;
  std::vector<Rational> delta_tilde;
  Rational delta_tilde_top{1};
  int lambda1 = 3, lambda2 = 1, mu2 = 2;
  Polynomial Q;
  std::vector<std::vector<Polynomial>> R;
  Polynomial R_top;
  std::vector<std::vector<CoefficientFunction>> C;
  Forcing psi;
  double mu = 3.0, beta = 1.0, alpha = 0.0, delta_off = 2.0, rho = 1.0, epsilon0 = 1.0;

  int n1() const { return D1 - 1; }
  int n2() const { return D2 - 1; }
  QCalcParams qparams() const;
  WeightParams weight(double direction = 0.0, double aperture = 0.2) const;
  /// Exponent delta_l1 - d_l1 / k1 of the tau dilation in the convolution term l1.
  Rational dilation_exponent(int l1) const;
  /// Power of eps in front of term (l1, l2) of the Borel-plane equation.
  Rational eps_power(int l1, int l2) const;
  /// Power of tau multiplying term (l1, l2).
  Rational tau_power(int l1, int l2) const;
  /// Constant k2^{dt} q^{(delta - d/k1) dt} / q^{d(d-1)/(2 k1)} of term (l1, l2).
  double term_coefficient(int l1, int l2) const;
  /// Degree d_top + delta_tilde_top of P_m; throws DomainError if it is not a positive integer.
  int pm_degree() const;
  /// k2^{delta_tilde_top} / q^{d_top (d_top - 1) / (2 k1)}.
  double pm_coefficient() const;
};

/// The bundled desk-scale instance with D1 = D2 = 2 and a single perturbation term.
ProblemSpec reference_spec();

/// One named constraint with both sides of the (in)equality.
struct ConstraintCheck {
  std::string id;
  std::string statement;
  double lhs = 0.0;
  double rhs = 0.0;
  std::string relation;
  bool passed = false;
};

struct ValidationReport {
  std::vector<ConstraintCheck> checks;
  bool all_passed() const;
  const ConstraintCheck* find(const std::string& id) const;
};

/// Checks every structural constraint; never throws for a structurally complete spec.
ValidationReport validate_spec(const ProblemSpec& s);

/// Q(im) - c tau^N R_top(im).
cplx pm_eval(const ProblemSpec& s, cplx tau, double m);
/// d/dtau of P_m.
cplx pm_derivative(const ProblemSpec& s, cplx tau, double m);
/// The N roots of P_m, equally spaced in argument; throws SingularityError if R_top(im) = 0.
std::vector<cplx> pm_roots(const ProblemSpec& s, double m);

/// Constants of the root separation, the covering admissibility, and the worst nodes.
struct GeometryReport {
  double M1 = 0.0;
  double C_P = 0.0;
  double delta1 = 0.0;
  double delta2 = 0.0;
  double delta3 = 0.0;
  bool admissible = false;
  std::vector<std::string> diagnostics;
};

/// Nodes on the rays d and d +- aperture/2 out to r_max together with a polar grid of the disc of radius rho.
std::vector<cplx> separation_tau_grid(double d, double aperture, double rho, double r_max = 1e4, int per_decade = 20);
/// Fourier nodes plus large |m| samples that expose the asymptotic behaviour.
std::vector<double> separation_m_grid(const FourierGrid& g);

/// Infima M1 and C_P over the product grid, augmented by the projections of the roots onto the ray d and
/// the roots inside the disc; admissible iff both exceed 1e-8.
GeometryReport sector_separation(const ProblemSpec& s, double d, double rho, const std::vector<double>& m_grid,
                                 const std::vector<cplx>& tau_grid);

enum class CoveringKind { Inner, Outer };

/// An eps-sector {arg in [arg_low, arg_high], 0 < |eps| < radius}.
struct EpsSector {
  double arg_low = 0.0;
  double arg_high = 0.0;
  double radius = 1.0;
  double center() const { return 0.5 * (arg_low + arg_high); }
};

/// A sector {arg in [center - aperture/2, center + aperture/2], r_low <= |x| <= r_high}.
struct AngularDomain {
  double arg_center = 0.0;
  double aperture = 0.0;
  double r_low = 0.0;
  double r_high = 1.0;
};

/// Inputs used to attach Borel directions to the sectors of a covering.
struct CoveringExtras {
  const ProblemSpec* spec = nullptr;  ///< without a spec the directions are the sector bisectors
  AngularDomain t1{};                 ///< domain of t1
  AngularDomain t2{};                 ///< domain of t2 (outer) or of x2 (inner)
  double separation_aperture = 0.1;   ///< aperture of the sector S_d around each direction
  int candidates = 1440;              ///< number of trial directions on the circle
};

struct SectorCovering {
  int iota = 0;
  CoveringKind kind = CoveringKind::Outer;
  double overlap = 0.0;
  std::vector<EpsSector> sectors;
  std::vector<double> directions;
  std::vector<double> theta_h;  ///< inner coverings: t2 = x2 e^{i theta_h} / eps^{mu2}
  AngularDomain t1{};
  AngularDomain chi2{};         ///< inner coverings: the x2 domain
  double rho2 = 0.0;            ///< outer coverings: bound on |t2|
  AngularDomain t2{};           ///< outer coverings: the t2 domain

  /// Whether sectors i and j intersect (closed angular intervals on the circle).
  bool sectors_intersect(int i, int j) const;
  /// arg range of eps in the overlap of sectors h and h+1.
  std::pair<double, double> overlap_args(int h) const;
};

/**
 * \brief Builds the iota sectors of aperture 2 pi/iota + overlap and attaches directions.
 *
 * Throws PreconditionError for iota < 2 or overlap outside (0, 2 pi/iota), and
 * GeometryError when some sector admits no direction.
 */
SectorCovering build_good_covering(int iota, double epsilon0, double overlap, CoveringKind kind,
                                   const CoveringExtras& extras);

/// Exact angular infima of |1 + r e^{i gamma}/T1|, of the margin to +-pi/2 and of the cosine condition.
GeometryReport check_admissible(const SectorCovering& cov, const AngularDomain& t1, const AngularDomain& t2,
                                const ProblemSpec& s);

/// Singular directions lying between the Borel directions of consecutive sectors.
struct OverlapInfo {
  int h = 0;
  int roots_between = 0;
  bool theta_zero_between = false;
  std::vector<double> root_args;  ///< arguments of the roots of P_m between the two directions
};

std::vector<OverlapInfo> overlap_singularities(const SectorCovering& cov, const ProblemSpec& s);

/// Minimum over phi in [lo, hi] of the distance from -1 to the ray e^{i phi} [0, infinity).
double min_ray_distance_over_interval(double lo, double hi);
/// Whether angle x lies strictly inside the short arc from a to b (either orientation).
bool angle_between(double a, double b, double x);
/// Minimum of cos over the interval [lo, hi].
double min_cos_over_interval(double lo, double hi);

}  // namespace qlab
