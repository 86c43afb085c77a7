/**
 * \file solver.hpp
 * \brief Fixed point of the Borel-plane convolution equation, assembly of the
 *        Laplace-type integrals U and u, operator identities, residuals and
 *        differences of solutions attached to consecutive sectors.
 */
#pragma once

#include <Eigen/Dense>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "qlab/problem.hpp"
#include "qlab/qkernel.hpp"
#include "qlab/spaces.hpp"

namespace qlab {

/// Principal branch of x^p for rational p; integer powers are exact products.
cplx rational_power(cplx x, const Rational& p);

/// Discretization and iteration controls of solve_omega.
struct SolverOptions {
  int oversampling = 8;           ///< radial nodes per dilation lattice step, times lcm of exponent denominators
  double r_min = 1e-12;           ///< innermost radius; below it omega is replaced by psi / P_m
  double r_max = 1e6;
  double aperture = 0.1;          ///< aperture of S_d; rays are stored at d and d +- aperture/2
  bool sector_edges = true;       ///< whether to store the two edge rays of S_d
  int disc_rays = 8;              ///< rays of the closed disc of radius rho (norm only)
  FourierGrid mgrid{8.0, 161};
  double tol = 1e-13;             ///< stop when the qExp norm of the update falls below tol
  int max_iter = 200;
  double edge_tol = 1e-6;         ///< required decay of C and psi at the m-grid edge
};

/**
 * \brief Samples of the solution omega(tau, m, eps) on rays of S_d and of the disc.
 *
 * Every radial grid is geometric with ratio q^{1/(n_sub k1)} so that each
 * dilation of the equation is an exact index shift.
 */
struct OmegaField {
  double direction = 0.0;
  cplx epsilon{};
  int n_sub = 8;
  double r_min = 1e-12;
  GridFunction2D grid{};
  int iterations = 0;
  double final_update_norm = 0.0;

  /// Index of the stored ray with the given angle; throws PreconditionError if absent.
  int ray_index(double angle) const;
  /// Values on one ray as a (radial nodes) x (m nodes) block.
  Eigen::MatrixXcd ray_values(int ray) const;
};

struct SolveReport {
  std::vector<double> update_norms;
  std::vector<double> contraction_estimates;  ///< ratios of consecutive update norms
  double residual = 0.0;                      ///< qExp norm of omega - H(omega) on the solve grid
  double norm = 0.0;                          ///< qExp norm of the solution
  double ball_radius = 0.0;                   ///< largest qExp norm met along the iteration
};

/// Number n_sub of radial nodes per factor q^{1/k1}: oversampling times lcm of the denominators of k1 e_l.
int dilation_subdivision(const ProblemSpec& s, int oversampling);
/// Empty field on the rays of S_d (and the disc) for the given options.
OmegaField make_omega_field(const ProblemSpec& s, double d, cplx epsilon, const SolverOptions& opt);
/// psi / P_m on the nodes of a field; the first Picard iterate.
OmegaField initial_iterate(const ProblemSpec& s, const OmegaField& shape);

/**
 * \brief One application of the fixed-point map H_eps.
 *
 * Throws AlignmentError for misaligned dilations and GeometryError when P_m
 * falls below the C_P floor at a node.
 */
OmegaField apply_H(const ProblemSpec& s, cplx epsilon, const OmegaField& omega);

/// Picard iteration from start (default psi / P_m); throws DivergenceError after three ratios >= 1.
std::pair<OmegaField, SolveReport> solve_omega(const ProblemSpec& s, double d, cplx epsilon,
                                               const SolverOptions& opt = {}, const OmegaField* start = nullptr);

/**
 * \brief Direct evaluation of omega(tau, .) on the m-grid.
 *
 * Dilations only move toward the origin, so omega at tau is obtained by forward
 * substitution along the lattice tau q^{-j l} (l the common step of the dilation
 * exponents) started at r_min with psi / P_m. No Picard iteration is involved.
 */
Eigen::VectorXcd omega_pointwise(const ProblemSpec& s, cplx epsilon, cplx tau, const FourierGrid& mgrid,
                                 double r_min = 1e-12);

/// Forward substitution on a whole dilation-aligned ray; rows follow the radial grid.
Eigen::MatrixXcd omega_sweep(const ProblemSpec& s, cplx epsilon, double angle, const RadialGrid& radial, int n_sub,
                             const FourierGrid& mgrid, double r_min);

/**
 * \brief Relative residual of the equation on a grid twice as fine in tau and in m.
 *
 * The solution is extended to the intermediate radii by forward substitution and to
 * the intermediate m by sinc interpolation; the fixed-point map is then rebuilt on the
 * fine m-grid and sup |w - H(w)| weighted by the qExp weight is divided by the norm.
 */
double verification_residual(const ProblemSpec& s, const OmegaField& omega);

// -------------------------------------------------------------- assembly ----

/// Modifications of the Laplace kernel used by the operator identities.
struct KernelModifier {
  int k2u_power = 0;             ///< multiplies the integrand by (k2 u)^k2u_power
  double u_power = 0.0;          ///< multiplies by u^u_power / q^{u_power (u_power - 1)/(2 k1)}
  int omega_shift = 0;           ///< omega evaluated at q^{omega_shift/(n_sub k1)} u
  double exp_log_dilation = 0.0; ///< the exponential factor uses e^{exp_log_dilation} u
};

struct UAssembly {
  Eigen::VectorXcd values;  ///< U on the m-grid
  double error_estimate = 0.0;
  double tail_estimate = 0.0;
};

/// Laplace-type integral along arg u = gamma: the m-indexed vector U_gamma(T1, T2, .).
UAssembly assemble_U(const ProblemSpec& s, const OmegaField& omega, double gamma, cplx T1, cplx T2,
                     const KernelModifier& mod = {});
/// Same kernel applied to psi instead of omega: the forcing F(T1, T2, .).
UAssembly assemble_F(const ProblemSpec& s, const OmegaField& shape, double gamma, cplx T1, cplx T2);

/// u(t1, t2, z, eps) as the inverse Fourier transform of U(eps^lambda1 t1, eps^lambda2 t2, .).
cplx assemble_u(const ProblemSpec& s, const OmegaField& omega, cplx t1, cplx t2, cplx z);

/// (T2^{k2+1} d/dT2)^order applied to a scalar function of T2 by nested fourth-order differences.
cplx t2_euler_derivative(const std::function<cplx(cplx)>& f, cplx T2, int k2, int order);

/// One sample point of an identity or residual check.
struct SamplePoint {
  cplx T1{};
  cplx T2{};
  double m = 0.0;
  cplx z{};
};

enum class OperatorIdentity { I, II, III, IV };

/// Max relative discrepancy of an identity over the sample points (term l1, l2 and order delta where used).
double operator_identity_check(const ProblemSpec& s, const OmegaField& omega, OperatorIdentity which,
                               const std::vector<SamplePoint>& samples, int delta = 1, int l1 = 0, int l2 = 0);

/// Relative residual of the T-plane equation for U_gamma at the sample points.
double e2_residual(const ProblemSpec& s, const OmegaField& omega, const std::vector<SamplePoint>& samples);

/// Relative residual of the original equation for u at the points (t1, t2, z), with t-derivatives by differences.
double e1_residual(const ProblemSpec& s, const OmegaField& omega, const std::vector<SamplePoint>& t_points);

/// Admissible sample points for the direction of omega: |T1| in [r_lo, r_hi], |T2| in [a_lo, a_hi].
std::vector<SamplePoint> admissible_samples(const ProblemSpec& s, double gamma, int count, unsigned seed,
                                            double r_lo = 0.02, double r_hi = 0.15, double a_lo = 0.3,
                                            double a_hi = 3.0);

// ------------------------------------------------------------ difference ----

/// A complex number stored as its logarithm so that tiny magnitudes stay representable.
struct LogComplex {
  double log_abs = -std::numeric_limits<double>::infinity();
  double arg = 0.0;
  cplx value() const { return std::polar(std::exp(log_abs), arg); }
};

struct DifferenceResult {
  cplx direct{};  ///< u_{h+1} - u_h from two assembled solutions
  cplx J1{}, J2{}, J3{};
  cplx decomposition() const { return J1 - J2 + J3; }
  double arc_radius = 0.0;
};

/// Quadrature controls of the J1/J2/J3 decomposition.
struct DifferenceOptions {
  int panel_nodes = 20;         ///< Gauss-Legendre nodes per panel (same choices as arc_nodes)
  double panel_width = 0.25;    ///< panel width in log radius
  int arc_nodes = 60;           ///< Gauss-Legendre nodes on the arc (10, 15, 20, 25, 30, 40, 50 or 60)
  double tail_cut = 1e-22;      ///< relative size at which the ray integrals stop
};

/**
 * \brief u_{h+1} - u_h at (t1, t2, z, eps) directly and as J1 - J2 + J3.
 *
 * The fields must be solved at eps for the directions of sectors h and h+1.
 * Throws GeometryError when a root of P_m or a zero of theta(u / T1) lies in the
 * sector swept between the two directions inside the arc radius.
 */
DifferenceResult solution_difference(const ProblemSpec& s, const SectorCovering& cov, int h, const OmegaField& w_h,
                                     const OmegaField& w_next, cplx t1, cplx t2, cplx z,
                                     const DifferenceOptions& opt = {});

/// Inputs of the residue evaluation of a cocycle.
struct CocycleOptions {
  FourierGrid mgrid{8.0, 161};
  double r_min = 1e-12;
  double chain_margin = 0.05;  ///< minimal relative size of P_m along the forward-substitution chain
  int refine_points = 161;     ///< m samples across the peak of the residue profile
};

struct CocycleValue {
  LogComplex value;           ///< u_{h+1} - u_h
  int roots_crossed = 0;      ///< roots of P_m between the two directions
  int m_skipped = 0;          ///< m samples dropped because their chain meets a singular region
  double skipped_log_bound = -std::numeric_limits<double>::infinity();
};

/**
 * \brief u_{h+1} - u_h from the residues of the poles at the roots of P_m crossed between the directions.
 *
 * Valid when no zero of theta(u / T1) lies between the directions; the contribution
 * of the branch cuts of omega, which start at q^{-e} times the root modulus, is not included.
 */
CocycleValue cocycle_residue(const ProblemSpec& s, const SectorCovering& cov, int h, cplx t1, cplx t2, cplx z,
                             cplx epsilon, const CocycleOptions& opt = {});

/// Whether a zero of theta(u / (eps^lambda1 t1)) lies between the directions of sectors h and h+1.
bool theta_zero_between(const ProblemSpec& s, const SectorCovering& cov, int h, cplx t1, cplx epsilon);

}  // namespace qlab
