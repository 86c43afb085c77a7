#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "qlab/solver.hpp"

using namespace qlab;

namespace {

constexpr double kPi = std::numbers::pi;

/// A direction midway between two roots of P_m of the reference instance.
constexpr double kDirection = kPi / 3.0;

SolverOptions light_options() {
  SolverOptions o;
  o.sector_edges = false;
  o.disc_rays = 0;
  o.r_max = 1e4;
  return o;
}

struct Solved {
  ProblemSpec spec = reference_spec();
  OmegaField omega;
  SolveReport report;
};

/// The reference instance solved once at eps = 1/2 for the shared tests.
const Solved& reference_solution() {
  static const Solved s = [] {
    Solved r;
    auto [w, rep] = solve_omega(r.spec, kDirection, cplx(0.5, 0.0));
    r.omega = std::move(w);
    r.report = std::move(rep);
    return r;
  }();
  return s;
}

CoveringExtras reference_extras(const ProblemSpec& s) {
  CoveringExtras ex;
  ex.spec = &s;
  ex.t1 = {kPi / 6.0, kPi / (8.0 * s.lambda1), 0.0, 0.1};
  ex.t2 = {0.0, kPi / (8.0 * s.k2), 0.0, 1.0};
  return ex;
}

const SectorCovering& reference_covering() {
  static const ProblemSpec s = reference_spec();
  static const SectorCovering cov = build_good_covering(12, 1.0, 0.05, CoveringKind::Outer, reference_extras(s));
  return cov;
}

/// An overlap whose directions enclose one root of P_m and no theta zero for t1 on the domain bisector.
int root_overlap(const ProblemSpec& s, const SectorCovering& cov, cplx t1) {
  for (const auto& info : overlap_singularities(cov, s)) {
    const auto [lo, hi] = cov.overlap_args(info.h);
    if (info.roots_between == 1 && !theta_zero_between(s, cov, info.h, t1, std::polar(1.0, 0.5 * (lo + hi))))
      return info.h;
  }
  return -1;
}

double max_rel(const Eigen::MatrixXcd& a, const Eigen::MatrixXcd& b) {
  return (a - b).cwiseAbs().maxCoeff() / std::max(a.cwiseAbs().maxCoeff(), b.cwiseAbs().maxCoeff());
}

}  // namespace

TEST(ApplyH, ZeroForcingGivesZeroFixedPoint) {
  auto s = reference_spec();
  s.psi.terms[0].amplitude = 0.0;
  s.C[0][0].amplitude = 0.0;
  auto [w, rep] = solve_omega(s, kDirection, cplx(0.5, 0.0), light_options());
  EXPECT_EQ(w.grid.values.cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(w.iterations, 1);
  const OmegaField h = apply_H(s, cplx(0.5, 0.0), initial_iterate(reference_spec(), w));
  EXPECT_EQ(h.grid.values.cwiseAbs().maxCoeff(), 0.0);
}

TEST(ApplyH, UnperturbedInstanceConvergesInOneIteration) {
  auto s = reference_spec();
  s.C[0][0].amplitude = 0.0;
  auto [w, rep] = solve_omega(s, kDirection, cplx(0.5, 0.0), light_options());
  EXPECT_EQ(w.iterations, 1);
  EXPECT_LT(rep.residual, 1e-12);
  const OmegaField start = initial_iterate(s, w);
  EXPECT_EQ((w.grid.values - start.grid.values).cwiseAbs().maxCoeff(), 0.0);
}

TEST(ApplyH, LipschitzRatioOnTwoStartsIsAtMostHalf) {
  const auto& r = reference_solution();
  OmegaField a = initial_iterate(r.spec, r.omega);
  OmegaField b = a;
  b.grid.values *= cplx(0.3, 0.4);
  const auto ha = apply_H(r.spec, r.omega.epsilon, a), hb = apply_H(r.spec, r.omega.epsilon, b);
  const WeightParams wp = r.spec.weight(kDirection, 0.1);
  GridFunction2D num = a.grid, den = a.grid;
  num.values = ha.grid.values - hb.grid.values;
  den.values = a.grid.values - b.grid.values;
  EXPECT_LE(qexp_norm(num, wp, r.spec.qparams()) / qexp_norm(den, wp, r.spec.qparams()), 0.5);
}

TEST(ApplyH, MisalignedGridRaisesAlignmentError) {
  const auto& r = reference_solution();
  OmegaField bad = r.omega;
  for (auto& ray : bad.grid.rays) ray.radial.h *= 1.01;
  EXPECT_THROW(apply_H(r.spec, r.omega.epsilon, bad), AlignmentError);
}

TEST(ApplyH, NodeOnRootRaisesGeometryError) {
  const auto s = reference_spec();
  // Root of P_0 at tau = 2: a grid through radius 2 on the ray arg tau = 0.
  RadialGrid g;
  g.h = std::log(2.0) / 8.0;
  g.log_r0 = std::log(2.0) - 40 * g.h;
  g.n = 60;
  EXPECT_THROW(omega_sweep(s, 0.5, 0.0, g, 8, FourierGrid{8.0, 161}, g.radius(0)), GeometryError);
}

TEST(SolveOmega, ReferenceConvergesWithRateBelowHalf) {
  const auto& r = reference_solution();
  ASSERT_FALSE(r.report.contraction_estimates.empty());
  for (double c : r.report.contraction_estimates) EXPECT_LE(c, 0.5);
  // The update ratios never exceed the first measured ratio.
  for (double c : r.report.contraction_estimates) EXPECT_LE(c, r.report.contraction_estimates.front() * (1 + 1e-9));
  EXPECT_LT(r.omega.final_update_norm, 1e-13);
  EXPECT_LE(r.report.residual, 1e-13 * std::max(1.0, r.report.norm));
  EXPECT_LE(r.report.norm, r.report.ball_radius);
}

TEST(SolveOmega, GridIsAnExactGeometricProgression) {
  const auto& r = reference_solution();
  EXPECT_EQ(r.omega.n_sub, 8);
  const auto& ray = r.omega.grid.rays.front().radial;
  EXPECT_NEAR(ray.h, std::log(2.0) / 8.0, 1e-15);
  EXPECT_EQ(ray.index_shift(std::log(2.0) * r.spec.dilation_exponent(0).to_double()), -8);
}

TEST(SolveOmega, UniqueFixedPointFromTwoStarts) {
  const auto& r = reference_solution();
  OmegaField zero = r.omega;
  zero.grid.values.setZero();
  SolverOptions opt;
  auto [w, rep] = solve_omega(r.spec, kDirection, r.omega.epsilon, opt, &zero);
  GridFunction2D diff = w.grid;
  diff.values -= r.omega.grid.values;
  EXPECT_LE(qexp_norm(diff, r.spec.weight(kDirection, 0.1), r.spec.qparams()), 10.0 * opt.tol);
}

TEST(SolveOmega, DivergenceIsReported) {
  auto s = reference_spec();
  s.C[0][0].amplitude = 400.0;
  EXPECT_THROW(solve_omega(s, kDirection, cplx(1.0, 0.0), light_options()), DivergenceError);
}

TEST(SolveOmega, HolomorphicInEpsilon) {
  const auto s = reference_spec();
  const cplx e0(0.4, 0.1);
  const double h = 1e-3;
  auto solve = [&](cplx e) { return solve_omega(s, kDirection, e, light_options()).first.grid.values; };
  const Eigen::MatrixXcd dx = (solve(e0 + h) - solve(e0 - h)) / (2.0 * h);
  const Eigen::MatrixXcd dy = (solve(e0 + cplx(0, h)) - solve(e0 - cplx(0, h))) / cplx(0.0, 2.0 * h);
  EXPECT_LT(max_rel(dx, dy), 1e-4);
}

TEST(SolveOmega, SweepPicardAndPointwiseAgree) {
  const auto& r = reference_solution();
  const auto& w = r.omega;
  const Eigen::MatrixXcd sweep =
      omega_sweep(r.spec, w.epsilon, w.direction, w.grid.rays[0].radial, w.n_sub, w.grid.mgrid, w.r_min);
  EXPECT_LT(max_rel(sweep, w.ray_values(0)), 1e-12);
  for (int j : {100, 300, 350, 420}) {
    const Eigen::VectorXcd p = omega_pointwise(r.spec, w.epsilon, w.grid.tau(j), w.grid.mgrid, w.r_min);
    EXPECT_LT((p.transpose() - w.ray_values(0).row(j)).cwiseAbs().maxCoeff(),
              1e-12 * w.ray_values(0).row(j).cwiseAbs().maxCoeff())
        << "row " << j;
  }
}

TEST(SolveOmega, VerificationResidualOnFinerGrid) {
  const auto& r = reference_solution();
  EXPECT_LT(verification_residual(r.spec, r.omega), 1e-8);
}

TEST(AssembleU, ZeroOmegaGivesZero) {
  const auto& r = reference_solution();
  OmegaField zero = r.omega;
  zero.grid.values.setZero();
  const auto U = assemble_U(r.spec, zero, kDirection, std::polar(0.05, kDirection), 0.5);
  EXPECT_EQ(U.values.cwiseAbs().maxCoeff(), 0.0);
}

TEST(AssembleU, IndependentOfGammaInsideTheSector) {
  const auto& r = reference_solution();
  for (const auto& p : admissible_samples(r.spec, kDirection, 5, 11)) {
    const auto a = assemble_U(r.spec, r.omega, kDirection - 0.05, p.T1, p.T2);
    const auto b = assemble_U(r.spec, r.omega, kDirection + 0.05, p.T1, p.T2);
    EXPECT_LT(max_rel(a.values, b.values), 1e-10);
    EXPECT_LT(a.error_estimate, 1e-10 * a.values.cwiseAbs().maxCoeff());
  }
}

TEST(AssembleU, DomainErrorsNameTheFailedConstant) {
  const auto& r = reference_solution();
  try {
    assemble_U(r.spec, r.omega, kDirection, std::polar(0.05, kDirection + kPi), 0.5);
    FAIL() << "expected a domain error";
  } catch (const DomainError& e) {
    EXPECT_NE(std::string(e.what()).find("delta1"), std::string::npos);
  }
  try {
    assemble_U(r.spec, r.omega, kDirection, std::polar(0.05, kDirection), std::polar(0.5, kDirection + kPi));
    FAIL() << "expected a domain error";
  } catch (const DomainError& e) {
    EXPECT_NE(std::string(e.what()).find("delta3"), std::string::npos);
  }
  EXPECT_THROW(assemble_U(r.spec, r.omega, kDirection, 0.9, 0.5), DomainError);
}

TEST(OperatorIdentities, HoldAtRandomAdmissiblePoints) {
  const auto& r = reference_solution();
  const auto pts = admissible_samples(r.spec, kDirection, 10, 7);
  EXPECT_EQ(operator_identity_check(r.spec, r.omega, OperatorIdentity::I, pts, 0), 0.0);
  EXPECT_LT(operator_identity_check(r.spec, r.omega, OperatorIdentity::I, pts, 1), 1e-5);
  EXPECT_LT(operator_identity_check(r.spec, r.omega, OperatorIdentity::I, pts, 2), 1e-5);
  EXPECT_LT(operator_identity_check(r.spec, r.omega, OperatorIdentity::II, pts), 1e-5);
  EXPECT_LT(operator_identity_check(r.spec, r.omega, OperatorIdentity::III, pts), 1e-5);
  EXPECT_LT(operator_identity_check(r.spec, r.omega, OperatorIdentity::IV, pts), 1e-6);
}

TEST(Residuals, TPlaneEquation) {
  const auto& r = reference_solution();
  EXPECT_LT(e2_residual(r.spec, r.omega, admissible_samples(r.spec, kDirection, 10, 3)), 1e-5);
}

TEST(Residuals, OriginalEquation) {
  const auto& r = reference_solution();
  EXPECT_LT(e1_residual(r.spec, r.omega, admissible_samples(r.spec, kDirection, 5, 5)), 1e-4);
}

TEST(Residuals, DetectAWrongSolution) {
  const auto& r = reference_solution();
  OmegaField bad = r.omega;
  bad.grid.values *= 1.001;
  EXPECT_GT(e2_residual(r.spec, bad, admissible_samples(r.spec, kDirection, 3, 3)), 1e-5);
}

TEST(AssembleUSmall, LinearInOmegaAndSuperpositionInPsi) {
  const auto base = reference_spec();
  auto sa = base, sb = base, sab = base;
  ForcingTerm extra{0.5, 2, 0.8, 0.3, 0.0};
  sb.psi.terms = {extra};
  sab.psi.terms.push_back(extra);
  const cplx eps(0.5, 0.0);
  const auto wa = solve_omega(sa, kDirection, eps, light_options()).first;
  const auto wb = solve_omega(sb, kDirection, eps, light_options()).first;
  const auto wab = solve_omega(sab, kDirection, eps, light_options()).first;
  for (const auto& p : admissible_samples(base, kDirection, 4, 21)) {
    const cplx t1 = p.T1 / std::pow(eps, 3), t2 = p.T2 / eps;
    const cplx ua = assemble_u(sa, wa, t1, t2, p.z), ub = assemble_u(sb, wb, t1, t2, p.z);
    const cplx uab = assemble_u(sab, wab, t1, t2, p.z);
    EXPECT_LT(std::abs(uab - ua - ub), 1e-12 * std::abs(uab));
  }
  OmegaField twice = wa;
  twice.grid.values *= cplx(2.0, -1.0);
  const auto p = admissible_samples(base, kDirection, 1, 2).front();
  const auto U1 = assemble_U(sa, wa, kDirection, p.T1, p.T2), U2 = assemble_U(sa, twice, kDirection, p.T1, p.T2);
  EXPECT_LT(max_rel(U2.values, cplx(2.0, -1.0) * U1.values), 1e-14);
}

TEST(AssembleUSmall, BoundedAndStableUnderRefinement) {
  const auto s = reference_spec();
  double worst_change = 0.0, sup = 0.0;
  for (double e : {0.25, 0.5, 1.0}) {
    const cplx eps(e, 0.0);
    SolverOptions fine = light_options();
    fine.oversampling = 16;
    const auto w8 = solve_omega(s, kDirection, eps, light_options()).first;
    const auto w16 = solve_omega(s, kDirection, eps, fine).first;
    for (int a = 0; a < 5; ++a)
      for (int b = 0; b < 5; ++b)
        for (int c = 0; c < 3; ++c)
          for (int d = 0; d < 3; ++d) {
            const cplx t1 = std::polar(0.02 + 0.02 * a, kDirection + 0.2 * (c - 1)) / std::pow(eps, 3);
            const cplx t2 = std::polar(0.5 + 0.25 * b, kDirection + 0.2 * (d - 1)) / eps;
            const cplx z(0.5 * (c - 1), 0.1 * (d - 1));
            const cplx u8 = assemble_u(s, w8, t1, t2, z), u16 = assemble_u(s, w16, t1, t2, z);
            ASSERT_TRUE(std::isfinite(std::abs(u8)));
            sup = std::max(sup, std::abs(u8));
            worst_change = std::max(worst_change, std::abs(u8 - u16) / std::abs(u16));
          }
  }
  EXPECT_GT(sup, 0.0);
  EXPECT_LT(worst_change, 0.01);
}

TEST(Euler, DerivativeOfMonomials) {
  // (T^2 d/dT) T^3 = 3 T^4 and (T^2 d/dT)^2 T^3 = 12 T^5.
  const cplx T(0.7, 0.4);
  auto f = [](cplx x) { return x * x * x; };
  EXPECT_LT(std::abs(t2_euler_derivative(f, T, 1, 1) - 3.0 * std::pow(T, 4)), 1e-11);
  EXPECT_LT(std::abs(t2_euler_derivative(f, T, 1, 2) - 12.0 * std::pow(T, 5)), 1e-9);
  EXPECT_THROW(t2_euler_derivative(f, cplx(1e-300, 0.0), 1, 1), AccuracyError);
}

TEST(SolutionDifference, DirectMatchesPathDecomposition) {
  const auto s = reference_spec();
  const auto& cov = reference_covering();
  const cplx t1 = std::polar(0.1, kPi / 6.0), t2 = 1.0, z = 0.2;
  const int h = root_overlap(s, cov, t1);
  ASSERT_GE(h, 0);
  const auto [lo, hi] = cov.overlap_args(h);
  const cplx eps = std::polar(1.0, 0.5 * (lo + hi));
  const auto w0 = solve_omega(s, cov.directions[h], eps).first;
  const auto w1 = solve_omega(s, cov.directions[(h + 1) % cov.iota], eps).first;
  const auto d = solution_difference(s, cov, h, w0, w1, t1, t2, z);
  EXPECT_GT(std::abs(d.direct), 0.0);
  EXPECT_LT(std::abs(d.direct - d.decomposition()), 1e-6 * std::abs(d.direct));
  EXPECT_NEAR(d.arc_radius, 0.5, 0.05);
}

TEST(SolutionDifference, ResidueMatchesPathDecompositionForSmallT1) {
  const auto s = reference_spec();
  const auto& cov = reference_covering();
  const cplx t1 = std::polar(0.1, kPi / 6.0), t2 = 1.0, z = 0.2;
  const int h = root_overlap(s, cov, t1);
  ASSERT_GE(h, 0);
  const auto [lo, hi] = cov.overlap_args(h);
  const cplx eps = std::polar(0.2154, 0.5 * (lo + hi));  // |eps^3 t1| close to 1e-3
  const auto w0 = solve_omega(s, cov.directions[h], eps).first;
  const auto w1 = solve_omega(s, cov.directions[(h + 1) % cov.iota], eps).first;
  const auto d = solution_difference(s, cov, h, w0, w1, t1, t2, z);
  const auto r = cocycle_residue(s, cov, h, t1, t2, z, eps);
  EXPECT_EQ(r.roots_crossed, 1);
  EXPECT_LT(r.skipped_log_bound, r.value.log_abs - 20.0);
  EXPECT_LT(std::abs(r.value.value() - d.decomposition()), 1e-3 * std::abs(d.decomposition()));
}

TEST(SolutionDifference, ArcTermFollowsTheThetaEnvelope) {
  const auto s = reference_spec();
  const auto& cov = reference_covering();
  const cplx t1 = std::polar(0.1, kPi / 6.0);
  const int h = root_overlap(s, cov, t1);
  ASSERT_GE(h, 0);
  const auto [lo, hi] = cov.overlap_args(h);
  std::vector<double> consts;
  for (double e : {1.0, 0.5, 0.25}) {
    const cplx eps = std::polar(e, 0.5 * (lo + hi));
    const auto w0 = solve_omega(s, cov.directions[h], eps, light_options()).first;
    const auto w1 = solve_omega(s, cov.directions[(h + 1) % cov.iota], eps, light_options()).first;
    const auto d = solution_difference(s, cov, h, w0, w1, t1, 1.0, 0.0);
    const double T = std::abs(std::pow(eps, 3) * t1);
    const double env = std::sqrt(T) * std::exp(-std::pow(std::log(s.rho / (2.0 * T)), 2) / (2.0 * std::log(2.0)));
    consts.push_back(std::abs(d.J3) / env);
  }
  const auto [mn, mx] = std::minmax_element(consts.begin(), consts.end());
  EXPECT_GT(*mn, 0.0);
  EXPECT_LT(*mx / *mn, 10.0);
}

TEST(SolutionDifference, SameDirectionGivesZero) {
  const auto s = reference_spec();
  SectorCovering cov = reference_covering();
  const int h = 0;
  cov.directions[1] = cov.directions[0];
  const auto [lo, hi] = cov.overlap_args(h);
  const cplx eps = std::polar(1.0, 0.5 * (lo + hi));
  const auto w = solve_omega(s, cov.directions[0], eps, light_options()).first;
  DifferenceOptions opt;
  const auto d = solution_difference(s, cov, h, w, w, std::polar(0.1, kPi / 6.0), 1.0, 0.2, opt);
  EXPECT_EQ(d.direct, cplx(0.0, 0.0));
  EXPECT_EQ(d.J1, d.J2);
  EXPECT_EQ(d.J3, cplx(0.0, 0.0));
}

TEST(SolutionDifference, ThetaZeroCrossingIsAGeometryError) {
  const auto s = reference_spec();
  const auto& cov = reference_covering();
  const cplx t1 = std::polar(0.1, kPi / 6.0);
  int h = -1;
  for (int i = 0; i < cov.iota && h < 0; ++i) {
    const auto [lo, hi] = cov.overlap_args(i);
    if (theta_zero_between(s, cov, i, t1, std::polar(0.5, 0.5 * (lo + hi)))) h = i;
  }
  ASSERT_GE(h, 0);
  const auto [lo, hi] = cov.overlap_args(h);
  EXPECT_THROW(cocycle_residue(s, cov, h, t1, 1.0, 0.0, std::polar(0.5, 0.5 * (lo + hi))), GeometryError);
}
