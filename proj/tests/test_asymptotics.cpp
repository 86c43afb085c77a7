#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <numbers>

#include "qlab/asymptotics.hpp"
#include "qlab/error.hpp"

using namespace qlab;

namespace {

constexpr double kPi = std::numbers::pi;

EnvelopeParams reference_params() { return EnvelopeParams::from_spec(reference_spec()); }

std::vector<std::pair<double, double>> sample(const std::vector<double>& ladder, const std::function<double(double)>& y) {
  std::vector<std::pair<double, double>> d;
  for (double e : ladder) d.emplace_back(e, y(e));
  return d;
}

/// Outer law of the reference instance: k = k1 lambda1^2 = 9, q = 2, one 1/|eps| term.
double outer_law(double e) {
  const double L = std::log(e), x = std::log(0.7) - 3.0 * L;
  return std::log(3.0) + 1.5 * L - x * x / (2.0 * std::log(2.0)) - 0.4 / e;
}

SectorCovering bare_covering(int iota) {
  SectorCovering c;
  c.iota = iota;
  return c;
}

}  // namespace

// ------------------------------------------------------ mixed envelope ----

TEST(Envelope, ReferenceConstants) {
  const EnvelopeParams e = reference_params();
  EXPECT_EQ(e.A(), Rational(2));
  EXPECT_EQ(e.C(), Rational(81, 20));
  EXPECT_EQ(e.S() * e.C(), Rational(1));
  EXPECT_NO_THROW(e.validate());
  EXPECT_EQ(tau_threshold(e, 2.0), 5);
}

TEST(Envelope, FrozenValue) {
  // Independent high-precision evaluation of Psi_5(e^3) for the reference instance.
  const EnvelopeParams e = reference_params();
  EXPECT_NEAR(psi_envelope(5, std::exp(3.0), e, 2.0) / 6.40543579500048818e-13, 1.0, 1e-12);
  EXPECT_NEAR(psi_envelope(5, 1.0, e, 2.0), 1.0, 1e-15);
  EXPECT_THROW(psi_envelope(5, 0.0, e, 2.0), DomainError);
}

TEST(Envelope, InvalidParametersRejected) {
  EnvelopeParams e = reference_params();
  e.k1pp = Rational(1);
  EXPECT_THROW(e.validate(), PreconditionError);
  e = reference_params();
  e.mu2 = Rational(1);
  EXPECT_THROW(e.validate(), PreconditionError);
}

TEST(Envelope, MaximizerInsideBracketAndStationary) {
  const EnvelopeParams e = reference_params();
  for (int n = 5; n <= 25; ++n) {
    const TauMaximizer m = tau_n_maximizer(n, e, 2.0);
    EXPECT_GT(m.tau, m.low) << n;
    EXPECT_LT(m.tau, m.high) << n;
    EXPECT_LT(std::abs(m.stationarity), 1e-8) << n;
  }
}

TEST(Envelope, BelowThresholdNamesFirstValidIndex) {
  const EnvelopeParams e = reference_params();
  try {
    (void)tau_n_maximizer(4, e, 2.0);
    FAIL() << "expected RangeError";
  } catch (const RangeError& err) {
    EXPECT_EQ(err.index(), 5);
  }
}

TEST(Envelope, MixedBoundHoldsAndMatchesDenseGrid) {
  const EnvelopeParams e = reference_params();
  const MixedBoundReport rep = check_mixed_bound(5, 30, e, 2.0);
  EXPECT_TRUE(rep.holds);
  ASSERT_EQ(rep.rows.size(), 26u);
  for (const auto& row : rep.rows) {
    EXPECT_LE(row.residual, 1e-9) << row.n;
    const TauMaximizer m = tau_n_maximizer(row.n, e, 2.0);
    const double grid = log_psi_grid_max(row.n, e, 2.0, 0.0, 3.0 * m.high, 200001);
    EXPECT_LT(std::abs(std::expm1(grid - row.log_max_psi)), 1e-3) << row.n;
  }
  EXPECT_THROW(check_mixed_bound(5, 6, e, 2.0), PreconditionError);
}

// --------------------------------------------------------- flatness fit ----

TEST(FlatnessFit, RecoversGevrey) {
  FlatnessModel m;
  m.kind = FlatnessModelKind::Gevrey;
  const auto f = fit_flatness(sample(eps_ladder(1.0, 3.0), [](double e) { return 2.0 + 1.5 * std::log(e) - 0.8 / e; }), m);
  EXPECT_NEAR(f.leading() / -0.8, 1.0, 1e-2);
  EXPECT_TRUE(f.accepted());
}

TEST(FlatnessFit, RecoversQGevreyOuterLaw) {
  FlatnessModel m;
  m.kind = FlatnessModelKind::QGevrey;
  m.inverse_power = 1.0;
  const auto f = fit_flatness(sample(eps_ladder(1.0, 3.0), outer_law), m);
  EXPECT_NEAR(f.leading() / (-9.0 / (2.0 * std::log(2.0))), 1.0, 1e-2);
  EXPECT_TRUE(f.accepted());
}

TEST(FlatnessFit, RecoversMixed) {
  FlatnessModel m;
  m.kind = FlatnessModelKind::Mixed;
  const auto y = [](double e) {
    const double L = std::log(e);
    return 1.0 - 2.0 * L - 5.0 * L * L + 3.0 * (-L) * std::log(std::max(-L, 1e-300));
  };
  const auto f = fit_flatness(sample(eps_ladder(1.0, 3.0), y), m);
  EXPECT_NEAR(f.leading() / -5.0, 1.0, 1e-2);
}

TEST(FlatnessFit, ConstantDataIsNotFlat) {
  FlatnessModel m;
  m.kind = FlatnessModelKind::QGevrey;
  const auto f = fit_flatness(sample(eps_ladder(1.0, 3.0), [](double) { return -3.0; }), m);
  EXPECT_FALSE(f.accepted());
}

TEST(FlatnessFit, RejectsThinData) {
  FlatnessModel m;
  EXPECT_THROW(fit_flatness(sample(eps_ladder(1.0, 2.0, 0.4), outer_law), m).leading(), PreconditionError)
      << "fewer than eight points";
  EXPECT_THROW(fit_flatness(sample(eps_ladder(1.0, 1.0, 0.9), outer_law), m).leading(), PreconditionError)
      << "less than two decades";
  FlatnessModel mixed;
  mixed.kind = FlatnessModelKind::Mixed;
  EXPECT_THROW(fit_flatness(sample(eps_ladder(10.0, 3.0), outer_law), mixed).leading(), PreconditionError);
}

TEST(FlatnessFit, DegenerateBasisRaisesFitError) {
  FlatnessModel m;
  m.kind = FlatnessModelKind::Gevrey;
  m.s = 1e15;  // |eps|^(-1/s) is numerically the constant column
  EXPECT_THROW(fit_flatness(sample(eps_ladder(1.0, 3.0), outer_law), m).leading(), FitError);
  m.s = 0.0;
  EXPECT_THROW(fit_flatness(sample(eps_ladder(1.0, 3.0), outer_law), m).leading(), PreconditionError);
}

TEST(EpsLadder, GeometricFromTop) {
  const auto l = eps_ladder(1.0, 3.0);
  ASSERT_EQ(l.size(), 21u);
  EXPECT_DOUBLE_EQ(l.front(), 1.0);
  EXPECT_NEAR(l.back(), std::pow(2.0, -10.0), 1e-15);
  EXPECT_THROW(eps_ladder(1.0, 0.0), PreconditionError);
}

// ---------------------------------------------------------- Ramis-Sibuya ----

TEST(RamisSibuya, ZeroAndFlatCocyclesPass) {
  const auto ladder = eps_ladder(1.0, 3.0);
  std::vector<OverlapCocycles> data(3);
  for (int h = 0; h < 3; ++h) data[static_cast<std::size_t>(h)].h = h;
  data[0].source = CocycleSource::Zero;
  for (int h : {1, 2}) {
    auto& d = data[static_cast<std::size_t>(h)];
    d.source = CocycleSource::Residue;
    for (double e : ladder) {
      d.abs_eps.push_back(e);
      d.log_abs.push_back(outer_law(e) + 0.1 * h);
    }
  }
  FlatnessModel m;
  m.kind = FlatnessModelKind::QGevrey;
  m.inverse_power = 1.0;
  const auto rep = ramis_sibuya_check(bare_covering(3), data, m, 9.0, 2.0);
  EXPECT_TRUE(rep.all_passed());
  ASSERT_EQ(rep.overlaps.size(), 3u);
  EXPECT_FALSE(rep.overlaps[0].fit.has_value());
  EXPECT_TRUE(rep.overlaps[1].fit.has_value());
}

TEST(RamisSibuya, GrowingCocycleFails) {
  OverlapCocycles d;
  d.h = 0;
  d.source = CocycleSource::Direct;
  for (double e : eps_ladder(1.0, 3.0)) {
    d.abs_eps.push_back(e);
    d.log_abs.push_back(-std::log(e));
  }
  FlatnessModel m;
  const auto rep = ramis_sibuya_check(bare_covering(1), {d}, m, 9.0, 2.0);
  EXPECT_FALSE(rep.all_passed());
}

TEST(RamisSibuya, UnmeasuredOverlapIsNotCertified) {
  OverlapCocycles d;
  d.h = 0;
  d.source = CocycleSource::Unmeasured;
  const auto rep = ramis_sibuya_check(bare_covering(1), {d}, FlatnessModel{}, 9.0, 2.0);
  EXPECT_FALSE(rep.all_passed());
}

TEST(RamisSibuya, MissingOverlapIsInputError) {
  OverlapCocycles d;
  d.h = 0;
  d.source = CocycleSource::Zero;
  EXPECT_THROW(ramis_sibuya_check(bare_covering(2), {d}, FlatnessModel{}, 9.0, 2.0), InputError);
}

// ------------------------------------------------------------- U bounds ----

TEST(UBounds, ZeroFieldPassesAndRegimesAreEnforced) {
  const ProblemSpec s = reference_spec();
  SolverOptions o;
  o.sector_edges = false;
  o.disc_rays = 0;
  o.r_max = 1e4;
  const double gamma = kPi / 3.0;
  OmegaField w = solve_omega(s, gamma, cplx(0.5, 0.0), o).first;
  w.grid.values.setZero();
  const auto far = u_bound_samples(s, gamma, 0.05, 3.0, 30.0, 6);
  const auto near = u_bound_samples(s, gamma, 0.05, 0.01, 0.1, 6);
  UBoundOptions near_opt;
  near_opt.t2_threshold = 0.2;
  EXPECT_TRUE(verify_U_bounds(s, w, URegime::Far, gamma, far).passed);
  EXPECT_TRUE(verify_U_bounds(s, w, URegime::Near, gamma, near, near_opt).passed);
  EXPECT_THROW(verify_U_bounds(s, w, URegime::Far, gamma, near), PreconditionError);
  EXPECT_THROW(verify_U_bounds(s, w, URegime::Near, gamma, far, near_opt), PreconditionError);
  EXPECT_THROW(verify_U_bounds(s, w, URegime::Far, gamma, u_bound_samples(s, gamma, 0.5, 3.0, 30.0, 6)),
               PreconditionError);
}
