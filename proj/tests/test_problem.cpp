#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "qlab/problem.hpp"
#include "qlab/spec_io.hpp"

using namespace qlab;

namespace {

constexpr double kPi = std::numbers::pi;

CoveringExtras reference_extras(const ProblemSpec& s) {
  CoveringExtras ex;
  ex.spec = &s;
  ex.t1 = {kPi / 6.0, kPi / (8.0 * s.lambda1), 0.0, 0.1};
  ex.t2 = {0.0, kPi / (8.0 * s.k2), 0.0, 1.0};
  return ex;
}

}  // namespace

TEST(ValidateSpec, ReferenceInstancePasses) {
  const auto rep = validate_spec(reference_spec());
  for (const auto& c : rep.checks) EXPECT_TRUE(c.passed) << c.id << ": " << c.lhs << " " << c.relation << " " << c.rhs;
  EXPECT_TRUE(rep.all_passed());
  const auto* rate = rep.find("outer_vs_inner_rate");
  ASSERT_NE(rate, nullptr);
  EXPECT_DOUBLE_EQ(rate->lhs, 9.0);
  EXPECT_DOUBLE_EQ(rate->rhs, 2.0);
}

TEST(ValidateSpec, TopExponentBalanceViolationReportsBothSides) {
  auto s = reference_spec();
  s.Delta_top = Rational(6);
  const auto rep = validate_spec(s);
  EXPECT_FALSE(rep.all_passed());
  const auto* c = rep.find("top_exponent_balance");
  ASSERT_NE(c, nullptr);
  EXPECT_FALSE(c->passed);
  EXPECT_DOUBLE_EQ(c->lhs, 6.0);
  EXPECT_DOUBLE_EQ(c->rhs, 7.0);
}

TEST(ValidateSpec, MuAtDegreeBoundaryFails) {
  auto s = reference_spec();
  s.mu = 1.0;
  const auto rep = validate_spec(s);
  const auto* c = rep.find("mu_vs_degree[1,1]");
  ASSERT_NE(c, nullptr);
  EXPECT_FALSE(c->passed);
  EXPECT_DOUBLE_EQ(c->rhs, 1.0);
}

TEST(ValidateSpec, IsTotalOnBrokenInput) {
  auto s = reference_spec();
  s.d.clear();
  ValidationReport rep;
  EXPECT_NO_THROW(rep = validate_spec(s));
  EXPECT_FALSE(rep.all_passed());
  s = reference_spec();
  s.Q = Polynomial({4.0, 0.0, 1.0});  // Q(im) = 4 - m^2 vanishes at m = 2
  EXPECT_NO_THROW(rep = validate_spec(s));
  EXPECT_FALSE(rep.find("quotient_sector")->passed);
}

TEST(ValidateSpec, InnerConditionViolation) {
  auto s = reference_spec();
  s.lambda1 = 1;
  s.Delta_top = Rational(3);
  s.Delta = {{Rational(4)}};
  const auto rep = validate_spec(s);
  EXPECT_FALSE(rep.find("outer_vs_inner_rate")->passed);
  EXPECT_TRUE(rep.find("top_exponent_balance")->passed);
}

TEST(PmEval, DocumentedValues) {
  const auto s = reference_spec();
  EXPECT_NEAR(std::abs(pm_eval(s, 0.0, 1.7) - s.Q.at_im(1.7)), 0.0, 1e-15);
  EXPECT_NEAR(std::abs(pm_eval(s, 1.0, 0.0) - 3.5), 0.0, 1e-14);
  const cplx tau(0.3, -0.8);
  const double h = 1e-6;
  const cplx fd = (pm_eval(s, tau + h, 0.5) - pm_eval(s, tau - h, 0.5)) / (2.0 * h);
  EXPECT_NEAR(std::abs(fd - pm_derivative(s, tau, 0.5)), 0.0, 1e-8);
}

TEST(PmRoots, AnnihilateAndAreEquallySpaced) {
  const auto s = reference_spec();
  for (double m : separation_m_grid(FourierGrid{8.0, 161})) {
    const auto roots = pm_roots(s, m);
    ASSERT_EQ(roots.size(), 3u);
    for (const cplx& r : roots) EXPECT_LT(std::abs(pm_eval(s, r, m)), 1e-9 * std::abs(s.Q.at_im(m))) << m;
    for (int l = 0; l < 3; ++l) {
      const double gap = wrap_angle(std::arg(roots[(l + 1) % 3]) - std::arg(roots[l]));
      EXPECT_NEAR(std::abs(gap), 2.0 * kPi / 3.0, 1e-12);
      EXPECT_NEAR(std::abs(roots[l]), std::abs(roots[0]), 1e-12 * std::abs(roots[0]));
    }
  }
  for (const cplx& r : pm_roots(s, 0.0)) EXPECT_NEAR(std::abs(r), 2.0, 1e-14);
}

TEST(PmRoots, VanishingSymbolIsSingular) {
  auto s = reference_spec();
  s.R_top = Polynomial({0.0, 1.0});  // R(im) = im vanishes at m = 0
  EXPECT_THROW(pm_roots(s, 0.0), SingularityError);
}

TEST(SectorSeparation, BisectingDirectionIsAdmissible) {
  const auto s = reference_spec();
  const auto ms = separation_m_grid(FourierGrid{8.0, 161});
  const auto rep = sector_separation(s, kPi / 3.0, s.rho, ms, separation_tau_grid(kPi / 3.0, 0.1, s.rho));
  EXPECT_TRUE(rep.admissible);
  EXPECT_GT(rep.M1, 0.1);
  EXPECT_GT(rep.C_P, 0.01);
  EXPECT_EQ(rep.diagnostics.size(), 2u);
}

TEST(SectorSeparation, DirectionThroughRootIsInadmissible) {
  const auto s = reference_spec();
  const auto ms = separation_m_grid(FourierGrid{8.0, 161});
  const auto rep = sector_separation(s, 0.0, 2.5, ms, separation_tau_grid(0.0, 0.1, 2.5));
  EXPECT_FALSE(rep.admissible);
  EXPECT_LT(rep.M1, 1e-8);
}

TEST(SectorSeparation, ConstantLowerBoundsPolynomial) {
  const auto s = reference_spec();
  const double d = kPi / 3.0, ap = 0.1;
  const auto ms = separation_m_grid(FourierGrid{8.0, 321});
  const auto rep = sector_separation(s, d, s.rho, ms, separation_tau_grid(d, ap, s.rho, 1e4, 80));
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> um(-8.0, 8.0), ua(d - 0.5 * ap, d + 0.5 * ap), ulr(-3.0, 4.0),
      udisc(0.0, 1.0), uang(-kPi, kPi);
  for (int i = 0; i < 10000; ++i) {
    const double m = um(rng);
    const cplx tau = i % 2 == 0 ? std::polar(std::pow(10.0, ulr(rng)), ua(rng))
                                : std::polar(s.rho * std::sqrt(udisc(rng)), uang(rng));
    const double lhs = std::abs(pm_eval(s, tau, m));
    const double rhs = rep.C_P * std::abs(s.R_top.at_im(m)) * std::pow(1.0 + std::abs(tau), 3);
    ASSERT_GE(lhs, rhs) << tau << " " << m;
  }
}

TEST(SectorSeparation, MonotoneUnderRefinement) {
  const auto s = reference_spec();
  const double d = kPi / 3.0;
  const auto coarse = sector_separation(s, d, s.rho, separation_m_grid(FourierGrid{8.0, 81}),
                                        separation_tau_grid(d, 0.1, s.rho, 1e4, 10));
  const auto fine = sector_separation(s, d, s.rho, separation_m_grid(FourierGrid{8.0, 161}),
                                      separation_tau_grid(d, 0.1, s.rho, 1e4, 20));
  EXPECT_LE(fine.M1, coarse.M1);
  EXPECT_LE(fine.C_P, coarse.C_P);
}

TEST(GoodCovering, ConsecutiveOnlyIntersection) {
  const auto cov = build_good_covering(3, 1.0, 0.2, CoveringKind::Outer, {});
  ASSERT_EQ(cov.sectors.size(), 3u);
  EXPECT_TRUE(cov.sectors_intersect(0, 1));
  EXPECT_TRUE(cov.sectors_intersect(1, 2));
  EXPECT_TRUE(cov.sectors_intersect(2, 0));
  for (const auto& e : cov.sectors) EXPECT_NEAR(e.arg_high - e.arg_low, 2.0 * kPi / 3.0 + 0.2, 1e-15);
  const auto wide = build_good_covering(6, 1.0, 0.1, CoveringKind::Outer, {});
  EXPECT_FALSE(wide.sectors_intersect(0, 2));
  EXPECT_FALSE(wide.sectors_intersect(1, 4));
  // The union covers the circle: every angle lies in some sector.
  for (int i = 0; i < 1000; ++i) {
    const double a = 2.0 * kPi * i / 1000.0;
    bool hit = false;
    for (const auto& e : wide.sectors) hit = hit || std::abs(wrap_angle(a - e.center())) <= 0.5 * (e.arg_high - e.arg_low);
    EXPECT_TRUE(hit) << a;
  }
}

TEST(GoodCovering, RejectsBadParameters) {
  EXPECT_THROW(build_good_covering(1, 1.0, 0.2, CoveringKind::Outer, {}), PreconditionError);
  EXPECT_THROW(build_good_covering(3, 1.0, 0.0, CoveringKind::Outer, {}), PreconditionError);
  EXPECT_THROW(build_good_covering(3, 1.0, 2.5, CoveringKind::Outer, {}), PreconditionError);
  const auto two = build_good_covering(2, 1.0, 0.3, CoveringKind::Outer, {});
  EXPECT_GT(two.sectors[0].arg_high - two.sectors[0].arg_low, kPi);
}

TEST(GoodCovering, ReferenceDirectionsAreAdmissible) {
  const auto s = reference_spec();
  const auto ex = reference_extras(s);
  const auto cov = build_good_covering(12, s.epsilon0, 0.05, CoveringKind::Outer, ex);
  const auto ms = separation_m_grid(FourierGrid{8.0, 81});
  for (int h = 0; h < cov.iota; ++h) {
    const double d = cov.directions[h];
    const auto rep = sector_separation(s, d, s.rho, ms, separation_tau_grid(d, 0.05, s.rho, 1e4, 10));
    EXPECT_GT(rep.M1, 0.0) << h;
    EXPECT_TRUE(rep.admissible) << h;
  }
  const auto adm = check_admissible(cov, ex.t1, ex.t2, s);
  EXPECT_TRUE(adm.admissible);
  EXPECT_GT(adm.delta1, 0.0);
  EXPECT_GT(adm.delta2, 0.0);
  EXPECT_GT(adm.delta3, 0.0);
  // Every overlap is crossed by the roots or not; the count never exceeds one for this covering.
  for (const auto& o : overlap_singularities(cov, s)) EXPECT_LE(o.roots_between, 1);
}

TEST(GoodCovering, CosineMarginIsCornerMinimum) {
  const auto s = reference_spec();
  const auto ex = reference_extras(s);
  const auto cov = build_good_covering(12, s.epsilon0, 0.05, CoveringKind::Outer, ex);
  const auto adm = check_admissible(cov, ex.t1, ex.t2, s);
  double corner_min = 1.0;
  for (int h = 0; h < cov.iota; ++h)
    for (double phi : {cov.sectors[h].arg_low, cov.sectors[h].arg_high})
      for (double th : {ex.t2.arg_center - 0.5 * ex.t2.aperture, ex.t2.arg_center + 0.5 * ex.t2.aperture})
        corner_min = std::min(corner_min, std::cos(cov.directions[h] - s.k2 * (s.lambda2 * phi + th)));
  EXPECT_LE(adm.delta3, corner_min + 1e-15);
}

TEST(GoodCovering, MisalignedT2IsInadmissible) {
  const auto s = reference_spec();
  const auto ex = reference_extras(s);
  const auto cov = build_good_covering(12, s.epsilon0, 0.05, CoveringKind::Outer, ex);
  AngularDomain bad = ex.t2;
  // Rotate T2 so that gamma - k2 arg(eps^lambda2 t2) reaches pi/2 at a corner of sector 0.
  bad.arg_center = cov.directions[0] - s.lambda2 * cov.sectors[0].arg_high - 0.5 * kPi + 0.5 * bad.aperture;
  const auto adm = check_admissible(cov, ex.t1, bad, s);
  EXPECT_FALSE(adm.admissible);
  EXPECT_LE(adm.delta2, 1e-12);
}

TEST(GoodCovering, InnerCoveringAttachesThetas) {
  const auto s = reference_spec();
  auto ex = reference_extras(s);
  ex.t2 = {0.0, kPi / 8.0, 0.5, 1.0};
  const auto cov = build_good_covering(12, s.epsilon0, 0.05, CoveringKind::Inner, ex);
  ASSERT_EQ(cov.theta_h.size(), 12u);
  for (int h = 0; h < cov.iota; ++h) {
    // arg(eps^lambda2 t2) at the sector bisector equals gamma_h / k2 when t2 = x2 e^{i theta_h} / eps^mu2.
    const double arg_T2 = (s.lambda2 - s.mu2) * cov.sectors[h].center() + ex.t2.arg_center + cov.theta_h[h];
    EXPECT_NEAR(std::cos(cov.directions[h] - s.k2 * arg_T2), 1.0, 1e-12);
  }
}

TEST(SpecIo, RoundTrip) {
  const auto s = reference_spec();
  const auto back = parse_spec(dump_spec(s));
  EXPECT_EQ(dump_spec(back), dump_spec(s));
  EXPECT_TRUE(validate_spec(back).all_passed());
}

TEST(SpecIo, ErrorsNameLocationOrField) {
  try {
    parse_spec("{\n  \"q\": 2,\n  \"k1\": ]\n}", "bad.json");
    FAIL() << "expected InputError";
  } catch (const InputError& e) {
    EXPECT_NE(std::string(e.what()).find("bad.json:3:"), std::string::npos) << e.what();
  }
  auto text = dump_spec(reference_spec());
  const auto pos = text.find("\"k2\": 1");
  ASSERT_NE(pos, std::string::npos);
  text.replace(pos, 7, "\"k2\": \"x\"");
  try {
    parse_spec(text, "f.json");
    FAIL() << "expected InputError";
  } catch (const InputError& e) {
    EXPECT_NE(std::string(e.what()).find("'k2'"), std::string::npos) << e.what();
  }
  EXPECT_THROW(load_spec("/nonexistent/spec.json"), InputError);
}

TEST(SpecIo, RationalForms) {
  auto text = dump_spec(reference_spec());
  const auto pos = text.find("\"d_top\": \"2\"");
  ASSERT_NE(pos, std::string::npos);
  text.replace(pos, 12, "\"d_top\": \"4/2\"");
  EXPECT_EQ(parse_spec(text).d_top, Rational(2));
}
