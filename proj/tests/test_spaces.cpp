#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "qlab/spaces.hpp"

using namespace qlab;

namespace {

QCalcParams q2() {
  QCalcParams p;
  p.q = 2.0;
  p.k = Rational(1);
  return p;
}

WeightParams weights() {
  WeightParams w;
  w.k = 1.0;
  w.beta = 1.0;
  w.mu = 3.0;
  w.alpha = 0.5;
  w.delta_off = 2.0;
  return w;
}

// Rays at two angles with step log(2)/8, so dilation by 2 is a shift of 8 nodes.
GridFunction2D grid(double r_max, int sub = 8, FourierGrid mg = {8.0, 81}) {
  const double h = std::log(2.0) / sub;
  return GridFunction2D::zeros({{0.3, RadialGrid::spanning(1e-3, r_max, h)}, {1.2, RadialGrid::spanning(1e-3, r_max, h)}},
                               mg);
}

// Fills f with (inverse weight) times factors of modulus in [lo, 1].
void fill_inverse_weight(GridFunction2D& f, const WeightParams& w, const QCalcParams& p, std::mt19937_64& rng,
                         double lo = 1.0) {
  std::uniform_real_distribution<double> mag(lo, 1.0), ph(-3.1, 3.1);
  for (int r = 0; r < f.n_tau(); ++r)
    for (int c = 0; c < f.mgrid.n; ++c)
      f.values(r, c) = std::polar(mag(rng) * std::exp(-w.log_weight(std::abs(f.tau(r)), f.mgrid.node(c), p.q)), ph(rng));
}

}  // namespace

TEST(QExpNorm, ZeroAndInverseWeight) {
  const auto p = q2();
  const auto w = weights();
  auto f = grid(1e2);
  EXPECT_EQ(qexp_norm(f, w, p), 0.0);
  std::mt19937_64 rng(1);
  fill_inverse_weight(f, w, p, rng);
  EXPECT_NEAR(qexp_norm(f, w, p), 1.0, 1e-12);
}

TEST(QExpNorm, HomogeneityTriangleAndRefinement) {
  const auto p = q2();
  const auto w = weights();
  std::mt19937_64 rng(2);
  auto f = grid(1e2), g = grid(1e2);
  fill_inverse_weight(f, w, p, rng, 0.1);
  fill_inverse_weight(g, w, p, rng, 0.1);
  const cplx c(-2.5, 1.5);
  auto cf = f;
  cf.values *= c;
  EXPECT_NEAR(qexp_norm(cf, w, p), std::abs(c) * qexp_norm(f, w, p), 1e-14 * std::abs(c));
  auto sum = f;
  sum.values += g.values;
  EXPECT_LE(qexp_norm(sum, w, p), qexp_norm(f, w, p) + qexp_norm(g, w, p) + 1e-15);

  // A refined grid contains the coarse nodes, so the sampled supremum cannot decrease.
  auto smooth = [](cplx tau, double m) { return std::exp(-m * m) * tau / (1.0 + tau * tau); };
  auto coarse = grid(1e2, 4), fine = grid(1e2, 8);
  for (auto* h : {&coarse, &fine})
    for (int r = 0; r < h->n_tau(); ++r)
      for (int c2 = 0; c2 < h->mgrid.n; ++c2) h->values(r, c2) = smooth(h->tau(r), h->mgrid.node(c2));
  EXPECT_GE(qexp_norm(fine, w, p), qexp_norm(coarse, w, p));
}

TEST(EbmNorm, DocumentedValues) {
  const FourierGrid g{8.0, 161};
  std::vector<cplx> zero(g.n), inv(g.n), decay(g.n);
  for (int j = 0; j < g.n; ++j) {
    const double m = std::abs(g.node(j));
    inv[j] = std::pow(1.0 + m, -2.0) * std::exp(-m);
    decay[j] = std::exp(-2.0 * m);
  }
  EXPECT_EQ(ebm_norm(zero, g, 1.0, 2.0), 0.0);
  EXPECT_NEAR(ebm_norm(inv, g, 1.0, 2.0), 1.0, 1e-14);
  // sup (1+m)^2 e^{-m} is attained at m = 1, a grid node, with value 4/e.
  EXPECT_NEAR(ebm_norm(decay, g, 1.0, 2.0), 4.0 / std::exp(1.0), 1e-12);
}

TEST(FourierConvolve, ZeroCommutativityAndGaussians) {
  const FourierGrid g{10.0, 201};
  std::vector<cplx> zero(g.n), a(g.n), b(g.n), gauss(g.n);
  for (int j = 0; j < g.n; ++j) {
    const double m = g.node(j);
    a[j] = std::exp(-m * m) * cplx(1.0, m);
    b[j] = std::exp(-0.5 * (m - 1.0) * (m - 1.0));
    gauss[j] = std::exp(-m * m);
  }
  for (const auto& v : fourier_convolve(a, zero, g)) EXPECT_EQ(v, cplx{});
  const auto ab = fourier_convolve(a, b, g), ba = fourier_convolve(b, a, g);
  for (int j = 0; j < g.n; ++j) EXPECT_LT(std::abs(ab[j] - ba[j]), 1e-10);
  const auto gg = fourier_convolve(gauss, gauss, g);
  for (int j = 0; j < g.n; ++j) {
    const double m = g.node(j);
    const double exact = std::sqrt(std::numbers::pi / 2.0) / std::sqrt(2.0 * std::numbers::pi) * std::exp(-m * m / 2.0);
    EXPECT_NEAR(gg[j].real(), exact, 1e-12);
  }
  std::vector<cplx> slow(g.n, 1.0);
  EXPECT_THROW(fourier_convolve(slow, gauss, g), AccuracyError);
}

TEST(FourierConvolve, ProductOfInverseTransforms) {
  const FourierGrid g{10.0, 201};
  std::vector<cplx> f(g.n), h(g.n);
  for (int j = 0; j < g.n; ++j) {
    const double m = g.node(j);
    f[j] = std::exp(-m * m) * (1.0 + 0.3 * m);
    h[j] = std::exp(-0.7 * (m + 0.5) * (m + 0.5));
  }
  const auto psi = fourier_convolve(f, h, g);
  for (cplx z : {cplx(0.0, 0.0), cplx(0.4, 0.0), cplx(-1.3, 0.2), cplx(2.0, -0.3), cplx(0.9, 0.5)})
    EXPECT_LT(std::abs(inverse_fourier(f, g, z) * inverse_fourier(h, g, z) - inverse_fourier(psi, g, z)), 1e-6);
}

TEST(ShiftProbe, TrivialExponents) {
  const auto p = q2();
  const auto w = weights();
  std::mt19937_64 rng(3);
  auto f = grid(1e2);
  fill_inverse_weight(f, w, p, rng, 0.5);
  EXPECT_LE(shift_mult_bound_probe(f, 0, 0, 0, w, p), 1.0 + 1e-15);
}

TEST(ShiftProbe, BoundedOnlyUnderTheExponentCondition) {
  const auto p = q2();
  const auto w = weights();
  std::mt19937_64 rng(4);
  std::vector<double> eq, viol;
  for (double r_max : {1e2, 1e3, 1e4}) {
    double worst_eq = 0.0, worst_viol = 0.0;
    for (int trial = 0; trial < 5; ++trial) {
      auto f = grid(r_max);
      fill_inverse_weight(f, w, p, rng, 0.5);
      worst_eq = std::max(worst_eq, shift_mult_bound_probe(f, 0.5, 1.5, 1.0, w, p));
      worst_viol = std::max(worst_viol, shift_mult_bound_probe(f, 0.5, 2.5, 1.0, w, p));
    }
    eq.push_back(worst_eq);
    viol.push_back(worst_viol);
  }
  EXPECT_LT(*std::max_element(eq.begin(), eq.end()) / *std::min_element(eq.begin(), eq.end()), 2.0);
  EXPECT_GT(viol[1] / viol[0], 5.0);
  EXPECT_GT(viol[2] / viol[1], 5.0);
}

TEST(ShiftProbe, MisalignedShiftThrows) {
  const auto p = q2();
  auto f = grid(1e2);
  f.values.setOnes();
  EXPECT_THROW(shift_mult_bound_probe(f, 0, 0, 0.3, weights(), p), AlignmentError);
}

TEST(ConvolutionProbe, ZeroGaussianAndPreconditions) {
  const auto p = q2();
  const auto w = weights();
  const Polynomial one({1.0});
  auto g = grid(1e2);
  for (int r = 0; r < g.n_tau(); ++r)
    for (int c = 0; c < g.mgrid.n; ++c) g.values(r, c) = std::exp(-g.mgrid.node(c) * g.mgrid.node(c)) / (1.0 + std::abs(g.tau(r)));
  std::vector<cplx> zero(g.mgrid.n), f(g.mgrid.n);
  for (int j = 0; j < g.mgrid.n; ++j) f[j] = std::exp(-g.mgrid.node(j) * g.mgrid.node(j));
  EXPECT_EQ(convolution_map_probe(zero, g, one, one, w, p), 0.0);
  const double ratio = convolution_map_probe(f, g, one, one, w, p);
  EXPECT_TRUE(std::isfinite(ratio));
  EXPECT_GT(ratio, 0.0);

  // Refining the Fourier grid leaves the ratio essentially unchanged.
  auto g2 = grid(1e2, 8, FourierGrid{8.0, 161});
  for (int r = 0; r < g2.n_tau(); ++r)
    for (int c = 0; c < g2.mgrid.n; ++c)
      g2.values(r, c) = std::exp(-g2.mgrid.node(c) * g2.mgrid.node(c)) / (1.0 + std::abs(g2.tau(r)));
  std::vector<cplx> f2(g2.mgrid.n);
  for (int j = 0; j < g2.mgrid.n; ++j) f2[j] = std::exp(-g2.mgrid.node(j) * g2.mgrid.node(j));
  EXPECT_NEAR(convolution_map_probe(f2, g2, one, one, w, p) / ratio, 1.0, 0.05);

  auto w_edge = w;
  w_edge.mu = 2.0;  // equals deg R2 + 1 for R2(X) = X
  EXPECT_THROW(convolution_map_probe(f, g, Polynomial({1.0, 1.0}), Polynomial({0.0, 1.0}), w_edge, p), PreconditionError);
  EXPECT_THROW(convolution_map_probe(f, g, one, Polynomial({0.0, 1.0}), w, p), PreconditionError);
  EXPECT_THROW(convolution_map_probe(f, g, Polynomial({0.0, 1.0}), one, w, p), SingularityError);
}
