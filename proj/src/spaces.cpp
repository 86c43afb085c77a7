#include "qlab/spaces.hpp"

#include <cmath>
#include <limits>
#include <numbers>

#include "qlab/error.hpp"

namespace qlab {

namespace {

// Largest |entry| at the two ends of a sampled function, relative to its peak.
double edge_ratio(const std::vector<cplx>& f) {
  double peak = 0.0;
  for (const auto& v : f) peak = std::max(peak, std::abs(v));
  if (peak == 0.0) return 0.0;
  return std::max(std::abs(f.front()), std::abs(f.back())) / peak;
}

}  // namespace

void WeightParams::validate() const {
  if (!(k > 0.0)) throw DomainError("weight order k must be positive");
  if (!(beta > 0.0)) throw DomainError("beta must be positive");
  if (!(mu > 1.0)) throw DomainError("mu must exceed 1");
  if (!(delta_off > 1.0)) throw DomainError("delta_off must exceed 1");
  if (!(rho > 0.0)) throw DomainError("rho must be positive");
  if (!(aperture > 0.0)) throw DomainError("aperture must be positive");
}

double WeightParams::log_weight(double abs_tau, double m, double q) const {
  const double l = std::log(abs_tau + delta_off);
  const double am = std::abs(m);
  return mu * std::log1p(am) + beta * am - k * l * l / (2.0 * std::log(q)) - alpha * l;
}

GridFunction2D GridFunction2D::zeros(std::vector<RayBlock> rays, FourierGrid mgrid) {
  GridFunction2D f;
  f.rays = std::move(rays);
  f.mgrid = mgrid;
  f.values = Eigen::MatrixXcd::Zero(f.n_tau(), mgrid.n);
  return f;
}

int GridFunction2D::n_tau() const {
  int n = 0;
  for (const auto& r : rays) n += r.radial.n;
  return n;
}

int GridFunction2D::row_offset(int ray) const {
  int off = 0;
  for (int b = 0; b < ray; ++b) off += rays[b].radial.n;
  return off;
}

cplx GridFunction2D::tau(int row) const {
  for (const auto& r : rays) {
    if (row < r.radial.n) return std::polar(r.radial.radius(row), r.angle);
    row -= r.radial.n;
  }
  throw DomainError("GridFunction2D::tau: row out of range");
}

void GridFunction2D::validate() const {
  mgrid.validate();
  if (values.rows() != n_tau() || values.cols() != mgrid.n)
    throw PreconditionError("GridFunction2D: value matrix does not match the node counts");
  for (const auto& r : rays)
    if (r.radial.n <= 0 || !(r.radial.h > 0.0)) throw PreconditionError("GridFunction2D: empty or non-increasing ray");
}

double qexp_norm(const GridFunction2D& f, const WeightParams& w, const QCalcParams& p) {
  f.validate();
  double best = 0.0;
  int row = 0;
  for (const auto& ray : f.rays) {
    for (int j = 0; j < ray.radial.n; ++j, ++row) {
      const double r = ray.radial.radius(j);
      for (int c = 0; c < f.mgrid.n; ++c) {
        const double a = std::abs(f.values(row, c));
        if (a == 0.0) continue;
        best = std::max(best, std::exp(std::log(a) + w.log_weight(r, f.mgrid.node(c), p.q)));
      }
    }
  }
  return best;
}

double ebm_norm(const std::vector<cplx>& f, const FourierGrid& g, double beta, double mu) {
  if (static_cast<int>(f.size()) != g.n) throw PreconditionError("ebm_norm: sample count mismatch");
  double best = 0.0;
  for (int j = 0; j < g.n; ++j) {
    const double m = std::abs(g.node(j));
    best = std::max(best, std::pow(1.0 + m, mu) * std::exp(beta * m) * std::abs(f[j]));
  }
  return best;
}

std::vector<cplx> fourier_convolve(const std::vector<cplx>& f, const std::vector<cplx>& g, const FourierGrid& grid,
                                   double edge_tol) {
  grid.validate();
  if (static_cast<int>(f.size()) != grid.n || static_cast<int>(g.size()) != grid.n)
    throw PreconditionError("fourier_convolve: sample count mismatch");
  if (edge_ratio(f) > edge_tol || edge_ratio(g) > edge_tol)
    throw AccuracyError("fourier_convolve: integrand not decayed at the grid edge");
  const int n = grid.n, c = (n - 1) / 2;
  const double scale = grid.h() / std::sqrt(2.0 * std::numbers::pi);
  std::vector<cplx> out(n);
  for (int i = 0; i < n; ++i) {
    cplx s{};
    // m_i - m_j is the node with index i - j + c when that index exists.
    const int j_lo = std::max(0, i + c - (n - 1)), j_hi = std::min(n - 1, i + c);
    for (int j = j_lo; j <= j_hi; ++j) s += f[i - j + c] * g[j];
    out[i] = s * scale;
  }
  return out;
}

Eigen::MatrixXcd convolution_matrix(const std::function<cplx(double)>& c, const Polynomial& R, const FourierGrid& g,
                                    double scale) {
  const int n = g.n;
  std::vector<cplx> kern(2 * n - 1);
  for (int d = -(n - 1); d <= n - 1; ++d) kern[d + n - 1] = c(d * g.h());
  Eigen::MatrixXcd K(n, n);
  for (int j = 0; j < n; ++j) {
    const cplx rj = R.is_zero() ? cplx{} : R.at_im(g.node(j));
    for (int i = 0; i < n; ++i) K(i, j) = scale * g.h() * kern[i - j + n - 1] * rj;
  }
  return K;
}

double shift_mult_bound_probe(const GridFunction2D& f, double gamma1, double gamma2, double gamma3,
                              const WeightParams& w, const QCalcParams& p) {
  f.validate();
  if (gamma1 < 0.0 || gamma2 < 0.0 || gamma3 < 0.0) throw PreconditionError("shift_mult_bound_probe: negative exponent");
  const double den = qexp_norm(f, w, p);
  if (den == 0.0) return 0.0;
  GridFunction2D g = GridFunction2D::zeros(f.rays, f.mgrid);
  int row = 0;
  for (const auto& ray : f.rays) {
    const int s = ray.radial.index_shift(gamma3 * std::log(p.q));
    for (int j = 0; j < ray.radial.n; ++j, ++row) {
      if (j - s < 0) continue;
      const double r = ray.radial.radius(j);
      const cplx factor = std::pow(1.0 + r, -gamma1) * std::polar(std::pow(r, gamma2), gamma2 * ray.angle);
      g.values.row(row) = factor * f.values.row(row - s);
    }
  }
  return qexp_norm(g, w, p) / den;
}

double convolution_map_probe(const std::vector<cplx>& f, const GridFunction2D& g, const Polynomial& R1,
                             const Polynomial& R2, const WeightParams& w, const QCalcParams& p) {
  g.validate();
  if (R1.degree() < R2.degree()) throw PreconditionError("convolution_map_probe: deg R1 < deg R2");
  if (!(w.mu > R2.degree() + 1))
    throw PreconditionError("convolution_map_probe: mu = " + std::to_string(w.mu) + " must exceed deg R2 + 1 = " +
                            std::to_string(R2.degree() + 1));
  if (static_cast<int>(f.size()) != g.mgrid.n) throw PreconditionError("convolution_map_probe: f grid mismatch");
  const double fnorm = ebm_norm(f, g.mgrid, w.beta, w.mu);
  if (fnorm == 0.0) return 0.0;
  const FourierGrid& mg = g.mgrid;
  Eigen::VectorXcd inv_r1(mg.n);
  const double floor = 1e-12 * std::max(1.0, std::abs(R1.leading()));
  for (int i = 0; i < mg.n; ++i) {
    const cplx v = R1.at_im(mg.node(i));
    if (!(std::abs(v) > floor)) throw SingularityError("convolution_map_probe: R1(im) vanishes at m = " + std::to_string(mg.node(i)));
    inv_r1(i) = 1.0 / v;
  }
  const int c = (mg.n - 1) / 2;
  const Eigen::MatrixXcd K = convolution_matrix(
      [&](double dm) {
        const int idx = static_cast<int>(std::lround(dm / mg.h())) + c;
        return idx >= 0 && idx < mg.n ? f[idx] : cplx{};
      },
      R2, mg, 1.0);
  GridFunction2D phi = GridFunction2D::zeros(g.rays, mg);
  phi.values = (g.values * K.transpose()) * inv_r1.asDiagonal();
  const double gnorm = qexp_norm(g, w, p);
  if (gnorm == 0.0) return 0.0;
  return qexp_norm(phi, w, p) / (fnorm * gnorm);
}

}  // namespace qlab
