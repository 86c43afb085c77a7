/**
 * \file solver.cpp
 * \brief Fixed-point solve of the Borel-plane equation and assembly of U and u.
 */
#include "qlab/solver.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>

#include "qlab/error.hpp"

namespace qlab {

namespace {

constexpr double kInvSqrt2Pi = 0.39894228040143267794;

/// tau^p for tau = r e^{i angle} on a ray, with the argument taken from the ray.
cplx ray_power(double log_r, double angle, double p) { return std::exp(cplx(p * log_r, p * angle)); }

/// m-dependent data of one perturbation term at fixed eps.
struct TermKernel {
  Eigen::MatrixXcd Kt;     ///< transpose of the convolution matrix, applied as rows * Kt
  Rational exponent;       ///< tau dilation q^exponent
  cplx coef{};             ///< eps^p times the term coefficient
  double tau_power = 0.0;
};

std::vector<TermKernel> term_kernels(const ProblemSpec& s, cplx eps, const FourierGrid& mg) {
  std::vector<TermKernel> out;
  for (int l1 = 0; l1 < s.n1(); ++l1)
    for (int l2 = 0; l2 < s.n2(); ++l2) {
      TermKernel t;
      const auto& c = s.C.at(l1).at(l2);
      t.Kt = convolution_matrix([&](double dm) { return c(dm, eps); }, s.R.at(l1).at(l2), mg, kInvSqrt2Pi)
                 .transpose();
      t.exponent = s.dilation_exponent(l1);
      t.coef = rational_power(eps, s.eps_power(l1, l2)) * s.term_coefficient(l1, l2);
      t.tau_power = s.tau_power(l1, l2).to_double();
      out.push_back(std::move(t));
    }
  return out;
}

void check_edges(const ProblemSpec& s, cplx eps, const FourierGrid& mg, double edge_tol) {
  auto edge_ratio = [&](const std::function<double(double)>& f) {
    double peak = 0.0;
    for (int j = 0; j < mg.n; ++j) peak = std::max(peak, f(mg.node(j)));
    const double edge = std::max(f(mg.node(0)), f(mg.node(mg.n - 1)));
    return peak > 0.0 ? edge / peak : 0.0;
  };
  for (int l1 = 0; l1 < s.n1(); ++l1)
    for (int l2 = 0; l2 < s.n2(); ++l2) {
      const auto& c = s.C[l1][l2];
      if (edge_ratio([&](double m) { return std::abs(c(m, eps)); }) > edge_tol)
        throw AccuracyError("coefficient C not decayed at the m-grid edge; enlarge m_max");
    }
  if (edge_ratio([&](double m) { return std::abs(s.psi(cplx(1.0, 0.0), m, eps)); }) > edge_tol)
    throw AccuracyError("forcing psi not decayed at the m-grid edge; enlarge m_max");
}

/// 1 / P_m(tau) on a row, with the separation floor enforced.
Eigen::RowVectorXcd inverse_pm_row(const ProblemSpec& s, cplx tau, const FourierGrid& mg) {
  Eigen::RowVectorXcd out(mg.n);
  const int N = s.pm_degree();
  const double c = s.pm_coefficient();
  for (int j = 0; j < mg.n; ++j) {
    const double m = mg.node(j);
    const cplx p = pm_eval(s, tau, m);
    const double scale = std::abs(s.Q.at_im(m)) + c * std::pow(std::abs(tau), N) * std::abs(s.R_top.at_im(m));
    if (!(std::abs(p) > 1e-8 * scale))
      throw GeometryError("P_m vanishes to working precision at tau = (" + std::to_string(tau.real()) + ", " +
                          std::to_string(tau.imag()) + "), m = " + std::to_string(m));
    out(j) = 1.0 / p;
  }
  return out;
}

Eigen::RowVectorXcd psi_row(const ProblemSpec& s, cplx tau, cplx eps, const FourierGrid& mg) {
  Eigen::RowVectorXcd out(mg.n);
  for (int j = 0; j < mg.n; ++j) out(j) = s.psi(tau, mg.node(j), eps);
  return out;
}

/// psi / P_m at one tau: the value used below the innermost radius.
Eigen::RowVectorXcd floor_row(const ProblemSpec& s, cplx tau, cplx eps, const FourierGrid& mg) {
  return psi_row(s, tau, eps, mg).cwiseProduct(inverse_pm_row(s, tau, mg));
}

/**
 * \brief The fixed-point map restricted to one ray with a geometric radial grid.
 *
 * Every dilation is an index shift; source rows below the first node are
 * replaced by psi / P_m at the dilated radius.
 */
class RayOperator {
 public:
  RayOperator(const ProblemSpec& s, cplx eps, double angle, const RadialGrid& radial, const FourierGrid& mg,
              const std::vector<TermKernel>& terms)
      : terms_(terms) {
    const int n = radial.n;
    inv_p_.resize(n, mg.n);
    source_.resize(n, mg.n);
    for (int i = 0; i < n; ++i) {
      const cplx tau = std::polar(radial.radius(i), angle);
      inv_p_.row(i) = inverse_pm_row(s, tau, mg);
      source_.row(i) = psi_row(s, tau, eps, mg).cwiseProduct(inv_p_.row(i));
    }
    const double lq = std::log(s.q);
    for (const auto& t : terms_) {
      const int sh = radial.index_shift(lq * t.exponent.to_double());
      shifts_.push_back(sh);
      Eigen::VectorXcd fac(n);
      for (int i = 0; i < n; ++i) fac(i) = t.coef * ray_power(radial.log_radius(i), angle, t.tau_power);
      factors_.push_back(std::move(fac));
      const int nf = std::clamp(-sh, 0, n);
      Eigen::MatrixXcd fl(nf, mg.n);
      for (int i = 0; i < nf; ++i)
        fl.row(i) = floor_row(s, std::polar(std::exp(radial.log_radius(i + sh)), angle), eps, mg);
      floors_.push_back(std::move(fl));
    }
  }

  /// H applied to a block of rows.
  Eigen::MatrixXcd apply(const Eigen::MatrixXcd& w) const {
    const Eigen::Index n = w.rows();
    Eigen::MatrixXcd out = source_;
    for (std::size_t t = 0; t < terms_.size(); ++t) {
      Eigen::MatrixXcd shifted(n, w.cols());
      for (Eigen::Index i = 0; i < n; ++i) {
        const Eigen::Index src = i + shifts_[t];
        if (src < 0)
          shifted.row(i) = floors_[t].row(i);
        else if (src < n)
          shifted.row(i) = w.row(src);
        else
          throw PreconditionError("outward dilation leaves the radial grid");
      }
      out += (factors_[t].asDiagonal() * (shifted * terms_[t].Kt)).cwiseProduct(inv_p_);
    }
    return out;
  }

  /// Forward substitution; valid because every shift points toward the origin.
  Eigen::MatrixXcd sweep() const {
    for (int sh : shifts_)
      if (sh >= 0) throw PreconditionError("forward substitution needs every dilation to point inward");
    Eigen::MatrixXcd out = source_;
    for (Eigen::Index i = 0; i < out.rows(); ++i) {
      Eigen::RowVectorXcd acc = Eigen::RowVectorXcd::Zero(out.cols());
      for (std::size_t t = 0; t < terms_.size(); ++t) {
        const Eigen::Index src = i + shifts_[t];
        const Eigen::RowVectorXcd from = src < 0 ? Eigen::RowVectorXcd(floors_[t].row(i)) : Eigen::RowVectorXcd(out.row(src));
        acc += factors_[t](i) * (from * terms_[t].Kt);
      }
      out.row(i) += acc.cwiseProduct(inv_p_.row(i));
    }
    return out;
  }

  const Eigen::MatrixXcd& source() const { return source_; }

 private:
  const std::vector<TermKernel>& terms_;
  Eigen::MatrixXcd inv_p_, source_;
  std::vector<int> shifts_;
  std::vector<Eigen::VectorXcd> factors_;
  std::vector<Eigen::MatrixXcd> floors_;
};

std::vector<RayOperator> ray_operators(const ProblemSpec& s, cplx eps, const GridFunction2D& g,
                                       const std::vector<TermKernel>& terms) {
  std::vector<RayOperator> ops;
  ops.reserve(g.rays.size());
  for (const auto& r : g.rays) ops.emplace_back(s, eps, r.angle, r.radial, g.mgrid, terms);
  return ops;
}

Eigen::MatrixXcd apply_all(const std::vector<RayOperator>& ops, const GridFunction2D& g, const Eigen::MatrixXcd& w) {
  Eigen::MatrixXcd out(w.rows(), w.cols());
  for (std::size_t r = 0; r < ops.size(); ++r) {
    const int off = g.row_offset(static_cast<int>(r)), n = g.rays[r].radial.n;
    out.middleRows(off, n) = ops[r].apply(w.middleRows(off, n));
  }
  return out;
}

/// Common lattice step (in units of log q / (n k1)) of the dilation exponents.
std::pair<int, int> lattice_step(const ProblemSpec& s) {
  const int n = dilation_subdivision(s, 1);
  std::int64_t g = 0;
  for (int l1 = 0; l1 < s.n1(); ++l1) {
    const Rational x = s.dilation_exponent(l1) * Rational(n * s.k1);
    g = std::gcd(g, std::abs(x.num()));
  }
  return {n, static_cast<int>(g)};
}

}  // namespace

cplx rational_power(cplx x, const Rational& p) {
  if (p.is_integer()) {
    const auto n = p.num();
    cplx r = 1.0;
    const cplx b = n > 0 ? x : 1.0 / x;
    for (std::int64_t k = 0; k < std::abs(n); ++k) r *= b;
    return r;
  }
  return std::exp(p.to_double() * std::log(x));
}

// ------------------------------------------------------------------ field ---

int OmegaField::ray_index(double angle) const {
  for (std::size_t r = 0; r < grid.rays.size(); ++r)
    if (std::abs(wrap_angle(angle - grid.rays[r].angle)) < 1e-12) return static_cast<int>(r);
  throw PreconditionError("no stored ray at angle " + std::to_string(angle));
}

Eigen::MatrixXcd OmegaField::ray_values(int ray) const {
  return grid.values.middleRows(grid.row_offset(ray), grid.rays.at(ray).radial.n);
}

int dilation_subdivision(const ProblemSpec& s, int oversampling) {
  if (oversampling < 1) throw PreconditionError("oversampling must be positive");
  std::int64_t l = 1;
  for (int l1 = 0; l1 < s.n1(); ++l1) l = lcm(l, (s.dilation_exponent(l1) * Rational(s.k1)).den());
  return static_cast<int>(l) * oversampling;
}

OmegaField make_omega_field(const ProblemSpec& s, double d, cplx epsilon, const SolverOptions& opt) {
  if (!(opt.r_min > 0.0 && opt.r_min < s.rho && s.rho < opt.r_max)) throw PreconditionError("need 0 < r_min < rho < r_max");
  opt.mgrid.validate();
  OmegaField f;
  f.direction = wrap_angle(d);
  f.epsilon = epsilon;
  f.n_sub = dilation_subdivision(s, opt.oversampling);
  f.r_min = opt.r_min;
  const double h = std::log(s.q) / (f.n_sub * s.k1);
  const RadialGrid full = RadialGrid::spanning(opt.r_min, opt.r_max, h);
  RadialGrid disc = full;
  disc.n = static_cast<int>(std::floor((std::log(s.rho) - disc.log_r0) / h + 1e-9)) + 1;
  std::vector<RayBlock> rays{{f.direction, full}};
  if (opt.sector_edges) {
    rays.push_back({wrap_angle(d - 0.5 * opt.aperture), full});
    rays.push_back({wrap_angle(d + 0.5 * opt.aperture), full});
  }
  for (int j = 0; j < opt.disc_rays; ++j)
    rays.push_back({wrap_angle(2.0 * std::numbers::pi * j / opt.disc_rays), disc});
  f.grid = GridFunction2D::zeros(std::move(rays), opt.mgrid);
  return f;
}

OmegaField initial_iterate(const ProblemSpec& s, const OmegaField& shape) {
  OmegaField f = shape;
  for (int row = 0; row < f.grid.n_tau(); ++row)
    f.grid.values.row(row) = floor_row(s, f.grid.tau(row), f.epsilon, f.grid.mgrid);
  return f;
}

OmegaField apply_H(const ProblemSpec& s, cplx epsilon, const OmegaField& omega) {
  const auto terms = term_kernels(s, epsilon, omega.grid.mgrid);
  const auto ops = ray_operators(s, epsilon, omega.grid, terms);
  OmegaField out = omega;
  out.epsilon = epsilon;
  out.grid.values = apply_all(ops, omega.grid, omega.grid.values);
  return out;
}

std::pair<OmegaField, SolveReport> solve_omega(const ProblemSpec& s, double d, cplx epsilon, const SolverOptions& opt,
                                               const OmegaField* start) {
  check_edges(s, epsilon, opt.mgrid, opt.edge_tol);
  OmegaField w = start ? *start : initial_iterate(s, make_omega_field(s, d, epsilon, opt));
  if (start && (w.grid.values.rows() != w.grid.n_tau() || w.grid.values.cols() != w.grid.mgrid.n))
    throw PreconditionError("start iterate has inconsistent shape");
  w.epsilon = epsilon;
  const auto terms = term_kernels(s, epsilon, w.grid.mgrid);
  const auto ops = ray_operators(s, epsilon, w.grid, terms);
  const WeightParams wp = s.weight(w.direction, opt.aperture);
  const QCalcParams qp = s.qparams();

  SolveReport rep;
  rep.ball_radius = qexp_norm(w.grid, wp, qp);
  int growing = 0;
  bool converged = false;
  for (int it = 1; it <= opt.max_iter; ++it) {
    Eigen::MatrixXcd next = apply_all(ops, w.grid, w.grid.values);
    GridFunction2D diff = w.grid;
    diff.values = next - w.grid.values;
    const double upd = qexp_norm(diff, wp, qp);
    if (!std::isfinite(upd)) throw DivergenceError("Picard iteration produced a non-finite update");
    if (!rep.update_norms.empty() && rep.update_norms.back() > 0.0) {
      const double ratio = upd / rep.update_norms.back();
      rep.contraction_estimates.push_back(ratio);
      growing = ratio >= 1.0 ? growing + 1 : 0;
      if (growing >= 3)
        throw DivergenceError("Picard updates grew for three consecutive iterations (ratio " + std::to_string(ratio) +
                              "); the map is not contractive at this eps");
    }
    rep.update_norms.push_back(upd);
    w.grid.values = std::move(next);
    w.iterations = it;
    w.final_update_norm = upd;
    rep.ball_radius = std::max(rep.ball_radius, qexp_norm(w.grid, wp, qp));
    if (upd < opt.tol) {
      converged = true;
      break;
    }
  }
  if (!converged)
    throw DivergenceError("Picard iteration did not reach tol " + std::to_string(opt.tol) + " in " +
                          std::to_string(opt.max_iter) + " iterations");
  GridFunction2D res = w.grid;
  res.values = w.grid.values - apply_all(ops, w.grid, w.grid.values);
  rep.residual = qexp_norm(res, wp, qp);
  rep.norm = qexp_norm(w.grid, wp, qp);
  return {std::move(w), std::move(rep)};
}

Eigen::MatrixXcd omega_sweep(const ProblemSpec& s, cplx epsilon, double angle, const RadialGrid& radial, int n_sub,
                             const FourierGrid& mgrid, double r_min) {
  const double h = std::log(s.q) / (n_sub * s.k1);
  if (std::abs(radial.h - h) > 1e-12 * h) throw AlignmentError("radial step is not log q / (n_sub k1)");
  if (radial.radius(0) < r_min * (1.0 - 1e-12)) throw PreconditionError("sweep grid starts below r_min");
  const auto terms = term_kernels(s, epsilon, mgrid);
  return RayOperator(s, epsilon, angle, radial, mgrid, terms).sweep();
}

Eigen::VectorXcd omega_pointwise(const ProblemSpec& s, cplx epsilon, cplx tau, const FourierGrid& mgrid,
                                 double r_min) {
  const double r = std::abs(tau);
  if (r <= r_min) return floor_row(s, tau, epsilon, mgrid).transpose();
  const auto [n, g] = lattice_step(s);
  if (g == 0) throw PreconditionError("no dilation term: omega is psi / P_m");
  const double step = std::log(s.q) * g / (static_cast<double>(n) * s.k1);
  const int J = static_cast<int>(std::floor(std::log(r / r_min) / step));
  RadialGrid radial;
  radial.h = step;
  radial.n = J + 1;
  radial.log_r0 = std::log(r) - J * step;
  const auto terms = term_kernels(s, epsilon, mgrid);
  const Eigen::MatrixXcd rows = RayOperator(s, epsilon, std::arg(tau), radial, mgrid, terms).sweep();
  return rows.row(J).transpose();
}

double verification_residual(const ProblemSpec& s, const OmegaField& omega) {
  const FourierGrid& mg = omega.grid.mgrid;
  FourierGrid fine_mg{mg.m_max, 2 * mg.n - 1};
  // Sinc interpolation from the coarse to the fine m nodes.
  Eigen::MatrixXd S(fine_mg.n, mg.n);
  for (int i = 0; i < fine_mg.n; ++i)
    for (int j = 0; j < mg.n; ++j) {
      const double x = (fine_mg.node(i) - mg.node(j)) / mg.h();
      S(i, j) = std::abs(x) < 1e-14 ? 1.0 : std::sin(std::numbers::pi * x) / (std::numbers::pi * x);
    }
  const Eigen::MatrixXd St = S.transpose();

  std::vector<RayBlock> fine_rays;
  for (const auto& r : omega.grid.rays) {
    RadialGrid f = r.radial;
    f.h = r.radial.h / 2.0;
    f.n = 2 * r.radial.n - 1;
    fine_rays.push_back({r.angle, f});
  }
  GridFunction2D fine = GridFunction2D::zeros(fine_rays, fine_mg);
  for (std::size_t b = 0; b < omega.grid.rays.size(); ++b) {
    const RayBlock& rb = omega.grid.rays[b];
    const Eigen::MatrixXcd coarse = omega.ray_values(static_cast<int>(b));
    RadialGrid odd = rb.radial;
    odd.log_r0 += rb.radial.h / 2.0;
    odd.n = rb.radial.n - 1;
    const Eigen::MatrixXcd mid = omega_sweep(s, omega.epsilon, rb.angle, odd, omega.n_sub, mg, omega.r_min);
    const int off = fine.row_offset(static_cast<int>(b));
    for (int i = 0; i < rb.radial.n; ++i) fine.values.row(off + 2 * i) = coarse.row(i) * St;
    for (int i = 0; i < odd.n; ++i) fine.values.row(off + 2 * i + 1) = mid.row(i) * St;
  }
  const auto terms = term_kernels(s, omega.epsilon, fine_mg);
  const auto ops = ray_operators(s, omega.epsilon, fine, terms);
  GridFunction2D res = fine;
  res.values = fine.values - apply_all(ops, fine, fine.values);
  const WeightParams wp = s.weight(omega.direction, 0.2);
  const QCalcParams qp = s.qparams();
  const double nrm = qexp_norm(fine, wp, qp);
  return nrm > 0.0 ? qexp_norm(res, wp, qp) / nrm : qexp_norm(res, wp, qp);
}

// --------------------------------------------------------------- assembly ---

namespace {

/// Checks the admissibility of (T1, T2) for integration along gamma.
void check_laplace_domain(const ProblemSpec& s, double gamma, cplx T1, cplx T2) {
  const double r1 = 0.5 * std::pow(s.q, (0.5 - s.alpha) / s.k1);
  if (!(std::abs(T1) > 0.0) || std::abs(T1) >= r1)
    throw DomainError("delta1: |T1| = " + std::to_string(std::abs(T1)) + " outside (0, " + std::to_string(r1) + ")");
  const double dist = ray_distance_to_minus_one(gamma - std::arg(T1));
  if (dist < 1e-3)
    throw DomainError("delta1: the ray arg u = " + std::to_string(gamma) + " passes within " + std::to_string(dist) +
                      " of the theta zero direction of T1");
  if (!(std::abs(T2) > 0.0)) throw DomainError("delta3: T2 = 0");
  const double c = std::cos(gamma - s.k2 * std::arg(T2));
  if (c < 1e-3) throw DomainError("delta3: cos(gamma - k2 arg T2) = " + std::to_string(c) + " is not positive");
}

/**
 * \brief Trapezoid rule in log r of kernel(u) * row(j) along a geometric ray.
 *
 * Nodes where the scalar kernel is below e^-60 of its peak are skipped.
 */
UAssembly laplace_sum(const ProblemSpec& s, const RadialGrid& radial, double gamma, cplx T1, cplx T2,
                      const KernelModifier& mod, int m_count, const std::function<Eigen::RowVectorXcd(int)>& row) {
  check_laplace_domain(s, gamma, T1, T2);
  const QCalcParams qp = s.qparams();
  const cplx inv_t2k = std::pow(1.0 / T2, s.k2);
  const double lq = std::log(s.q);
  const double norm_u = mod.u_power * (mod.u_power - 1.0) / (2.0 * s.k1) * lq;
  const double edil = std::exp(mod.exp_log_dilation);
  std::vector<cplx> lg(radial.n);
  double peak = -std::numeric_limits<double>::infinity();
  for (int j = 0; j < radial.n; ++j) {
    const double lr = radial.log_radius(j);
    const cplx u = std::polar(std::exp(lr), gamma);
    cplx L = -log_theta_q(u / T1, qp) - inv_t2k * edil * u;
    if (mod.k2u_power != 0) L += static_cast<double>(mod.k2u_power) * (std::log(static_cast<double>(s.k2)) + cplx(lr, gamma));
    if (mod.u_power != 0.0) L += mod.u_power * cplx(lr, gamma) - norm_u;
    lg[j] = L;
    peak = std::max(peak, L.real());
  }
  UAssembly out;
  Eigen::VectorXcd full = Eigen::VectorXcd::Zero(m_count), half = Eigen::VectorXcd::Zero(m_count);
  for (int j = 0; j < radial.n; ++j) {
    if (lg[j].real() < peak - 60.0) continue;
    const double w = (j == 0 || j == radial.n - 1) ? 0.5 : 1.0;
    const Eigen::RowVectorXcd v = std::exp(lg[j]) * row(j);
    full += w * v.transpose();
    if (j % 2 == 0) half += ((j == 0 || j == radial.n - 1) ? 0.5 : 1.0) * v.transpose();
    if (j == 0 || j == radial.n - 1) out.tail_estimate = std::max(out.tail_estimate, v.cwiseAbs().maxCoeff());
  }
  const double scale = radial.h / pi_constant(qp);
  out.values = scale * full;
  out.error_estimate = (out.values - 2.0 * scale * half).cwiseAbs().maxCoeff();
  out.tail_estimate *= scale;
  return out;
}

}  // namespace

UAssembly assemble_U(const ProblemSpec& s, const OmegaField& omega, double gamma, cplx T1, cplx T2,
                     const KernelModifier& mod) {
  const int ray = omega.ray_index(gamma);
  const RayBlock& rb = omega.grid.rays[ray];
  const int off = omega.grid.row_offset(ray);
  const FourierGrid& mg = omega.grid.mgrid;
  return laplace_sum(s, rb.radial, rb.angle, T1, T2, mod, mg.n, [&](int j) -> Eigen::RowVectorXcd {
    const int src = j + mod.omega_shift;
    if (src < 0) return floor_row(s, std::polar(std::exp(rb.radial.log_radius(src)), rb.angle), omega.epsilon, mg);
    if (src >= rb.radial.n) return Eigen::RowVectorXcd::Zero(mg.n);
    return omega.grid.values.row(off + src);
  });
}

UAssembly assemble_F(const ProblemSpec& s, const OmegaField& shape, double gamma, cplx T1, cplx T2) {
  const int ray = shape.ray_index(gamma);
  const RayBlock& rb = shape.grid.rays[ray];
  const FourierGrid& mg = shape.grid.mgrid;
  return laplace_sum(s, rb.radial, rb.angle, T1, T2, {}, mg.n, [&](int j) -> Eigen::RowVectorXcd {
    return psi_row(s, std::polar(rb.radial.radius(j), rb.angle), shape.epsilon, mg);
  });
}

namespace {

std::vector<cplx> to_std(const Eigen::VectorXcd& v) { return {v.data(), v.data() + v.size()}; }

cplx eps_T1(const ProblemSpec& s, cplx eps, cplx t1) { return rational_power(eps, Rational(s.lambda1)) * t1; }
cplx eps_T2(const ProblemSpec& s, cplx eps, cplx t2) { return rational_power(eps, Rational(s.lambda2)) * t2; }

/// (T^{k2+1} d/dT)^order by nested fourth-order central differences with one Richardson step.
template <class V>
V euler_derivative(const std::function<V(cplx)>& f, cplx T, int k2, int order) {
  if (order < 0) throw PreconditionError("negative derivative order");
  if (order == 0) return f(T);
  if (std::abs(T) == 0.0) throw DomainError("T2 = 0 in the Euler derivative");
  const std::function<V(cplx)> inner = [&](cplx x) { return euler_derivative<V>(f, x, k2, order - 1); };
  const cplx dir = T / std::abs(T);
  auto central = [&](double h) -> V {
    const cplx e = h * dir;
    return V((8.0 * (inner(T + e) - inner(T - e)) - (inner(T + 2.0 * e) - inner(T - 2.0 * e))) / (12.0 * e));
  };
  const double h = 1e-2 * std::abs(T);
  if (!(h > 1e-150)) throw AccuracyError("finite-difference step underflows at |T2| = " + std::to_string(std::abs(T)));
  const V d = (16.0 * central(0.5 * h) - central(h)) / 15.0;
  return V(std::pow(T, k2 + 1) * d);
}

}  // namespace

cplx assemble_u(const ProblemSpec& s, const OmegaField& omega, cplx t1, cplx t2, cplx z) {
  const UAssembly U =
      assemble_U(s, omega, omega.direction, eps_T1(s, omega.epsilon, t1), eps_T2(s, omega.epsilon, t2));
  return inverse_fourier(to_std(U.values), omega.grid.mgrid, z);
}

cplx t2_euler_derivative(const std::function<cplx(cplx)>& f, cplx T2, int k2, int order) {
  return euler_derivative<cplx>(f, T2, k2, order);
}

double operator_identity_check(const ProblemSpec& s, const OmegaField& omega, OperatorIdentity which,
                               const std::vector<SamplePoint>& samples, int delta, int l1, int l2) {
  const double gamma = omega.direction;
  const double lq = std::log(s.q);
  const FourierGrid& mg = omega.grid.mgrid;
  auto U = [&](cplx T1, cplx T2, const KernelModifier& mod = {}) {
    return assemble_U(s, omega, gamma, T1, T2, mod).values;
  };
  const int ray = omega.ray_index(gamma);
  const RadialGrid& radial = omega.grid.rays[ray].radial;
  double worst = 0.0;
  for (const auto& p : samples) {
    const int mi = std::clamp(static_cast<int>(std::lround(p.m / mg.h())) + (mg.n - 1) / 2, 0, mg.n - 1);
    cplx lhs{}, rhs{};
    switch (which) {
      case OperatorIdentity::I: {
        lhs = t2_euler_derivative([&](cplx T) { return U(p.T1, T)(mi); }, p.T2, s.k2, delta);
        KernelModifier mod;
        mod.k2u_power = delta;
        rhs = U(p.T1, p.T2, mod)(mi);
        break;
      }
      case OperatorIdentity::II: {
        const double dl = s.d.at(l1).to_double();
        const Rational e = s.dilation_exponent(l1);
        lhs = std::pow(p.T1, dl) * U(std::exp(lq * s.delta.at(l1).to_double()) * p.T1, p.T2)(mi);
        KernelModifier mod;
        mod.u_power = dl;
        mod.omega_shift = radial.index_shift(lq * e.to_double());
        mod.exp_log_dilation = lq * e.to_double();
        rhs = U(p.T1, p.T2, mod)(mi);
        break;
      }
      case OperatorIdentity::III: {
        const double dD = s.d_top.to_double();
        lhs = std::pow(p.T1, dD) * U(std::exp(lq * dD / s.k1) * p.T1, p.T2)(mi);
        KernelModifier mod;
        mod.u_power = dD;
        rhs = U(p.T1, p.T2, mod)(mi);
        break;
      }
      case OperatorIdentity::IV: {
        const double dl = s.d.at(l1).to_double();
        const Rational e = s.dilation_exponent(l1);
        (void)l2;
        lhs = std::pow(p.T1, dl) *
              U(std::exp(lq * s.delta.at(l1).to_double()) * p.T1, std::exp(lq * e.to_double() / s.k2) * p.T2)(mi);
        KernelModifier mod;
        mod.u_power = dl;
        mod.omega_shift = radial.index_shift(lq * e.to_double());
        rhs = U(p.T1, p.T2, mod)(mi);
        break;
      }
    }
    const double den = std::max(std::abs(lhs), std::abs(rhs));
    if (den > 0.0) worst = std::max(worst, std::abs(lhs - rhs) / den);
  }
  return worst;
}

double e2_residual(const ProblemSpec& s, const OmegaField& omega, const std::vector<SamplePoint>& samples) {
  const double gamma = omega.direction;
  const double lq = std::log(s.q);
  const cplx eps = omega.epsilon;
  const FourierGrid& mg = omega.grid.mgrid;
  using VF = std::function<Eigen::VectorXcd(cplx)>;
  auto U = [&](cplx T1, cplx T2) { return assemble_U(s, omega, gamma, T1, T2).values; };
  Eigen::VectorXcd qv(mg.n), rtop(mg.n);
  for (int j = 0; j < mg.n; ++j) {
    qv(j) = s.Q.at_im(mg.node(j));
    rtop(j) = s.R_top.at_im(mg.node(j));
  }
  double worst = 0.0;
  for (const auto& p : samples) {
    const Eigen::VectorXcd lhs = qv.cwiseProduct(U(p.T1, p.T2));
    const double dD = s.d_top.to_double();
    const cplx T1top = std::exp(lq * dD / s.k1) * p.T1;
    const VF top_fn = [&](cplx T) -> Eigen::VectorXcd { return rtop.cwiseProduct(U(T1top, T)); };
    const Eigen::VectorXcd top = std::pow(p.T1, dD) * euler_derivative<Eigen::VectorXcd>(
                                                           top_fn, p.T2, s.k2, static_cast<int>(s.delta_tilde_top.num()));
    if (!s.delta_tilde_top.is_integer()) throw DomainError("non-integer delta_tilde_top");
    Eigen::VectorXcd sum = Eigen::VectorXcd::Zero(mg.n);
    double scale = std::max(lhs.cwiseAbs().maxCoeff(), top.cwiseAbs().maxCoeff());
    for (int l1 = 0; l1 < s.n1(); ++l1)
      for (int l2 = 0; l2 < s.n2(); ++l2) {
        const auto& c = s.C[l1][l2];
        const Eigen::MatrixXcd K =
            convolution_matrix([&](double dm) { return c(dm, eps); }, s.R[l1][l2], mg, kInvSqrt2Pi);
        const cplx T1l = std::exp(lq * s.delta.at(l1).to_double()) * p.T1;
        const cplx T2l = std::exp(lq * s.dilation_exponent(l1).to_double() / s.k2) * p.T2;
        const VF fn = [&](cplx T) -> Eigen::VectorXcd { return K * U(T1l, T); };
        if (!s.delta_tilde.at(l2).is_integer()) throw DomainError("non-integer delta_tilde");
        const Eigen::VectorXcd term =
            rational_power(eps, s.eps_power(l1, l2)) * std::pow(p.T1, s.d.at(l1).to_double()) *
            euler_derivative<Eigen::VectorXcd>(fn, T2l, s.k2, static_cast<int>(s.delta_tilde[l2].num()));
        scale = std::max(scale, term.cwiseAbs().maxCoeff());
        sum += term;
      }
    const Eigen::VectorXcd F = assemble_F(s, omega, gamma, p.T1, p.T2).values;
    scale = std::max(scale, F.cwiseAbs().maxCoeff());
    const Eigen::VectorXcd res = lhs - top - sum - F;
    if (scale > 0.0) worst = std::max(worst, res.cwiseAbs().maxCoeff() / scale);
  }
  return worst;
}

double e1_residual(const ProblemSpec& s, const OmegaField& omega, const std::vector<SamplePoint>& t_points) {
  const double gamma = omega.direction;
  const double lq = std::log(s.q);
  const cplx eps = omega.epsilon;
  const FourierGrid& mg = omega.grid.mgrid;
  const cplx e1 = rational_power(eps, Rational(s.lambda1)), e2 = rational_power(eps, Rational(s.lambda2));
  auto symbol = [&](const Polynomial& P) {
    Eigen::VectorXcd v(mg.n);
    for (int j = 0; j < mg.n; ++j) v(j) = P.at_im(mg.node(j));
    return v;
  };
  // u-type function: inverse Fourier of sym(m) U(eps^l1 t1, eps^l2 t2, m) at z.
  auto ufun = [&](const Eigen::VectorXcd& sym, cplx t1, cplx t2, cplx z) {
    const Eigen::VectorXcd v = sym.cwiseProduct(assemble_U(s, omega, gamma, e1 * t1, e2 * t2).values);
    return inverse_fourier(to_std(v), mg, z);
  };
  const Eigen::VectorXcd qv = symbol(s.Q), rtop = symbol(s.R_top);
  double worst = 0.0;
  for (const auto& p : t_points) {
    const cplx t1 = p.T1 / e1, t2 = p.T2 / e2;
    const cplx lhs = ufun(qv, t1, t2, p.z);
    const double dD = s.d_top.to_double();
    const cplx t1top = std::exp(lq * dD / s.k1) * t1;
    const cplx top = rational_power(eps, s.Delta_top) * std::pow(t1, dD) *
                     t2_euler_derivative([&](cplx t) { return ufun(rtop, t1top, t, p.z); }, t2, s.k2,
                                         static_cast<int>(s.delta_tilde_top.num()));
    double scale = std::max(std::abs(lhs), std::abs(top));
    cplx sum{};
    for (int l1 = 0; l1 < s.n1(); ++l1)
      for (int l2 = 0; l2 < s.n2(); ++l2) {
        std::vector<cplx> cs(mg.n);
        for (int j = 0; j < mg.n; ++j) cs[j] = s.C[l1][l2](mg.node(j), eps);
        const cplx cz = inverse_fourier(cs, mg, p.z);
        const Eigen::VectorXcd rl = symbol(s.R[l1][l2]);
        const cplx t1l = std::exp(lq * s.delta.at(l1).to_double()) * t1;
        const cplx t2l = std::exp(lq * s.dilation_exponent(l1).to_double() / s.k2) * t2;
        const cplx term = rational_power(eps, s.Delta.at(l1).at(l2)) * std::pow(t1, s.d.at(l1).to_double()) * cz *
                          t2_euler_derivative([&](cplx t) { return ufun(rl, t1l, t, p.z); }, t2l, s.k2,
                                              static_cast<int>(s.delta_tilde.at(l2).num()));
        scale = std::max(scale, std::abs(term));
        sum += term;
      }
    const Eigen::VectorXcd F = assemble_F(s, omega, gamma, e1 * t1, e2 * t2).values;
    const cplx f = inverse_fourier(to_std(F), mg, p.z);
    scale = std::max(scale, std::abs(f));
    if (scale > 0.0) worst = std::max(worst, std::abs(lhs - top - sum - f) / scale);
  }
  return worst;
}

std::vector<SamplePoint> admissible_samples(const ProblemSpec& s, double gamma, int count, unsigned seed, double r_lo,
                                            double r_hi, double a_lo, double a_hi) {
  if (count < 0 || !(0.0 < r_lo && r_lo <= r_hi) || !(0.0 < a_lo && a_lo <= a_hi))
    throw PreconditionError("admissible_samples: bad ranges");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> U01(0.0, 1.0);
  auto lerp_log = [&](double lo, double hi) { return std::exp(std::log(lo) + U01(rng) * (std::log(hi) - std::log(lo))); };
  std::vector<SamplePoint> out;
  for (int i = 0; i < count; ++i) {
    SamplePoint p;
    // Within one radian of gamma the ray stays at distance 1 from the theta zero direction.
    p.T1 = std::polar(lerp_log(r_lo, r_hi), gamma + (2.0 * U01(rng) - 1.0));
    p.T2 = std::polar(lerp_log(a_lo, a_hi), (gamma + 0.8 * (2.0 * U01(rng) - 1.0)) / s.k2);
    p.m = std::round((6.0 * U01(rng) - 3.0) * 10.0) / 10.0;
    p.z = cplx(2.0 * U01(rng) - 1.0, 0.3 * (2.0 * U01(rng) - 1.0));
    out.push_back(p);
  }
  return out;
}

}  // namespace qlab
