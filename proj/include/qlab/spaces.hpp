/**
 * \file spaces.hpp
 * \brief Weighted norms E_(beta,mu) and qExp, Fourier-side convolution and
 *        empirical probes of the multiplication, shift and convolution bounds.
 */
#pragma once

#include <Eigen/Dense>
#include <functional>
#include <vector>

#include "qlab/polynomial.hpp"
#include "qlab/qkernel.hpp"

namespace qlab {

/// Parameters of the qExp weight and of the sector S_d carrying it.
struct WeightParams {
  double k = 1.0;
  double beta = 1.0;
  double mu = 3.0;
  double alpha = 0.0;
  double delta_off = 2.0;  ///< the shift inside log(|tau| + delta)
  double rho = 1.0;        ///< radius of the closed disc joined to the sector
  double direction = 0.0;
  double aperture = 0.2;

  void validate() const;
  /// Log of (1+|m|)^mu e^{beta|m|} exp(-k log^2(|tau|+delta)/(2 log q) - alpha log(|tau|+delta)).
  double log_weight(double abs_tau, double m, double q) const;
};

/// One ray arg tau = angle of a grid function, with its radial nodes.
struct RayBlock {
  double angle = 0.0;
  RadialGrid radial{};
};

/**
 * \brief Complex samples on (union of rays) x (uniform m grid).
 *
 * Rows are the radial nodes of the rays, concatenated in order; columns are
 * the Fourier nodes.
 */
struct GridFunction2D {
  std::vector<RayBlock> rays;
  FourierGrid mgrid{};
  Eigen::MatrixXcd values;

  static GridFunction2D zeros(std::vector<RayBlock> rays, FourierGrid mgrid);
  int n_tau() const;
  int row_offset(int ray) const;
  cplx tau(int row) const;
  void validate() const;
};

/// Weighted supremum defining the qExp norm, computed over the grid nodes.
double qexp_norm(const GridFunction2D& f, const WeightParams& w, const QCalcParams& p);
/// sup (1+|m|)^mu e^{beta|m|} |f(m)| over the grid.
double ebm_norm(const std::vector<cplx>& f, const FourierGrid& g, double beta, double mu);
/// (2 pi)^{-1/2} int f(m - m1) g(m1) dm1 on the common grid; throws AccuracyError if f or g is not decayed at the edges.
std::vector<cplx> fourier_convolve(const std::vector<cplx>& f, const std::vector<cplx>& g, const FourierGrid& grid,
                                   double edge_tol = 1e-6);
/**
 * \brief Matrix K with (K v)_i = scale * h * sum_j c(m_i - m_j) R(i m_j) v_j.
 *
 * With scale = (2 pi)^{-1/2} this is the quadrature of the Fourier convolution
 * of c against R(i m) v.
 */
Eigen::MatrixXcd convolution_matrix(const std::function<cplx(double)>& c, const Polynomial& R, const FourierGrid& g,
                                    double scale);

/**
 * \brief Ratio || (1+|tau|)^{-g1} tau^{g2} f(tau q^{-g3}, m) || / ||f|| in the qExp norm.
 *
 * Rows whose shifted argument falls below the first node are omitted from the
 * numerator. Throws AlignmentError if the dilation is not a whole number of
 * radial steps on some ray.
 */
double shift_mult_bound_probe(const GridFunction2D& f, double gamma1, double gamma2, double gamma3,
                              const WeightParams& w, const QCalcParams& p);

/**
 * \brief Ratio ||Phi|| / (||f||_(beta,mu) ||g||) for
 *        Phi = (1/R1(im)) int f(m - m1) R2(i m1) g(tau, m1) dm1.
 *
 * Returns 0 when f vanishes. Throws PreconditionError when deg R1 < deg R2 or
 * mu <= deg R2 + 1, and SingularityError when R1(im) vanishes on the grid.
 */
double convolution_map_probe(const std::vector<cplx>& f, const GridFunction2D& g, const Polynomial& R1,
                             const Polynomial& R2, const WeightParams& w, const QCalcParams& p);

}  // namespace qlab
