/**
 * \file polynomial.hpp
 * \brief Complex polynomials stored lowest degree first.
 */
#pragma once

#include <complex>
#include <vector>

namespace qlab {

using cplx = std::complex<double>;

/// A polynomial c_0 + c_1 X + ... with trailing zero coefficients trimmed.
class Polynomial {
 public:
  Polynomial() = default;
  explicit Polynomial(std::vector<cplx> coefficients);

  const std::vector<cplx>& coefficients() const noexcept { return c_; }
  /// Degree of the polynomial; the zero polynomial has degree -1.
  int degree() const noexcept { return static_cast<int>(c_.size()) - 1; }
  bool is_zero() const noexcept { return c_.empty(); }
  cplx leading() const { return c_.empty() ? cplx{} : c_.back(); }

  cplx operator()(cplx x) const;
  /// Value at X = i m, the Fourier symbol of the differential operator P(d/dz).
  cplx at_im(double m) const { return (*this)(cplx(0.0, m)); }

 private:
  std::vector<cplx> c_;
};

}  // namespace qlab
