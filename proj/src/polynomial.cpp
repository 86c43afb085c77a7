#include "qlab/polynomial.hpp"

namespace qlab {

Polynomial::Polynomial(std::vector<cplx> coefficients) : c_(std::move(coefficients)) {
  while (!c_.empty() && c_.back() == cplx{}) c_.pop_back();
}

cplx Polynomial::operator()(cplx x) const {
  cplx acc{};
  for (auto it = c_.rbegin(); it != c_.rend(); ++it) acc = acc * x + *it;
  return acc;
}

}  // namespace qlab
