/**
 * \file fit.cpp
 * \brief Least-squares fitting of log magnitudes against flatness envelopes.
 */
#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "qlab/asymptotics.hpp"
#include "qlab/error.hpp"

namespace qlab {

namespace {

/// x log x extended by 0 at x = 0.
double x_log_x(double x) { return x > 0.0 ? x * std::log(x) : 0.0; }

}  // namespace

std::vector<std::string> FlatnessModel::basis_names() const {
  switch (kind) {
    case FlatnessModelKind::Gevrey:
      return {"1", "L", "|eps|^(-1/s)"};
    case FlatnessModelKind::QGevrey:
      if (inverse_power > 0.0) return {"1", "L", "L^2", "|eps|^(-p)"};
      return {"1", "L", "L^2"};
    case FlatnessModelKind::Mixed:
      return {"1", "L", "L^2", "(-L)log(-L)"};
  }
  return {};
}

Eigen::RowVectorXd FlatnessModel::basis(double abs_eps) const {
  if (!(abs_eps > 0.0)) throw PreconditionError("flatness basis: |eps| must be positive");
  const double L = std::log(abs_eps);
  Eigen::RowVectorXd row(static_cast<Eigen::Index>(basis_names().size()));
  switch (kind) {
    case FlatnessModelKind::Gevrey:
      if (!(s > 0.0)) throw PreconditionError("flatness basis: Gevrey order s must be positive");
      row << 1.0, L, std::pow(abs_eps, -1.0 / s);
      break;
    case FlatnessModelKind::QGevrey:
      if (inverse_power > 0.0)
        row << 1.0, L, L * L, std::pow(abs_eps, -inverse_power);
      else
        row << 1.0, L, L * L;
      break;
    case FlatnessModelKind::Mixed:
      if (L > 0.0) throw PreconditionError("flatness basis: the mixed model needs |eps| <= 1");
      row << 1.0, L, L * L, x_log_x(-L);
      break;
  }
  return row;
}

int FlatnessModel::leading_index() const { return 2; }

std::string to_string(const FlatnessModel& m) {
  std::ostringstream os;
  switch (m.kind) {
    case FlatnessModelKind::Gevrey:
      os << "gevrey(s=" << m.s << ")";
      break;
    case FlatnessModelKind::QGevrey:
      os << "q_gevrey";
      if (m.inverse_power > 0.0) os << "(+|eps|^-" << m.inverse_power << ")";
      break;
    case FlatnessModelKind::Mixed:
      os << "mixed";
      break;
  }
  return os.str();
}

double FlatnessFit::leading_span() const {
  double lo = 0.0, hi = 0.0;
  for (std::size_t i = 0; i < abs_eps.size(); ++i) {
    const double v = leading() * model.basis(abs_eps[i])(model.leading_index());
    lo = i ? std::min(lo, v) : v;
    hi = i ? std::max(hi, v) : v;
  }
  return hi - lo;
}

bool FlatnessFit::accepted() const { return leading() < 0.0 && leading_span() >= 1.0 && residual < 0.15; }

FlatnessFit fit_flatness(const std::vector<std::pair<double, double>>& data, const FlatnessModel& model) {
  if (data.size() < 8) throw PreconditionError("fit_flatness: at least 8 data points are required");
  double lo = data.front().first, hi = lo;
  for (const auto& [e, y] : data) {
    if (!(e > 0.0) || !std::isfinite(y)) throw PreconditionError("fit_flatness: |eps| must be positive and data finite");
    lo = std::min(lo, e);
    hi = std::max(hi, e);
  }
  if (std::log10(hi / lo) < 2.0 - 1e-9)
    throw PreconditionError("fit_flatness: the data must span at least two decades of |eps|");

  const auto n = static_cast<Eigen::Index>(data.size());
  const auto p = static_cast<Eigen::Index>(model.basis_names().size());
  Eigen::MatrixXd X(n, p);
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    X.row(i) = model.basis(data[static_cast<std::size_t>(i)].first);
    y(i) = data[static_cast<std::size_t>(i)].second;
  }
  Eigen::VectorXd scale = X.cwiseAbs().colwise().maxCoeff().transpose();
  for (Eigen::Index j = 0; j < p; ++j)
    if (scale(j) == 0.0) scale(j) = 1.0;
  const Eigen::MatrixXd Xs = X * scale.cwiseInverse().asDiagonal();
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(Xs, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& sv = svd.singularValues();
  const double cond = sv(p - 1) > 0.0 ? sv(0) / sv(p - 1) : std::numeric_limits<double>::infinity();
  if (!(cond <= 1e12))
    throw FitError("fit_flatness: basis of " + to_string(model) +
                   " is ill-conditioned on this data; widen the |eps| span");

  FlatnessFit fit;
  fit.model = model;
  fit.condition = cond;
  fit.coefficients = svd.solve(y).cwiseQuotient(scale);
  const Eigen::VectorXd yhat = X * fit.coefficients;
  double worst = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    worst = std::max(worst, std::abs(y(i) - yhat(i)) / std::max(std::abs(y(i)), 1.0));
    fit.abs_eps.push_back(data[static_cast<std::size_t>(i)].first);
    fit.log_values.push_back(y(i));
    fit.fitted.push_back(yhat(i));
  }
  fit.residual = worst;
  return fit;
}

}  // namespace qlab
