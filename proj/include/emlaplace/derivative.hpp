#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "emlaplace/errors.hpp"
#include "emlaplace/scalar.hpp"

namespace emlaplace {

namespace detail {

template <class Ys>
Eigen::VectorXd extract_checked(const Ys& y, double (*pick)(const typename Ys::value_type&)) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(y.size()));
  for (std::size_t j = 0; j < y.size(); ++j) {
    if (!finite_parts(y[j]))
      throw NumericError("directional_derivative: non-finite output component " +
                             std::to_string(j),
                         static_cast<int>(j));
    out[static_cast<Eigen::Index>(j)] = pick(y[j]);
  }
  return out;
}

inline double central_scale(const Eigen::VectorXd& x, const Eigen::VectorXd& v) {
  double s = 1.0;
  for (Eigen::Index i = 0; i < x.size(); ++i)
    if (v[i] != 0.0) s = std::max(s, std::abs(x[i]));
  return s;
}

}  // namespace detail

// d/da f(x + a*v) at a = 0, componentwise. `f` must accept the parameter
// vector as std::vector<S> for each scalar realization the strategy needs.
template <class F>
Eigen::VectorXd directional_derivative(F&& f, const Eigen::VectorXd& x,
                                       const Eigen::VectorXd& v,
                                       const DiffStrategy& strategy = {}) {
  if (x.size() != v.size())
    throw DimensionError("directional_derivative: point has dimension " +
                         std::to_string(x.size()) + " but direction has " +
                         std::to_string(v.size()));
  if (!(strategy.step >= 0.0) || !std::isfinite(strategy.step))
    throw DimensionError("directional_derivative: step must be a finite value >= 0");

  const std::size_t n = static_cast<std::size_t>(x.size());

  switch (strategy.kind) {
    case DiffStrategy::Kind::Dual: {
      std::vector<Dual> xt(n);
      for (std::size_t i = 0; i < n; ++i)
        xt[i] = Dual(x[static_cast<Eigen::Index>(i)], v[static_cast<Eigen::Index>(i)]);
      const auto y = f(xt);
      return detail::extract_checked(y, +[](const Dual& s) { return s.tangent; });
    }
    case DiffStrategy::Kind::ComplexStep: {
      const double h = strategy.step > 0.0 ? strategy.step : kDefaultComplexStep;
      std::vector<std::complex<double>> xt(n);
      for (std::size_t i = 0; i < n; ++i)
        xt[i] = {x[static_cast<Eigen::Index>(i)], h * v[static_cast<Eigen::Index>(i)]};
      const auto y = f(xt);
      Eigen::VectorXd out = detail::extract_checked(
          y, +[](const std::complex<double>& s) { return s.imag(); });
      out /= h;
      return out;
    }
    case DiffStrategy::Kind::CentralDiff: {
      const double h = strategy.step > 0.0
                           ? strategy.step
                           : default_central_step_scale() * detail::central_scale(x, v);
      std::vector<double> xp(n), xm(n);
      for (std::size_t i = 0; i < n; ++i) {
        const auto k = static_cast<Eigen::Index>(i);
        xp[i] = x[k] + h * v[k];
        xm[i] = x[k] - h * v[k];
      }
      const auto yp = f(xp);
      const auto ym = f(xm);
      Eigen::VectorXd p = detail::extract_checked(yp, +[](const double& s) { return s; });
      Eigen::VectorXd m = detail::extract_checked(ym, +[](const double& s) { return s; });
      return (p - m) / (2.0 * h);
    }
  }
  throw DimensionError("directional_derivative: unknown strategy kind");
}

}  // namespace emlaplace
