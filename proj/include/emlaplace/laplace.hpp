#pragma once

#include <Eigen/Dense>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "emlaplace/derivative.hpp"
#include "emlaplace/em.hpp"
#include "emlaplace/errors.hpp"
#include "emlaplace/models.hpp"

namespace emlaplace {

// Gradient max-norm below which a point is accepted as a mode.
inline constexpr double kModeGradTol = 1e-6;
// Pre-symmetrization bound on |H_ij - H_ji| relative to 1 + max|H|.
inline constexpr double kHessianAsymTol = 1e-6;

struct LaplacePosterior {
  Eigen::VectorXd mean;
  Eigen::MatrixXd covariance;      // -(Hessian)^-1, symmetric positive-definite
  double log_det_neg_lambda = 0.0; // log det of the negated Hessian
  double log_evidence = 0.0;
};

// Gradient of log P(data, theta) through the auxiliary: the posterior-
// weighted complete-data gradients plus the prior gradient. The
// responsibilities are evaluated at the *same* generic-scalar theta, so an
// outer directional derivative of this function sees their theta-dependence
// and therefore yields the full Hessian, not just the auxiliary's.
template <class Model, GenericScalar S>
std::vector<S> grad_log_joint(const Model& model, const typename Model::Data& data,
                              const std::vector<S>& theta) {
  detail::check_theta(model, theta);
  const auto post = e_step(model, data, theta);
  const int K = model.components();
  const std::size_t n = static_cast<std::size_t>(model.param_dim());
  std::vector<S> grad(n, S(0.0));
  for (std::size_t i = 0; i < data.size(); ++i) {
    for (int k = 0; k < K; ++k) {
      const auto g = model.complete_data_grad(data[i], k, theta);
      const S r = post(static_cast<int>(i), k);
      for (std::size_t j = 0; j < n; ++j) grad[j] += r * g[j];
    }
  }
  model.prior.accumulate_grad(theta, grad);
  return grad;
}

template <class Model>
Eigen::VectorXd grad_log_joint(const Model& model, const typename Model::Data& data,
                               const Eigen::VectorXd& theta) {
  const auto g = grad_log_joint(model, data, detail::to_generic<double>(theta));
  return Eigen::Map<const Eigen::VectorXd>(g.data(), static_cast<Eigen::Index>(g.size()));
}

// Hessian-vector product: the directional derivative of the gradient along v.
template <class Model>
Eigen::VectorXd hvp(const Model& model, const typename Model::Data& data,
                    const Eigen::VectorXd& theta, const Eigen::VectorXd& v,
                    const DiffStrategy& strategy = {}) {
  if (v.size() != model.param_dim())
    throw DimensionError("hvp: direction has dimension " + std::to_string(v.size()) +
                         ", model expects " + std::to_string(model.param_dim()));
  return directional_derivative(
      [&](const auto& th) { return grad_log_joint(model, data, th); }, theta, v, strategy);
}

// Full Hessian of log P(data, theta), one HVP per unit direction. Columns
// are independent and may be computed on several threads; assembly is a
// fixed-slot join, so the result does not depend on the thread count.
template <class Model>
Eigen::MatrixXd hessian(const Model& model, const typename Model::Data& data,
                        const Eigen::VectorXd& theta, const DiffStrategy& strategy = {},
                        int threads = 1) {
  const int n = model.param_dim();
  detail::check_theta(model, detail::to_generic<double>(theta));
  Eigen::MatrixXd h(n, n);

  const auto fill_column = [&](int j) {
    Eigen::VectorXd unit = Eigen::VectorXd::Zero(n);
    unit[j] = 1.0;
    h.col(j) = hvp(model, data, theta, unit, strategy);
  };

  if (threads <= 0) {
    const unsigned hw = std::thread::hardware_concurrency();
    threads = hw > 0 ? static_cast<int>(hw) : 1;
  }
  threads = std::min(threads, n);

  if (threads <= 1) {
    for (int j = 0; j < n; ++j) fill_column(j);
  } else {
    std::atomic<int> next{0};
    std::exception_ptr first_error;
    std::mutex error_mutex;
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(threads));
    for (int t = 0; t < threads; ++t) {
      pool.emplace_back([&] {
        for (int j = next.fetch_add(1); j < n; j = next.fetch_add(1)) {
          try {
            fill_column(j);
          } catch (...) {
            std::lock_guard<std::mutex> lock(error_mutex);
            if (!first_error) first_error = std::current_exception();
            return;
          }
        }
      });
    }
    for (auto& th : pool) th.join();
    if (first_error) std::rethrow_exception(first_error);
  }

  const double scale = 1.0 + h.cwiseAbs().maxCoeff();
  const double asym = (h - h.transpose()).cwiseAbs().maxCoeff();
  if (asym > kHessianAsymTol * scale)
    throw AsymmetricHessianError(
        "hessian: columns disagree beyond round-off (asymmetry " + format_value(asym) +
        "); the gradient implementation is inconsistent");
  return 0.5 * (h + h.transpose());
}

namespace detail {

// Lower-triangular Cholesky factor of a symmetric matrix; reports the first
// non-positive pivot instead of failing silently.
inline std::optional<int> cholesky_factor(const Eigen::MatrixXd& a, Eigen::MatrixXd& l) {
  const Eigen::Index n = a.rows();
  l = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    double d = a(j, j);
    for (Eigen::Index k = 0; k < j; ++k) d -= l(j, k) * l(j, k);
    if (!(d > 0.0) || !std::isfinite(d)) return static_cast<int>(j);
    l(j, j) = std::sqrt(d);
    for (Eigen::Index i = j + 1; i < n; ++i) {
      double s = a(i, j);
      for (Eigen::Index k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
      l(i, j) = s / l(j, j);
    }
  }
  return std::nullopt;
}

}  // namespace detail

// Gaussian approximation of the parameter posterior at a mode: mean
// theta_hat, covariance = inverse of the negated Hessian, plus the Laplace
// integral for the evidence.
template <class Model>
LaplacePosterior laplace_posterior(const Model& model, const typename Model::Data& data,
                                   const Eigen::VectorXd& theta_hat,
                                   const DiffStrategy& strategy = {}, int threads = 1) {
  const Eigen::VectorXd grad = grad_log_joint(model, data, theta_hat);
  const double gnorm = grad.cwiseAbs().maxCoeff();
  if (gnorm > kModeGradTol)
    throw NotAtModeError("laplace_posterior: not at mode, gradient max-norm " +
                             format_value(gnorm),
                         gnorm);

  const Eigen::MatrixXd lambda = hessian(model, data, theta_hat, strategy, threads);
  const Eigen::MatrixXd neg = -lambda;

  Eigen::MatrixXd l;
  if (const auto bad = detail::cholesky_factor(neg, l))
    throw NotNegativeDefiniteError(
        "laplace_posterior: saddle or degenerate mode, non-positive pivot at index " +
            std::to_string(*bad),
        *bad);

  const Eigen::Index n = neg.rows();
  const Eigen::MatrixXd identity = Eigen::MatrixXd::Identity(n, n);
  Eigen::MatrixXd cov = l.triangularView<Eigen::Lower>().solve(identity);
  cov = l.transpose().triangularView<Eigen::Upper>().solve(cov);
  cov = 0.5 * (cov + cov.transpose().eval());

  const double residual = (cov * neg - identity).cwiseAbs().maxCoeff();
  if (!(residual <= 1e-8))
    throw NumericError("laplace_posterior: covariance inversion residual " +
                       format_value(residual));

  double log_det = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) log_det += 2.0 * std::log(l(i, i));

  LaplacePosterior out;
  out.mean = theta_hat;
  out.covariance = std::move(cov);
  out.log_det_neg_lambda = log_det;
  out.log_evidence = log_joint(model, data, theta_hat) +
                     0.5 * static_cast<double>(n) * kLogTwoPi - 0.5 * log_det;
  return out;
}

}  // namespace emlaplace
