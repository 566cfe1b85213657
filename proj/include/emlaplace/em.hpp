#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "emlaplace/errors.hpp"
#include "emlaplace/models.hpp"
#include "emlaplace/scalar.hpp"

namespace emlaplace {

// Per-record posterior over the hidden component, generic over the scalar
// realization so the same code serves plain EM and the derivative paths.
template <GenericScalar S>
struct HiddenPosterior {
  int rows = 0;
  int cols = 0;
  std::vector<S> resp;  // row-major

  HiddenPosterior() = default;
  HiddenPosterior(int r, int c) : rows(r), cols(c), resp(static_cast<std::size_t>(r) * c, S(0.0)) {}

  S& operator()(int i, int k) { return resp[static_cast<std::size_t>(i) * cols + k]; }
  const S& operator()(int i, int k) const {
    return resp[static_cast<std::size_t>(i) * cols + k];
  }

  Eigen::MatrixXd value_matrix() const {
    Eigen::MatrixXd m(rows, cols);
    for (int i = 0; i < rows; ++i)
      for (int k = 0; k < cols; ++k) m(i, k) = value_part((*this)(i, k));
    return m;
  }
};

struct EmConfig {
  int max_iters = 1000;
  double tol_loglik = 1e-10;
  double tol_param = 1e-8;

  void validate() const {
    if (max_iters < 0) throw DimensionError("em: max_iters must be >= 0");
    if (!(tol_loglik > 0.0) || !(tol_param > 0.0))
      throw DimensionError("em: tolerances must be positive");
  }
};

enum class StopReason { LoglikTol, ParamTol, MaxIters };

inline std::string to_string(StopReason r) {
  switch (r) {
    case StopReason::LoglikTol: return "loglik-tol";
    case StopReason::ParamTol: return "param-tol";
    case StopReason::MaxIters: return "max-iters";
  }
  return "unknown";
}

struct EmIterate {
  int iteration = 0;
  Eigen::VectorXd theta;
  double log_joint = 0.0;
};

struct EmTrace {
  std::vector<EmIterate> iterates;
  bool converged = false;
  StopReason reason = StopReason::MaxIters;

  const Eigen::VectorXd& final_theta() const { return iterates.back().theta; }
  double final_log_joint() const { return iterates.back().log_joint; }
  int iterations() const { return static_cast<int>(iterates.size()) - 1; }
};

// A fit aborted mid-run; the partial trace is attached for diagnosis.
struct EmAborted : std::runtime_error {
  EmTrace partial;
  EmAborted(const std::string& what, EmTrace tr)
      : std::runtime_error(what), partial(std::move(tr)) {}
};

namespace detail {

template <class Model, GenericScalar S>
void check_theta(const Model& model, const std::vector<S>& theta) {
  if (static_cast<int>(theta.size()) != model.param_dim())
    throw DimensionError("theta has dimension " + std::to_string(theta.size()) +
                         ", model expects " + std::to_string(model.param_dim()));
  for (std::size_t i = 0; i < theta.size(); ++i)
    if (!std::isfinite(value_part(theta[i])))
      throw NumericError("theta component " + std::to_string(i) + " is not finite",
                         static_cast<int>(i));
}

template <GenericScalar S>
std::vector<S> to_generic(const Eigen::VectorXd& x) {
  std::vector<S> out(static_cast<std::size_t>(x.size()));
  for (Eigen::Index i = 0; i < x.size(); ++i) out[static_cast<std::size_t>(i)] = S(x[i]);
  return out;
}

// Per-record complete-data log joints and their log-sum-exp, shared by the
// E-step and the marginal.
template <class Model, GenericScalar S>
struct RecordTerms {
  std::vector<S> ll;  // one per component
  S lse;              // log sum_k exp(ll_k)
};

template <class Model, GenericScalar S>
RecordTerms<Model, S> record_terms(const Model& model, const typename Model::Record& rec,
                                   const std::vector<S>& theta, int record_index) {
  const int K = model.components();
  RecordTerms<Model, S> t;
  t.ll.resize(static_cast<std::size_t>(K));
  int kmax = 0;
  for (int k = 0; k < K; ++k) {
    t.ll[static_cast<std::size_t>(k)] = model.complete_data_log_joint(rec, k, theta);
    if (value_part(t.ll[static_cast<std::size_t>(k)]) >
        value_part(t.ll[static_cast<std::size_t>(kmax)]))
      kmax = k;
  }
  const S m = t.ll[static_cast<std::size_t>(kmax)];
  S sum(0.0);
  for (int k = 0; k < K; ++k) sum += exp(t.ll[static_cast<std::size_t>(k)] - m);
  if (!(value_part(sum) > 0.0) || !std::isfinite(value_part(sum)))
    throw NumericError("e_step: record " + std::to_string(record_index) +
                           " has a degenerate component normalizer",
                       record_index);
  t.lse = m + log(sum);
  return t;
}

}  // namespace detail

// Exact posterior responsibilities P(component | record, theta), rows
// normalized by log-sum-exp.
template <class Model, GenericScalar S>
HiddenPosterior<S> e_step(const Model& model, const typename Model::Data& data,
                          const std::vector<S>& theta) {
  detail::check_theta(model, theta);
  const int N = static_cast<int>(data.size());
  const int K = model.components();
  HiddenPosterior<S> post(N, K);
  for (int i = 0; i < N; ++i) {
    const auto t = detail::record_terms(model, data[static_cast<std::size_t>(i)], theta, i);
    for (int k = 0; k < K; ++k)
      post(i, k) = exp(t.ll[static_cast<std::size_t>(k)] - t.lse);
  }
  return post;
}

template <class Model>
HiddenPosterior<double> e_step(const Model& model, const typename Model::Data& data,
                               const Eigen::VectorXd& theta) {
  return e_step(model, data, detail::to_generic<double>(theta));
}

// Maximizer of the auxiliary for fixed responsibilities (closed form per
// model family).
template <class Model>
Eigen::VectorXd m_step(const Model& model, const typename Model::Data& data,
                       const HiddenPosterior<double>& post) {
  if (post.rows != static_cast<int>(data.size()) || post.cols != model.components())
    throw DimensionError("m_step: responsibility matrix shape does not match data/model");
  return model.maximize_auxiliary(data, post.value_matrix());
}

// log P(data, theta): sum over records of log-sum-exp of the complete-data
// terms, plus the log prior.
template <class Model, GenericScalar S>
S log_joint(const Model& model, const typename Model::Data& data,
            const std::vector<S>& theta) {
  detail::check_theta(model, theta);
  S acc(0.0);
  for (std::size_t i = 0; i < data.size(); ++i)
    acc += detail::record_terms(model, data[i], theta, static_cast<int>(i)).lse;
  acc += model.prior.template log_density<S>(theta);
  return acc;
}

template <class Model>
double log_joint(const Model& model, const typename Model::Data& data,
                 const Eigen::VectorXd& theta) {
  return log_joint(model, data, detail::to_generic<double>(theta));
}

// One EM iteration: responsibilities at theta, then the auxiliary maximizer.
template <class Model>
Eigen::VectorXd em_step(const Model& model, const typename Model::Data& data,
                        const Eigen::VectorXd& theta) {
  return m_step(model, data, e_step(model, data, theta));
}

// Iterate em_step until the log-joint gain or the parameter step drops
// below tolerance, or max_iters is reached. The parameter test runs first,
// so a start already at a fixed point reports param-tol.
template <class Model>
EmTrace em_fit(const Model& model, const typename Model::Data& data,
               const Eigen::VectorXd& theta0, const EmConfig& config = {}) {
  config.validate();
  if (data.empty()) throw DimensionError("em_fit: dataset is empty");

  EmTrace trace;
  trace.iterates.push_back({0, theta0, log_joint(model, data, theta0)});

  Eigen::VectorXd theta = theta0;
  double lj = trace.iterates.back().log_joint;
  for (int iter = 1; iter <= config.max_iters; ++iter) {
    Eigen::VectorXd next;
    double lj_next;
    try {
      next = em_step(model, data, theta);
      lj_next = log_joint(model, data, next);
    } catch (const std::exception& e) {
      throw EmAborted(std::string("em_fit aborted at iteration ") + std::to_string(iter) +
                          ": " + e.what(),
                      std::move(trace));
    }
    trace.iterates.push_back({iter, next, lj_next});
    const double step_norm = (next - theta).cwiseAbs().maxCoeff();
    const double gain = lj_next - lj;
    theta = std::move(next);
    lj = lj_next;
    if (step_norm < config.tol_param) {
      trace.converged = true;
      trace.reason = StopReason::ParamTol;
      return trace;
    }
    if (gain < config.tol_loglik) {
      trace.converged = true;
      trace.reason = StopReason::LoglikTol;
      return trace;
    }
  }
  trace.converged = false;
  trace.reason = StopReason::MaxIters;
  return trace;
}

namespace detail {

// log responsibilities, kept in log space for the auxiliary/divergence pair.
template <class Model>
Eigen::MatrixXd log_responsibilities(const Model& model, const typename Model::Data& data,
                                     const Eigen::VectorXd& theta) {
  const auto th = to_generic<double>(theta);
  check_theta(model, th);
  const int N = static_cast<int>(data.size());
  const int K = model.components();
  Eigen::MatrixXd lr(N, K);
  for (int i = 0; i < N; ++i) {
    const auto t = record_terms(model, data[static_cast<std::size_t>(i)], th, i);
    for (int k = 0; k < K; ++k) lr(i, k) = t.ll[static_cast<std::size_t>(k)] - t.lse;
  }
  return lr;
}

}  // namespace detail

// A(theta', theta): expected complete-data log joint under the posterior at
// theta', minus that posterior's entropy contribution, plus the log prior.
// 0 * log 0 terms are taken as 0.
template <class Model>
double auxiliary(const Model& model, const typename Model::Data& data,
                 const Eigen::VectorXd& theta_prime, const Eigen::VectorXd& theta) {
  const Eigen::MatrixXd lr_prime = detail::log_responsibilities(model, data, theta_prime);
  const auto th = detail::to_generic<double>(theta);
  detail::check_theta(model, th);
  const int K = model.components();
  double acc = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    for (int k = 0; k < K; ++k) {
      const double r = std::exp(lr_prime(static_cast<Eigen::Index>(i), k));
      if (r == 0.0) continue;
      const double ll = model.complete_data_log_joint(data[i], k, th);
      acc += r * (ll - lr_prime(static_cast<Eigen::Index>(i), k));
    }
  }
  acc += model.prior.template log_density<double>(th);
  return acc;
}

// D(theta', theta) >= 0: KL divergence between the hidden posteriors at
// theta' and theta, summed over records.
template <class Model>
double divergence(const Model& model, const typename Model::Data& data,
                  const Eigen::VectorXd& theta_prime, const Eigen::VectorXd& theta) {
  const Eigen::MatrixXd lr_prime = detail::log_responsibilities(model, data, theta_prime);
  const Eigen::MatrixXd lr = detail::log_responsibilities(model, data, theta);
  double acc = 0.0;
  for (Eigen::Index i = 0; i < lr_prime.rows(); ++i) {
    for (Eigen::Index k = 0; k < lr_prime.cols(); ++k) {
      const double r = std::exp(lr_prime(i, k));
      if (r == 0.0) continue;
      acc += r * (lr_prime(i, k) - lr(i, k));
    }
  }
  return acc;
}

}  // namespace emlaplace
