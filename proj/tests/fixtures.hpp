#pragma once

// Shared fixtures and independent straight-line oracles for the test suites.
// Oracle code here intentionally re-derives formulas instead of calling the
// library paths it is used to check.

#include <Eigen/Dense>
#include <cmath>
#include <random>
#include <vector>

#include "emlaplace/models.hpp"

namespace fixtures {

inline const std::vector<double>& four_points() {
  static const std::vector<double> data{-1.2, -0.8, 0.9, 1.1};
  return data;
}

inline Eigen::VectorXd vec(std::initializer_list<double> xs) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index i = 0;
  for (double x : xs) v[i++] = x;
  return v;
}

struct GmmFixture {
  emlaplace::GaussianMixture model;
  std::vector<double> data;
  Eigen::VectorXd theta0;
};

struct CoinFixture {
  emlaplace::CoinMixture model;
  std::vector<emlaplace::CoinRecord> data;
  Eigen::VectorXd theta0;
};

inline Eigen::VectorXd random_weights(std::mt19937_64& rng, int k) {
  std::uniform_real_distribution<double> u(0.2, 1.0);
  Eigen::VectorXd w(k);
  double sum = 0.0;
  for (int i = 0; i < k; ++i) sum += (w[i] = u(rng));
  w /= sum;
  // renormalize exactly enough for the 1e-12 weight-sum gate
  w[k - 1] = 1.0 - w.head(k - 1).sum();
  return w;
}

inline emlaplace::GaussianPrior random_prior(std::mt19937_64& rng, int k, bool proper_only) {
  std::uniform_real_distribution<double> um(-1.0, 1.0);
  std::uniform_real_distribution<double> uv(0.5, 4.0);
  emlaplace::GaussianPrior prior = emlaplace::GaussianPrior::flat(k);
  for (int i = 0; i < k; ++i) {
    const bool proper = proper_only || (rng() % 2 == 0);
    prior.mean[i] = um(rng);
    if (proper) prior.var[i] = uv(rng);
  }
  return prior;
}

inline GmmFixture random_gmm_fixture(std::mt19937_64& rng, bool proper_prior_only = false) {
  std::uniform_int_distribution<int> uk(1, 3);
  std::uniform_int_distribution<int> un(4, 50);
  std::uniform_real_distribution<double> umean(-3.0, 3.0);
  std::uniform_real_distribution<double> uvar(0.4, 2.5);

  const int k = uk(rng);
  Eigen::VectorXd variances(k), true_means(k);
  for (int i = 0; i < k; ++i) {
    variances[i] = uvar(rng);
    true_means[i] = umean(rng);
  }
  emlaplace::GaussianMixture model(random_weights(rng, k), variances,
                                   random_prior(rng, k, proper_prior_only));

  const int n = un(rng);
  std::vector<double> data(static_cast<std::size_t>(n));
  std::discrete_distribution<int> pick(model.weights.data(), model.weights.data() + k);
  for (auto& x : data) {
    const int c = pick(rng);
    std::normal_distribution<double> g(true_means[c], std::sqrt(variances[c]));
    x = g(rng);
  }

  Eigen::VectorXd theta0(k);
  for (int i = 0; i < k; ++i) theta0[i] = umean(rng);
  return {std::move(model), std::move(data), std::move(theta0)};
}

inline CoinFixture random_coin_fixture(std::mt19937_64& rng, bool proper_prior_only = false) {
  std::uniform_int_distribution<int> uk(1, 3);
  std::uniform_int_distribution<int> un(4, 50);
  std::uniform_int_distribution<int> ut(1, 30);
  std::uniform_real_distribution<double> ulo(-2.0, 2.0);

  const int k = uk(rng);
  emlaplace::CoinMixture model(random_weights(rng, k), random_prior(rng, k, proper_prior_only));
  Eigen::VectorXd true_logodds(k);
  for (int i = 0; i < k; ++i) true_logodds[i] = ulo(rng);

  const int n = un(rng);
  std::vector<emlaplace::CoinRecord> data;
  std::discrete_distribution<int> pick(model.weights.data(), model.weights.data() + k);
  // keep at least one success and one failure overall so flat priors stay
  // maximizable
  while (true) {
    data.clear();
    long long s_total = 0, t_total = 0;
    for (int i = 0; i < n; ++i) {
      const int c = pick(rng);
      const int trials = ut(rng);
      const double p = 1.0 / (1.0 + std::exp(-true_logodds[c]));
      std::binomial_distribution<int> b(trials, p);
      const long long successes = b(rng);
      data.push_back({successes, trials});
      s_total += successes;
      t_total += trials;
    }
    if (s_total > 0 && s_total < t_total) break;
  }

  Eigen::VectorXd theta0(k);
  for (int i = 0; i < k; ++i) theta0[i] = ulo(rng);
  return {std::move(model), std::move(data), std::move(theta0)};
}

inline Eigen::VectorXd random_theta(std::mt19937_64& rng, int n, double lo = -3.0,
                                    double hi = 3.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Eigen::VectorXd t(n);
  for (int i = 0; i < n; ++i) t[i] = u(rng);
  return t;
}

// ---------------------------------------------------------------------------
// Straight-line EM oracle for the Gaussian mixture: direct density
// normalization in the E-step, shrunk weighted means in the M-step.

inline Eigen::VectorXd oracle_gmm_em_step(const emlaplace::GaussianMixture& m,
                                          const std::vector<double>& data,
                                          const Eigen::VectorXd& mu) {
  const int k = m.components();
  const int n = static_cast<int>(data.size());
  Eigen::MatrixXd resp(n, k);
  for (int i = 0; i < n; ++i) {
    double norm = 0.0;
    for (int c = 0; c < k; ++c) {
      const double d = data[static_cast<std::size_t>(i)] - mu[c];
      resp(i, c) = m.weights[c] / std::sqrt(2.0 * M_PI * m.variances[c]) *
                   std::exp(-d * d / (2.0 * m.variances[c]));
      norm += resp(i, c);
    }
    for (int c = 0; c < k; ++c) resp(i, c) /= norm;
  }
  Eigen::VectorXd next(k);
  for (int c = 0; c < k; ++c) {
    double num = 0.0, den = 0.0;
    for (int i = 0; i < n; ++i) {
      num += resp(i, c) * data[static_cast<std::size_t>(i)];
      den += resp(i, c);
    }
    num /= m.variances[c];
    den /= m.variances[c];
    if (!m.prior.is_flat(c)) {
      num += m.prior.mean[c] / m.prior.var[c];
      den += 1.0 / m.prior.var[c];
    }
    next[c] = den > 0.0 ? num / den : m.prior.mean[c];
  }
  return next;
}

inline double oracle_gmm_log_joint(const emlaplace::GaussianMixture& m,
                                   const std::vector<double>& data,
                                   const Eigen::VectorXd& mu) {
  double acc = 0.0;
  for (double x : data) {
    double dens = 0.0;
    for (int c = 0; c < m.components(); ++c) {
      const double d = x - mu[c];
      dens += m.weights[c] / std::sqrt(2.0 * M_PI * m.variances[c]) *
              std::exp(-d * d / (2.0 * m.variances[c]));
    }
    acc += std::log(dens);
  }
  for (int c = 0; c < m.components(); ++c) {
    if (m.prior.is_flat(c)) continue;
    const double d = mu[c] - m.prior.mean[c];
    acc += -0.5 * std::log(2.0 * M_PI * m.prior.var[c]) - d * d / (2.0 * m.prior.var[c]);
  }
  return acc;
}

// Same stopping rule as the production fit so trajectories are comparable
// iterate for iterate.
inline Eigen::VectorXd oracle_gmm_em_fit(const emlaplace::GaussianMixture& m,
                                         const std::vector<double>& data, Eigen::VectorXd mu,
                                         int max_iters = 1000, double tol_loglik = 1e-10,
                                         double tol_param = 1e-8) {
  double lj = oracle_gmm_log_joint(m, data, mu);
  for (int i = 0; i < max_iters; ++i) {
    const Eigen::VectorXd next = oracle_gmm_em_step(m, data, mu);
    const double lj_next = oracle_gmm_log_joint(m, data, next);
    const double step = (next - mu).cwiseAbs().maxCoeff();
    const double gain = lj_next - lj;
    mu = next;
    lj = lj_next;
    if (step < tol_param || gain < tol_loglik) break;
  }
  return mu;
}

}  // namespace fixtures
