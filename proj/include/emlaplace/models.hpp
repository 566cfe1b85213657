#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <string_view>
#include <vector>

#include "emlaplace/errors.hpp"
#include "emlaplace/scalar.hpp"

namespace emlaplace {

inline constexpr double kLogTwoPi = 1.8378770664093454836;

// logistic(z) = 1 / (1 + exp(-z)). Each branch only exponentiates a
// non-positive value, so the transform keeps full relative accuracy on both
// tails and never overflows for |z| up to several hundred. The branch tests
// the value part, so every scalar realization follows the same path.
template <GenericScalar S>
S logistic(S z) {
  if (value_part(z) >= 0.0) return 1.0 / (1.0 + exp(-z));
  const S e = exp(z);
  return e / (1.0 + e);
}

// log(1 + exp(z)), stable on both tails. The branch tests the value part,
// so every scalar realization follows the same path.
template <GenericScalar S>
S softplus(S z) {
  if (value_part(z) > 0.0) return z + log1p(exp(-z));
  return log1p(exp(z));
}

inline double logit(double p) { return std::log(p / (1.0 - p)); }

// Independent Gaussian prior per unconstrained coordinate. An infinite
// variance makes that coordinate flat: it contributes nothing to the log
// density or its derivatives, and its mean survives only as the fallback
// location for components no data supports.
struct GaussianPrior {
  Eigen::VectorXd mean;
  Eigen::VectorXd var;

  static GaussianPrior flat(int n) {
    return {Eigen::VectorXd::Zero(n),
            Eigen::VectorXd::Constant(n, std::numeric_limits<double>::infinity())};
  }

  int dim() const { return static_cast<int>(mean.size()); }
  bool is_flat(int i) const { return std::isinf(var[i]); }

  void validate() const {
    if (mean.size() != var.size())
      throw DimensionError("prior: mean and variance lengths differ");
    for (Eigen::Index i = 0; i < var.size(); ++i) {
      if (!(var[i] > 0.0)) throw DimensionError("prior: variance must be positive");
      if (!std::isfinite(mean[i])) throw DimensionError("prior: mean must be finite");
    }
  }

  template <GenericScalar S>
  S log_density(const std::vector<S>& theta) const {
    S acc(0.0);
    for (int i = 0; i < dim(); ++i) {
      if (is_flat(i)) continue;
      const S d = theta[static_cast<std::size_t>(i)] - mean[i];
      acc += -0.5 * (kLogTwoPi + std::log(var[i])) - d * d / (2.0 * var[i]);
    }
    return acc;
  }

  template <GenericScalar S>
  void accumulate_grad(const std::vector<S>& theta, std::vector<S>& grad) const {
    for (int i = 0; i < dim(); ++i) {
      if (is_flat(i)) continue;
      grad[static_cast<std::size_t>(i)] +=
          -(theta[static_cast<std::size_t>(i)] - mean[i]) / var[i];
    }
  }
};

namespace detail {

inline void validate_weights(const Eigen::VectorXd& w) {
  if (w.size() < 1) throw DimensionError("model: needs at least one component");
  double sum = 0.0;
  for (Eigen::Index k = 0; k < w.size(); ++k) {
    if (!(w[k] > 0.0)) throw DimensionError("model: weights must be positive");
    sum += w[k];
  }
  if (std::abs(sum - 1.0) > 1e-12)
    throw DimensionError("model: weights must sum to 1, got " + std::to_string(sum));
}

}  // namespace detail

// Mixture of unit-weighted univariate Gaussians with known weights and
// variances; the free parameters are the K component means.
struct GaussianMixture {
  using Record = double;
  using Data = std::vector<double>;
  static constexpr std::string_view kFamily = "gaussian-mixture";

  Eigen::VectorXd weights;
  Eigen::VectorXd variances;
  GaussianPrior prior;

  GaussianMixture(Eigen::VectorXd w, Eigen::VectorXd vars, GaussianPrior pr)
      : weights(std::move(w)), variances(std::move(vars)), prior(std::move(pr)) {
    detail::validate_weights(weights);
    if (variances.size() != weights.size())
      throw DimensionError("gaussian-mixture: need one variance per component");
    for (Eigen::Index k = 0; k < variances.size(); ++k)
      if (!(variances[k] > 0.0) || !std::isfinite(variances[k]))
        throw DimensionError("gaussian-mixture: variances must be positive and finite");
    prior.validate();
    if (prior.dim() != components())
      throw DimensionError("gaussian-mixture: prior dimension must equal component count");
    log_weights_.resize(weights.size());
    for (Eigen::Index k = 0; k < weights.size(); ++k)
      log_weights_[k] = std::log(weights[k]);
  }

  int components() const { return static_cast<int>(weights.size()); }
  int param_dim() const { return components(); }

  // log P(x, component = k | means): log w_k + log N(x | mu_k, sigma_k^2).
  // The prior is accounted for once per dataset, not here.
  template <GenericScalar S>
  S complete_data_log_joint(double x, int k, const std::vector<S>& theta) const {
    const S d = x - theta[static_cast<std::size_t>(k)];
    return log_weights_[k] - 0.5 * (kLogTwoPi + std::log(variances[k])) -
           d * d / (2.0 * variances[k]);
  }

  // Hand-coded gradient of the above in the means: (x - mu_k)/sigma_k^2 in
  // slot k, zero elsewhere.
  template <GenericScalar S>
  std::vector<S> complete_data_grad(double x, int k, const std::vector<S>& theta) const {
    std::vector<S> g(static_cast<std::size_t>(param_dim()), S(0.0));
    g[static_cast<std::size_t>(k)] =
        (x - theta[static_cast<std::size_t>(k)]) / variances[k];
    return g;
  }

  // argmax over the means of the responsibility-weighted complete-data log
  // joint plus prior: a weighted mean shrunk toward the prior mean. When a
  // component carries no responsibility and the prior is flat, the limit of
  // the shrinkage formula is the prior mean itself.
  Eigen::VectorXd maximize_auxiliary(const Data& data, const Eigen::MatrixXd& resp) const {
    const int K = components();
    Eigen::VectorXd theta(K);
    for (int k = 0; k < K; ++k) {
      double num = 0.0, den = 0.0;
      for (std::size_t i = 0; i < data.size(); ++i) {
        num += resp(static_cast<Eigen::Index>(i), k) * data[i] / variances[k];
        den += resp(static_cast<Eigen::Index>(i), k) / variances[k];
      }
      if (!prior.is_flat(k)) {
        num += prior.mean[k] / prior.var[k];
        den += 1.0 / prior.var[k];
      }
      theta[k] = den > 0.0 ? num / den : prior.mean[k];
    }
    return theta;
  }

 private:
  Eigen::VectorXd log_weights_;
};

struct CoinRecord {
  std::int64_t successes = 0;
  std::int64_t trials = 0;
};

// Mixture of binomial "coins" with known weights; the free parameters are
// the K biases, stored as log-odds so the space is unconstrained.
struct CoinMixture {
  using Record = CoinRecord;
  using Data = std::vector<CoinRecord>;
  static constexpr std::string_view kFamily = "coin-mixture";

  Eigen::VectorXd weights;
  GaussianPrior prior;

  CoinMixture(Eigen::VectorXd w, GaussianPrior pr)
      : weights(std::move(w)), prior(std::move(pr)) {
    detail::validate_weights(weights);
    prior.validate();
    if (prior.dim() != components())
      throw DimensionError("coin-mixture: prior dimension must equal component count");
    log_weights_.resize(weights.size());
    for (Eigen::Index k = 0; k < weights.size(); ++k)
      log_weights_[k] = std::log(weights[k]);
  }

  int components() const { return static_cast<int>(weights.size()); }
  int param_dim() const { return components(); }

  static void validate_record(const CoinRecord& r) {
    if (r.trials < 1 || r.successes < 0 || r.successes > r.trials)
      throw DimensionError("coin record: need 0 <= successes <= trials, trials >= 1");
  }

  // log P(record, component = k | log-odds): log w_k + s log p + (t-s) log(1-p)
  // with p = logistic(theta_k), expressed through softplus for stability.
  template <GenericScalar S>
  S complete_data_log_joint(const CoinRecord& r, int k, const std::vector<S>& theta) const {
    const S z = theta[static_cast<std::size_t>(k)];
    return log_weights_[k] - static_cast<double>(r.successes) * softplus(-z) -
           static_cast<double>(r.trials - r.successes) * softplus(z);
  }

  // d/d theta_k of the above: s - t * logistic(theta_k) in slot k.
  template <GenericScalar S>
  std::vector<S> complete_data_grad(const CoinRecord& r, int k,
                                    const std::vector<S>& theta) const {
    std::vector<S> g(static_cast<std::size_t>(param_dim()), S(0.0));
    g[static_cast<std::size_t>(k)] =
        static_cast<double>(r.successes) -
        static_cast<double>(r.trials) * logistic(theta[static_cast<std::size_t>(k)]);
    return g;
  }

  // Per-component 1-D root of the penalized weighted log-odds equation
  //   S1 - T1 * logistic(theta) - (theta - m)/v = 0,
  // solved by bracketed Newton. The objective is strictly concave in theta,
  // so the root is the unique maximizer when it exists.
  Eigen::VectorXd maximize_auxiliary(const Data& data, const Eigen::MatrixXd& resp) const {
    const int K = components();
    Eigen::VectorXd theta(K);
    for (int k = 0; k < K; ++k) {
      double s1 = 0.0, t1 = 0.0;
      for (std::size_t i = 0; i < data.size(); ++i) {
        s1 += resp(static_cast<Eigen::Index>(i), k) * static_cast<double>(data[i].successes);
        t1 += resp(static_cast<Eigen::Index>(i), k) * static_cast<double>(data[i].trials);
      }
      theta[k] = solve_component(k, s1, t1);
    }
    return theta;
  }

 private:
  double solve_component(int k, double s1, double t1) const {
    const bool flat = prior.is_flat(k);
    if (t1 <= 0.0) return prior.mean[k];  // no responsibility at all
    if (flat && (s1 <= 0.0 || s1 >= t1))
      throw MStepError("m_step: coin component " + std::to_string(k) +
                       " has no interior maximizer under a flat prior");

    const auto g = [&](double th) {
      double val = s1 - t1 * logistic(th);
      if (!flat) val -= (th - prior.mean[k]) / prior.var[k];
      return val;
    };
    const auto gprime = [&](double th) {
      const double p = logistic(th);
      double val = -t1 * p * (1.0 - p);
      if (!flat) val -= 1.0 / prior.var[k];
      return val;
    };

    // Start at the pseudo-count log-odds; bracket by doubling outward.
    double th = logit((s1 + 0.5) / (t1 + 1.0));
    double lo = th, hi = th;
    double span = 1.0;
    while (g(lo) <= 0.0) {
      lo -= span;
      span *= 2.0;
      if (lo < -800.0)
        throw MStepError("m_step: failed to bracket coin component " + std::to_string(k));
    }
    span = 1.0;
    while (g(hi) >= 0.0) {
      hi += span;
      span *= 2.0;
      if (hi > 800.0)
        throw MStepError("m_step: failed to bracket coin component " + std::to_string(k));
    }

    th = 0.5 * (lo + hi);
    for (int iter = 0; iter < 100; ++iter) {
      const double gv = g(th);
      if (gv > 0.0) lo = th;
      else hi = th;
      double next = th - gv / gprime(th);
      if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);  // Newton left the bracket
      const double delta = std::abs(next - th);
      th = next;
      if (delta <= 1e-13 * std::max(1.0, std::abs(th))) return th;
    }
    throw MStepError("m_step: Newton did not converge for coin component " +
                     std::to_string(k));
  }

  Eigen::VectorXd log_weights_;
};

// What em-core needs from a model family.
template <class M>
concept MixtureModel = requires(const M& m, const typename M::Record& r,
                                const typename M::Data& d,
                                const std::vector<double>& theta,
                                const Eigen::MatrixXd& resp) {
  { m.components() } -> std::convertible_to<int>;
  { m.param_dim() } -> std::convertible_to<int>;
  { m.complete_data_log_joint(r, 0, theta) } -> std::convertible_to<double>;
  { m.complete_data_grad(r, 0, theta) } -> std::convertible_to<std::vector<double>>;
  { m.maximize_auxiliary(d, resp) } -> std::convertible_to<Eigen::VectorXd>;
  { m.prior } -> std::convertible_to<GaussianPrior>;
};

static_assert(MixtureModel<GaussianMixture>);
static_assert(MixtureModel<CoinMixture>);

}  // namespace emlaplace
