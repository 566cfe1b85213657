#include <doctest.h>

#include <cmath>
#include <random>

#include "emlaplace/laplace.hpp"
#include "emlaplace/oracle.hpp"
#include "fixtures.hpp"

using namespace emlaplace;
using fixtures::vec;

namespace {

GaussianMixture gmm2() {
  return GaussianMixture(vec({0.5, 0.5}), vec({1.0, 1.0}), GaussianPrior::flat(2));
}

EmConfig tight_config() {
  EmConfig c;
  c.max_iters = 200000;
  c.tol_loglik = 1e-300;
  c.tol_param = 1e-13;
  return c;
}

template <class Model>
Eigen::VectorXd fit_mode(const Model& model, const typename Model::Data& data,
                         const Eigen::VectorXd& start) {
  return em_fit(model, data, start, tight_config()).final_theta();
}

// Exact marginal of a single Gaussian component under a conjugate Gaussian
// prior on the mean, by completing the square.
double conjugate_log_evidence(const std::vector<double>& data, double var, double prior_mean,
                              double prior_var) {
  const double n = static_cast<double>(data.size());
  double sum = 0.0, sumsq = 0.0;
  for (double x : data) {
    sum += x;
    sumsq += x * x;
  }
  const double precision = n / var + 1.0 / prior_var;
  const double mean_post = (sum / var + prior_mean / prior_var) / precision;
  double out = -0.5 * n * std::log(2.0 * M_PI * var) - 0.5 * std::log(2.0 * M_PI * prior_var);
  out += 0.5 * std::log(2.0 * M_PI / precision);
  out -= 0.5 * (sumsq / var + prior_mean * prior_mean / prior_var -
                mean_post * mean_post * precision);
  return out;
}

}  // namespace

TEST_CASE("gradient vanishes in the fully symmetric configuration") {
  const auto model = gmm2();
  const std::vector<double> data{0.0};
  const Eigen::VectorXd g = grad_log_joint(model, data, vec({0.0, 0.0}));
  CHECK(g.cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("gradient is small at every tightly fitted mode") {
  std::mt19937_64 rng(111);
  for (int trial = 0; trial < 5; ++trial) {
    const auto fx = fixtures::random_gmm_fixture(rng);
    const Eigen::VectorXd mode = fit_mode(fx.model, fx.data, fx.theta0);
    CHECK(grad_log_joint(fx.model, fx.data, mode).cwiseAbs().maxCoeff() <= 1e-6);

    const auto cfx = fixtures::random_coin_fixture(rng, true);
    const Eigen::VectorXd cmode = fit_mode(cfx.model, cfx.data, cfx.theta0);
    CHECK(grad_log_joint(cfx.model, cfx.data, cmode).cwiseAbs().maxCoeff() <= 1e-6);
  }
}

TEST_CASE("gradient matches central finite differences of the log joint") {
  const auto model = gmm2();
  const std::vector<double> data{0.0};
  const Eigen::VectorXd theta = vec({1.0, -1.0});
  const Eigen::VectorXd g = grad_log_joint(model, data, theta);
  const Eigen::VectorXd gfd = oracle::fd_gradient(
      [&](const Eigen::VectorXd& t) { return log_joint(model, data, t); }, theta);
  CHECK((g - gfd).cwiseAbs().maxCoeff() <= 1e-7 * std::max(1.0, g.cwiseAbs().maxCoeff()));
}

TEST_CASE("gradient identity holds at random points for both models") {
  std::mt19937_64 rng(222);
  for (int trial = 0; trial < 25; ++trial) {
    const auto check_at = [](const auto& model, const auto& data, const Eigen::VectorXd& t) {
      const Eigen::VectorXd g = grad_log_joint(model, data, t);
      const Eigen::VectorXd gfd = oracle::fd_gradient(
          [&](const Eigen::VectorXd& p) { return log_joint(model, data, p); }, t);
      const double scale = std::max({1.0, g.cwiseAbs().maxCoeff(), gfd.cwiseAbs().maxCoeff()});
      CHECK((g - gfd).cwiseAbs().maxCoeff() / scale <= 1e-6);
    };
    const auto fx = fixtures::random_gmm_fixture(rng);
    check_at(fx.model, fx.data, fixtures::random_theta(rng, fx.model.param_dim()));
    const auto cfx = fixtures::random_coin_fixture(rng);
    check_at(cfx.model, cfx.data, fixtures::random_theta(rng, cfx.model.param_dim()));
  }
}

TEST_CASE("hvp of the zero direction is zero") {
  const auto model = gmm2();
  const auto& data = fixtures::four_points();
  const Eigen::VectorXd h = hvp(model, data, vec({0.4, -0.2}), vec({0.0, 0.0}));
  CHECK(h.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("hvp matches the closed-form second derivative of a single coin") {
  GaussianPrior prior{vec({0.2}), vec({1.5})};
  const CoinMixture model(vec({1.0}), prior);
  const std::vector<CoinRecord> data{{7, 10}, {1, 5}};
  const Eigen::VectorXd theta = vec({0.3});
  const Eigen::VectorXd h = hvp(model, data, theta, vec({1.0}));
  const double p = 1.0 / (1.0 + std::exp(-0.3));
  const double expected = -15.0 * p * (1.0 - p) - 1.0 / 1.5;
  CHECK(h[0] == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("hvp is linear in the direction") {
  std::mt19937_64 rng(333);
  const auto fx = fixtures::random_gmm_fixture(rng);
  const int n = fx.model.param_dim();
  for (int trial = 0; trial < 10; ++trial) {
    const Eigen::VectorXd u = fixtures::random_theta(rng, n, -1.0, 1.0);
    const Eigen::VectorXd v = fixtures::random_theta(rng, n, -1.0, 1.0);
    const double a = 1.7, b = -0.4;
    const Eigen::VectorXd lhs = hvp(fx.model, fx.data, fx.theta0, a * u + b * v);
    const Eigen::VectorXd rhs =
        a * hvp(fx.model, fx.data, fx.theta0, u) + b * hvp(fx.model, fx.data, fx.theta0, v);
    const double scale = std::max(1.0, rhs.cwiseAbs().maxCoeff());
    CHECK((lhs - rhs).cwiseAbs().maxCoeff() / scale <= 1e-10);
  }
}

TEST_CASE("single-component curvature is the exact Gaussian value") {
  const GaussianMixture model(vec({1.0}), vec({2.0}), GaussianPrior::flat(1));
  const std::vector<double> data{0.3, -0.7, 1.1, 0.2, 0.9};
  const Eigen::MatrixXd h = hessian(model, data, vec({0.36}));
  CHECK(h(0, 0) == doctest::Approx(-5.0 / 2.0).epsilon(1e-12));  // -N/sigma^2
}

TEST_CASE("hessian output is exactly symmetric") {
  std::mt19937_64 rng(444);
  const auto fx = fixtures::random_gmm_fixture(rng);
  const Eigen::MatrixXd h = hessian(fx.model, fx.data, fx.theta0);
  CHECK((h - h.transpose()).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("hessian matches the dense finite-difference reference at the mode") {
  const auto model = gmm2();
  const auto& data = fixtures::four_points();
  const Eigen::VectorXd mode = fit_mode(model, data, vec({-2.0, 2.0}));
  const Eigen::MatrixXd h = hessian(model, data, mode);
  const Eigen::MatrixXd fd = oracle::fd_hessian(
      [&](const Eigen::VectorXd& t) { return log_joint(model, data, t); }, mode);
  const double scale = std::max(1.0, h.cwiseAbs().maxCoeff());
  CHECK((h - fd).cwiseAbs().maxCoeff() / scale <= 1e-5);
}

TEST_CASE("all three strategies produce the same hessian") {
  const auto model = gmm2();
  const auto& data = fixtures::four_points();
  const Eigen::VectorXd mode = fit_mode(model, data, vec({-2.0, 2.0}));
  const Eigen::MatrixXd hd = hessian(model, data, mode, DiffStrategy::dual());
  const Eigen::MatrixXd hc = hessian(model, data, mode, DiffStrategy::complex_step());
  const Eigen::MatrixXd hf = hessian(model, data, mode, DiffStrategy::central_diff());
  const double scale = std::max(1.0, hd.cwiseAbs().maxCoeff());
  CHECK((hd - hc).cwiseAbs().maxCoeff() / scale <= 1e-12);
  CHECK((hd - hf).cwiseAbs().maxCoeff() / scale <= 1e-5);
}

TEST_CASE("hessian columns can be computed on several threads") {
  std::mt19937_64 rng(555);
  const auto fx = fixtures::random_gmm_fixture(rng);
  const Eigen::MatrixXd h1 = hessian(fx.model, fx.data, fx.theta0, DiffStrategy::dual(), 1);
  const Eigen::MatrixXd h4 = hessian(fx.model, fx.data, fx.theta0, DiffStrategy::dual(), 4);
  CHECK((h1 - h4).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("laplace posterior is exact on the conjugate single-component fixture") {
  const double var = 1.3, prior_mean = 0.4, prior_var = 2.2;
  const GaussianMixture model(vec({1.0}), vec({var}),
                              GaussianPrior{vec({prior_mean}), vec({prior_var})});
  const std::vector<double> data{0.3, -0.7, 1.1};
  const Eigen::VectorXd mode = fit_mode(model, data, vec({0.0}));
  const auto post = laplace_posterior(model, data, mode);

  const double precision = 3.0 / var + 1.0 / prior_var;
  CHECK(std::abs(post.covariance(0, 0) - 1.0 / precision) <= 1e-10);
  CHECK(std::abs(post.log_evidence -
                 conjugate_log_evidence(data, var, prior_mean, prior_var)) <= 1e-10);
  // covariance times the negated hessian is the identity
  const Eigen::MatrixXd lambda = hessian(model, data, mode);
  CHECK(((post.covariance * (-lambda)) - Eigen::MatrixXd::Identity(1, 1))
            .cwiseAbs()
            .maxCoeff() <= 1e-8);
}

TEST_CASE("flat-prior single observation reproduces the unit evidence") {
  const GaussianMixture model(vec({1.0}), vec({1.0}), GaussianPrior::flat(1));
  const std::vector<double> data{0.0};
  const auto post = laplace_posterior(model, data, vec({0.0}));
  CHECK(std::abs(post.covariance(0, 0) - 1.0) <= 1e-12);
  CHECK(std::abs(post.log_evidence) <= 1e-12);  // integral of N(0|mu,1) d mu = 1
}

TEST_CASE("laplace posterior refuses a point that is not a mode") {
  const auto model = gmm2();
  const auto& data = fixtures::four_points();
  try {
    laplace_posterior(model, data, vec({-2.0, 2.0}));
    FAIL("expected NotAtModeError");
  } catch (const NotAtModeError& e) {
    CHECK(e.grad_max_norm > 1e-2);
  }
}

TEST_CASE("laplace posterior refuses a saddle") {
  // symmetric stationary point between two well-separated clusters
  const auto model = gmm2();
  const std::vector<double> data{-3.0, 3.0};
  const Eigen::VectorXd saddle = vec({0.0, 0.0});
  CHECK(grad_log_joint(model, data, saddle).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK_THROWS_AS(laplace_posterior(model, data, saddle), NotNegativeDefiniteError);
}

TEST_CASE("negated hessian is positive-definite at every fitted mode") {
  std::mt19937_64 rng(666);
  int checked = 0;
  for (int trial = 0; trial < 10; ++trial) {
    const auto fx = fixtures::random_gmm_fixture(rng, true);
    const Eigen::VectorXd mode = fit_mode(fx.model, fx.data, fx.theta0);
    if (grad_log_joint(fx.model, fx.data, mode).cwiseAbs().maxCoeff() > kModeGradTol)
      continue;  // EM parked on a ridge; the gate itself is tested elsewhere
    const auto post = laplace_posterior(fx.model, fx.data, mode);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(post.covariance);
    CHECK(es.eigenvalues().minCoeff() > 0.0);
    ++checked;
  }
  CHECK(checked > 0);
}

TEST_CASE("coin evidence agrees with reference quadrature within two percent") {
  const CoinMixture model(vec({1.0}), GaussianPrior{vec({0.0}), vec({1.0})});
  const std::vector<CoinRecord> data{{7, 10}};
  const Eigen::VectorXd mode = fit_mode(model, data, vec({0.0}));
  const auto post = laplace_posterior(model, data, mode);
  oracle::GridSpec grid;
  grid.center = mode;
  const double quad = oracle::quadrature_evidence(model, data, grid);
  CHECK(std::abs(post.log_evidence - quad) <= 0.02 * std::abs(quad));
}

TEST_CASE("dual and complex-step gradients agree on both shipped models") {
  std::mt19937_64 rng(777);
  for (int trial = 0; trial < 10; ++trial) {
    const auto check_at = [](const auto& model, const auto& data, const Eigen::VectorXd& t) {
      const int n = static_cast<int>(t.size());
      for (int j = 0; j < n; ++j) {
        Eigen::VectorXd unit = Eigen::VectorXd::Zero(n);
        unit[j] = 1.0;
        const auto lj_fn = [&](const auto& p) {
          using S = std::decay_t<decltype(p[0])>;
          return std::vector<S>{log_joint(model, data, p)};
        };
        const double dual_d = directional_derivative(lj_fn, t, unit, DiffStrategy::dual())[0];
        const double cplx_d =
            directional_derivative(lj_fn, t, unit, DiffStrategy::complex_step())[0];
        CHECK(std::abs(dual_d - cplx_d) <= 1e-12 * std::max(1.0, std::abs(dual_d)));
      }
      const Eigen::VectorXd gd = grad_log_joint(model, data, t);
      const Eigen::VectorXd gc = directional_derivative(
          [&](const auto& p) { return grad_log_joint(model, data, p); }, t,
          Eigen::VectorXd::Ones(n), DiffStrategy::complex_step());
      CHECK(gc.allFinite());
      CHECK(gd.allFinite());
    };
    const auto fx = fixtures::random_gmm_fixture(rng);
    check_at(fx.model, fx.data, fixtures::random_theta(rng, fx.model.param_dim()));
    const auto cfx = fixtures::random_coin_fixture(rng);
    check_at(cfx.model, cfx.data, fixtures::random_theta(rng, cfx.model.param_dim()));
  }
}

TEST_CASE("dimension mismatches are rejected") {
  const auto model = gmm2();
  const auto& data = fixtures::four_points();
  CHECK_THROWS_AS(hvp(model, data, vec({0.0, 0.0}), vec({1.0})), DimensionError);
  CHECK_THROWS_AS(grad_log_joint(model, data, vec({0.0})), DimensionError);
}
