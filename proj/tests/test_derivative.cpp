#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <random>
#include <vector>

#include "emlaplace/derivative.hpp"

using namespace emlaplace;

namespace {

// f(x) = [x0^2]
const auto square_first = [](const auto& x) {
  using S = std::decay_t<decltype(x[0])>;
  return std::vector<S>{x[0] * x[0]};
};

Eigen::VectorXd vec1(double v) {
  Eigen::VectorXd x(1);
  x[0] = v;
  return x;
}

}  // namespace

TEST_CASE("dual directional derivative of x^2 at 3 along 1 is 6") {
  const Eigen::VectorXd d =
      directional_derivative(square_first, vec1(3.0), vec1(1.0), DiffStrategy::dual());
  REQUIRE(d.size() == 1);
  CHECK(d[0] == doctest::Approx(6.0).epsilon(1e-14));
}

TEST_CASE("zero direction gives a zero derivative for every strategy") {
  const auto f = [](const auto& x) {
    using S = std::decay_t<decltype(x[0])>;
    return std::vector<S>{emlaplace::exp(x[0]) + x[1] * x[1], x[0] * x[1]};
  };
  Eigen::VectorXd x(2);
  x << 0.3, -1.2;
  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(2);
  for (const auto& strategy :
       {DiffStrategy::dual(), DiffStrategy::complex_step(), DiffStrategy::central_diff()}) {
    const Eigen::VectorXd d = directional_derivative(f, x, zero, strategy);
    CHECK(d.cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("complex step differentiates exp at 0 to near round-off") {
  const auto f = [](const auto& x) {
    using S = std::decay_t<decltype(x[0])>;
    return std::vector<S>{emlaplace::exp(x[0])};
  };
  const Eigen::VectorXd d =
      directional_derivative(f, vec1(0.0), vec1(1.0), DiffStrategy::complex_step(1e-20));
  CHECK(std::abs(d[0] - 1.0) < 1e-15);
}

TEST_CASE("dimension mismatch and non-finite outputs are rejected") {
  Eigen::VectorXd x(2), v(3);
  x.setZero();
  v.setZero();
  CHECK_THROWS_AS(directional_derivative(square_first, x, v), DimensionError);

  const auto bad = [](const auto& x) {
    using S = std::decay_t<decltype(x[0])>;
    return std::vector<S>{x[0], x[0] / 0.0};
  };
  try {
    directional_derivative(bad, vec1(1.0), vec1(1.0), DiffStrategy::dual());
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(e.index == 1);
  }
}

TEST_CASE("dual derivatives of random quadratics are exact") {
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 1 + static_cast<int>(rng() % 4);
    Eigen::MatrixXd a(n, n);
    Eigen::VectorXd b(n), x(n), v(n);
    for (int i = 0; i < n; ++i) {
      b[i] = u(rng);
      x[i] = u(rng);
      v[i] = u(rng);
      for (int j = 0; j < n; ++j) a(i, j) = u(rng);
    }
    a = (0.5 * (a + a.transpose())).eval();

    const auto quadratic = [&](const auto& t) {
      using S = std::decay_t<decltype(t[0])>;
      S acc(0.0);
      for (int i = 0; i < n; ++i) {
        acc += b[i] * t[static_cast<std::size_t>(i)];
        for (int j = 0; j < n; ++j)
          acc += 0.5 * a(i, j) * t[static_cast<std::size_t>(i)] * t[static_cast<std::size_t>(j)];
      }
      return std::vector<S>{acc};
    };

    const Eigen::VectorXd d = directional_derivative(quadratic, x, v, DiffStrategy::dual());
    const double expected = (a * x + b).dot(v);
    const double rel = std::abs(d[0] - expected) / std::max(1.0, std::abs(expected));
    CHECK(rel <= 1e-12);
  }
}

TEST_CASE("central differences shrink like the square of the step") {
  const auto f = [](const auto& x) {
    using S = std::decay_t<decltype(x[0])>;
    return std::vector<S>{emlaplace::exp(x[0]) * x[1] + emlaplace::log(x[1])};
  };
  Eigen::VectorXd x(2), v(2);
  x << 0.4, 1.7;
  v << 1.0, -0.5;
  const double exact =
      directional_derivative(f, x, v, DiffStrategy::dual())[0];

  double prev_err = -1.0;
  for (const double h : {1e-3, 1e-4, 1e-5, 1e-6}) {
    const double fd = directional_derivative(f, x, v, DiffStrategy::central_diff(h))[0];
    const double err = std::abs(fd - exact);
    // O(h^2) truncation plus a round-off floor
    CHECK(err <= 10.0 * std::abs(exact) * h * h + 1e-9);
    if (prev_err >= 0.0 && h >= 1e-5) CHECK(err <= prev_err + 1e-12);
    prev_err = err;
  }
}

TEST_CASE("the three strategies agree on a smooth function") {
  const auto f = [](const auto& x) {
    using S = std::decay_t<decltype(x[0])>;
    return std::vector<S>{emlaplace::sqrt(x[0] * x[0] + 2.0), emlaplace::exp(-x[0]) * x[1]};
  };
  Eigen::VectorXd x(2), v(2);
  x << 1.3, -0.8;
  v << -0.2, 0.9;
  const Eigen::VectorXd dd = directional_derivative(f, x, v, DiffStrategy::dual());
  const Eigen::VectorXd dc = directional_derivative(f, x, v, DiffStrategy::complex_step());
  const Eigen::VectorXd df = directional_derivative(f, x, v, DiffStrategy::central_diff());
  CHECK((dd - dc).cwiseAbs().maxCoeff() <= 1e-12 * dd.cwiseAbs().maxCoeff());
  CHECK((dd - df).cwiseAbs().maxCoeff() <= 1e-7 * std::max(1.0, dd.cwiseAbs().maxCoeff()));
}
