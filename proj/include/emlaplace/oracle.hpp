#pragma once

// Brute-force reference implementations used by tests and the `check`
// subcommand. These deliberately re-transcribe the model formulas instead
// of calling the production complete-data code, so agreement between the
// two paths is evidence rather than tautology.

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "emlaplace/em.hpp"
#include "emlaplace/errors.hpp"
#include "emlaplace/models.hpp"

namespace emlaplace::oracle {

using ScalarFn = std::function<double(const Eigen::VectorXd&)>;

// Central-difference gradient, step per coordinate scaled by the point.
inline Eigen::VectorXd fd_gradient(const ScalarFn& f, const Eigen::VectorXd& x,
                                   double step = 0.0) {
  const Eigen::Index n = x.size();
  Eigen::VectorXd g(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double h = step > 0.0 ? step
                                : std::cbrt(std::numeric_limits<double>::epsilon()) *
                                      std::max(1.0, std::abs(x[i]));
    Eigen::VectorXd xp = x, xm = x;
    xp[i] += h;
    xm[i] -= h;
    const double fp = f(xp), fm = f(xm);
    if (!std::isfinite(fp) || !std::isfinite(fm))
      throw NumericError("fd_gradient: non-finite stencil value at coordinate " +
                             std::to_string(i),
                         static_cast<int>(i));
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

// Dense central-difference Hessian from second-order stencils on f itself.
inline Eigen::MatrixXd fd_hessian(const ScalarFn& f, const Eigen::VectorXd& x,
                                  double step = 0.0) {
  const Eigen::Index n = x.size();
  Eigen::VectorXd h(n);
  for (Eigen::Index i = 0; i < n; ++i)
    h[i] = step > 0.0 ? step
                      : 2.0 * std::pow(std::numeric_limits<double>::epsilon(), 0.25) *
                            std::max(1.0, std::abs(x[i]));

  const auto eval = [&](const Eigen::VectorXd& p) {
    const double v = f(p);
    if (!std::isfinite(v)) throw NumericError("fd_hessian: non-finite stencil value");
    return v;
  };

  Eigen::MatrixXd hess(n, n);
  const double f0 = eval(x);
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::VectorXd xp = x, xm = x;
    xp[i] += h[i];
    xm[i] -= h[i];
    hess(i, i) = (eval(xp) - 2.0 * f0 + eval(xm)) / (h[i] * h[i]);
    for (Eigen::Index j = i + 1; j < n; ++j) {
      Eigen::VectorXd xpp = x, xpm = x, xmp = x, xmm = x;
      xpp[i] += h[i]; xpp[j] += h[j];
      xpm[i] += h[i]; xpm[j] -= h[j];
      xmp[i] -= h[i]; xmp[j] += h[j];
      xmm[i] -= h[i]; xmm[j] -= h[j];
      const double v = (eval(xpp) - eval(xpm) - eval(xmp) + eval(xmm)) / (4.0 * h[i] * h[j]);
      hess(i, j) = v;
      hess(j, i) = v;
    }
  }
  return hess;
}

namespace detail {

inline constexpr long double kPiL = 3.141592653589793238462643383279503L;

// Direct density transcriptions in extended precision, no log-sum-exp.

inline long double record_density(const GaussianMixture& m, double x,
                                  const Eigen::VectorXd& theta) {
  long double s = 0.0L;
  for (int k = 0; k < m.components(); ++k) {
    const long double var = m.variances[k];
    const long double d = static_cast<long double>(x) - static_cast<long double>(theta[k]);
    s += static_cast<long double>(m.weights[k]) / std::sqrt(2.0L * kPiL * var) *
         std::exp(-d * d / (2.0L * var));
  }
  return s;
}

inline long double record_density(const CoinMixture& m, const CoinRecord& r,
                                  const Eigen::VectorXd& theta) {
  long double s = 0.0L;
  for (int k = 0; k < m.components(); ++k) {
    const long double p = 1.0L / (1.0L + std::exp(-static_cast<long double>(theta[k])));
    s += static_cast<long double>(m.weights[k]) *
         std::pow(p, static_cast<long double>(r.successes)) *
         std::pow(1.0L - p, static_cast<long double>(r.trials - r.successes));
  }
  return s;
}

inline long double prior_log_density(const GaussianPrior& prior, const Eigen::VectorXd& theta) {
  long double acc = 0.0L;
  for (int i = 0; i < prior.dim(); ++i) {
    if (prior.is_flat(i)) continue;
    const long double v = prior.var[i];
    const long double d = static_cast<long double>(theta[i]) -
                          static_cast<long double>(prior.mean[i]);
    acc += -0.5L * std::log(2.0L * kPiL * v) - d * d / (2.0L * v);
  }
  return acc;
}

// Hand-transcribed first and second derivatives of the complete-data log
// joint in the active slot (all other slots are zero).

inline double complete_grad_slot(const GaussianMixture& m, double x, int k, double theta_k) {
  return (x - theta_k) / m.variances[k];
}
inline double complete_grad_slot(const CoinMixture&, const CoinRecord& r, int, double theta_k) {
  const double p = 1.0 / (1.0 + std::exp(-theta_k));
  return static_cast<double>(r.successes) - static_cast<double>(r.trials) * p;
}

inline double complete_second_slot(const GaussianMixture& m, double, int k, double) {
  return -1.0 / m.variances[k];
}
inline double complete_second_slot(const CoinMixture&, const CoinRecord& r, int, double theta_k) {
  const double p = 1.0 / (1.0 + std::exp(-theta_k));
  return -static_cast<double>(r.trials) * p * (1.0 - p);
}

}  // namespace detail

// log P(data, theta) by direct per-record summation over the hidden
// component, extended-precision accumulation, no log-sum-exp.
template <class Model>
double marginal_by_enumeration(const Model& model, const typename Model::Data& data,
                               const Eigen::VectorXd& theta) {
  if (theta.size() != model.param_dim())
    throw DimensionError("marginal_by_enumeration: theta dimension mismatch");
  long double total = 0.0L;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const long double s = detail::record_density(model, data[i], theta);
    if (!(s > 0.0L) || std::isinf(s))
      throw NumericError("marginal_by_enumeration: record " + std::to_string(i) +
                             " density overflowed or vanished",
                         static_cast<int>(i));
    total += std::log(s);
  }
  total += detail::prior_log_density(model.prior, theta);
  return static_cast<double>(total);
}

template <class Model>
struct HessianParts {
  Eigen::MatrixXd aux_hessian;  // posterior-weighted complete-data curvature + prior
  Eigen::MatrixXd extra_term;   // posterior-derivative cross term
};

// Split of the full Hessian into the auxiliary's Hessian plus the term
// contributed by the theta-dependence of the hidden posterior. The
// curvature part is analytic; the posterior derivatives are central finite
// differences of e_step.
template <class Model>
HessianParts<Model> hessian_decomposition(const Model& model, const typename Model::Data& data,
                                          const Eigen::VectorXd& theta) {
  const int n = model.param_dim();
  const int K = model.components();
  const int N = static_cast<int>(data.size());

  HessianParts<Model> parts;
  parts.aux_hessian = Eigen::MatrixXd::Zero(n, n);
  parts.extra_term = Eigen::MatrixXd::Zero(n, n);

  const Eigen::MatrixXd resp = e_step(model, data, theta).value_matrix();
  for (int i = 0; i < N; ++i)
    for (int k = 0; k < K; ++k)
      parts.aux_hessian(k, k) +=
          resp(i, k) *
          detail::complete_second_slot(model, data[static_cast<std::size_t>(i)], k, theta[k]);
  for (int k = 0; k < n; ++k)
    if (!model.prior.is_flat(k)) parts.aux_hessian(k, k) -= 1.0 / model.prior.var[k];

  for (int b = 0; b < n; ++b) {
    const double h = std::cbrt(std::numeric_limits<double>::epsilon()) *
                     std::max(1.0, std::abs(theta[b]));
    Eigen::VectorXd tp = theta, tm = theta;
    tp[b] += h;
    tm[b] -= h;
    const Eigen::MatrixXd dresp =
        (e_step(model, data, tp).value_matrix() - e_step(model, data, tm).value_matrix()) /
        (2.0 * h);
    for (int i = 0; i < N; ++i)
      for (int k = 0; k < K; ++k)
        parts.extra_term(k, b) +=
            dresp(i, k) *
            detail::complete_grad_slot(model, data[static_cast<std::size_t>(i)], k, theta[k]);
  }
  return parts;
}

struct GridSpec {
  int points_per_axis = 0;        // 0 = pick by dimension (100001 in 1-D, 1001 in 2-D)
  double half_width_sds = 10.0;   // half width in prior standard deviations
  std::optional<Eigen::VectorXd> center;  // defaults to the prior mean
};

// Trapezoid log-evidence over an axis-aligned grid around the mode. The
// half-resolution estimate guards against a grid too coarse to trust.
template <class Model>
double quadrature_evidence(const Model& model, const typename Model::Data& data,
                           const GridSpec& spec = {}) {
  const int n = model.param_dim();
  if (n > 2) throw QuadratureError("quadrature_evidence: supports at most 2 parameters");
  for (int i = 0; i < n; ++i)
    if (model.prior.is_flat(i))
      throw QuadratureError("quadrature_evidence: needs a proper prior on every coordinate");

  int pts = spec.points_per_axis > 0 ? spec.points_per_axis : (n == 1 ? 100001 : 1001);
  if (pts < 3) throw QuadratureError("quadrature_evidence: grid too coarse (need >= 3 points)");
  if (pts % 2 == 0) ++pts;  // odd count so the half-resolution grid shares endpoints

  Eigen::VectorXd center =
      spec.center ? *spec.center : Eigen::VectorXd(model.prior.mean);
  if (center.size() != n) throw DimensionError("quadrature_evidence: center dimension mismatch");

  std::vector<Eigen::VectorXd> axes(static_cast<std::size_t>(n));
  std::vector<double> h(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const double half = spec.half_width_sds * std::sqrt(model.prior.var[i]);
    axes[static_cast<std::size_t>(i)] = Eigen::VectorXd::LinSpaced(pts, center[i] - half, center[i] + half);
    h[static_cast<std::size_t>(i)] =
        (axes[static_cast<std::size_t>(i)][pts - 1] - axes[static_cast<std::size_t>(i)][0]) /
        static_cast<double>(pts - 1);
  }

  // Collect log-joint values once; both resolutions reuse them.
  Eigen::VectorXd theta(n);
  std::vector<double> lj;
  if (n == 1) {
    lj.resize(static_cast<std::size_t>(pts));
    for (int a = 0; a < pts; ++a) {
      theta[0] = axes[0][a];
      lj[static_cast<std::size_t>(a)] = log_joint(model, data, theta);
    }
  } else {
    lj.resize(static_cast<std::size_t>(pts) * static_cast<std::size_t>(pts));
    for (int a = 0; a < pts; ++a)
      for (int b = 0; b < pts; ++b) {
        theta[0] = axes[0][a];
        theta[1] = axes[1][b];
        lj[static_cast<std::size_t>(a) * pts + b] = log_joint(model, data, theta);
      }
  }

  const auto integrate = [&](int stride) {
    const int m = (pts - 1) / stride + 1;
    double peak = -std::numeric_limits<double>::infinity();
    if (n == 1) {
      for (int a = 0; a < pts; a += stride) peak = std::max(peak, lj[static_cast<std::size_t>(a)]);
      long double s = 0.0L;
      for (int a = 0, idx = 0; a < pts; a += stride, ++idx) {
        const double w = (idx == 0 || idx == m - 1) ? 0.5 : 1.0;
        s += w * std::exp(static_cast<long double>(lj[static_cast<std::size_t>(a)] - peak));
      }
      return peak + static_cast<double>(std::log(s)) + std::log(h[0] * stride);
    }
    for (int a = 0; a < pts; a += stride)
      for (int b = 0; b < pts; b += stride)
        peak = std::max(peak, lj[static_cast<std::size_t>(a) * pts + b]);
    long double s = 0.0L;
    for (int a = 0, ia = 0; a < pts; a += stride, ++ia)
      for (int b = 0, ib = 0; b < pts; b += stride, ++ib) {
        const double wa = (ia == 0 || ia == m - 1) ? 0.5 : 1.0;
        const double wb = (ib == 0 || ib == m - 1) ? 0.5 : 1.0;
        s += wa * wb * std::exp(static_cast<long double>(lj[static_cast<std::size_t>(a) * pts + b] - peak));
      }
    return peak + static_cast<double>(std::log(s)) + std::log(h[0] * stride) + std::log(h[1] * stride);
  };

  const double full = integrate(1);
  const double half = integrate(2);
  if (!(std::abs(full - half) <= 1e-4))
    throw QuadratureError("quadrature_evidence: grid too coarse, refinement changed the "
                          "log integral by " +
                          format_value(std::abs(full - half)));
  return full;
}

}  // namespace emlaplace::oracle
