// Command-line front end: fit latent-variable mixture models by EM, report
// the Laplace posterior approximation, and run oracle cross-checks.
//
// Exit codes: 0 success, 1 bad input, 2 EM hit max-iters, 3 mode/Hessian
// failure, 4 failed check.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <Eigen/Dense>

#include "emlaplace/dataset_io.hpp"
#include "emlaplace/em.hpp"
#include "emlaplace/laplace.hpp"
#include "emlaplace/models.hpp"
#include "emlaplace/oracle.hpp"
#include "emlaplace/report.hpp"

namespace {

using emlaplace::CoinMixture;
using emlaplace::CoinRecord;
using emlaplace::DiffStrategy;
using emlaplace::GaussianMixture;
using emlaplace::GaussianPrior;
using emlaplace::InputError;
using emlaplace::RunReport;

constexpr int kExitOk = 0;
constexpr int kExitInput = 1;
constexpr int kExitNoConverge = 2;
constexpr int kExitModeFailure = 3;
constexpr int kExitCheckFailure = 4;

struct Options {
  std::string family;                 // "gmm" or "coin"
  int components = 2;
  std::vector<double> weights;        // empty = uniform
  std::vector<double> variances;      // empty = all 1 (gmm only)
  std::vector<double> prior_mean;     // empty = zeros
  std::vector<double> prior_var;      // empty = flat
  std::vector<double> init_means;     // gmm start; empty = data quantiles
  std::vector<double> init_logodds;   // coin start; empty = evenly spaced
  std::string data_path;
  std::string out_path;
  int max_iters = 1000;
  double tol_loglik = 1e-10;
  double tol_param = 1e-8;
  bool no_timings = false;
  int threads = 0;                    // 0 = all cores
  std::string strategy = "dual";
  double step = 0.0;
  bool quadrature = false;
  int quad_points = 0;
  double perturb_grad = 0.0;
};

double parse_value(const std::string& tok, const std::string& flag, bool allow_inf) {
  try {
    std::size_t used = 0;
    const double v = std::stod(tok, &used);
    if (used != tok.size()) throw std::invalid_argument(tok);
    if (!std::isfinite(v) && !(allow_inf && std::isinf(v) && v > 0))
      throw std::invalid_argument(tok);
    return v;
  } catch (const std::exception&) {
    throw InputError(flag + ": cannot parse '" + tok + "'");
  }
}

std::vector<double> parse_csv(const std::string& csv, const std::string& flag,
                              bool allow_inf = false) {
  std::vector<double> out;
  std::size_t start = 0;
  while (start <= csv.size()) {
    const auto comma = csv.find(',', start);
    const std::string tok =
        csv.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
    out.push_back(parse_value(tok, flag, allow_inf));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

Eigen::VectorXd to_eigen(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

std::vector<double> expect_length(std::vector<double> v, int k, double fill,
                                  const std::string& flag) {
  if (v.empty()) return std::vector<double>(static_cast<std::size_t>(k), fill);
  if (static_cast<int>(v.size()) != k)
    throw InputError(flag + ": expected " + std::to_string(k) + " values, got " +
                     std::to_string(v.size()));
  return v;
}

GaussianPrior build_prior(const Options& o) {
  const double inf = std::numeric_limits<double>::infinity();
  GaussianPrior prior{to_eigen(expect_length(o.prior_mean, o.components, 0.0, "--prior-mean")),
                      to_eigen(expect_length(o.prior_var, o.components, inf, "--prior-var"))};
  return prior;
}

Eigen::VectorXd quantile_means(const std::vector<double>& data, int k) {
  std::vector<double> sorted = data;
  std::sort(sorted.begin(), sorted.end());
  Eigen::VectorXd init(k);
  const double last = static_cast<double>(sorted.size()) - 1.0;
  for (int j = 0; j < k; ++j) {
    const double pos = (j + 0.5) / static_cast<double>(k) * last;
    const auto lo = static_cast<std::size_t>(pos);
    const double frac = pos - static_cast<double>(lo);
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    init[j] = sorted[lo] * (1.0 - frac) + sorted[hi] * frac;
  }
  return init;
}

Eigen::VectorXd spaced_logodds(int k) {
  Eigen::VectorXd init(k);
  if (k == 1) {
    init[0] = 0.0;
    return init;
  }
  for (int j = 0; j < k; ++j)
    init[j] = -1.0 + 2.0 * static_cast<double>(j) / static_cast<double>(k - 1);
  return init;
}

DiffStrategy parse_strategy(const std::string& name, double step) {
  if (name == "dual") return DiffStrategy::dual();
  if (name == "complex")
    return step > 0.0 ? DiffStrategy::complex_step(step) : DiffStrategy::complex_step();
  if (name == "fd") return DiffStrategy::central_diff(step);
  throw InputError("--strategy: expected dual|complex|fd, got '" + name + "'");
}

struct Timer {
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
  double ms() const {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start)
        .count();
  }
};

template <class Model>
emlaplace::ModelDescriptor describe(const Model& model) {
  emlaplace::ModelDescriptor d;
  d.family = std::string(Model::kFamily);
  d.components = model.components();
  d.weights.assign(model.weights.data(), model.weights.data() + model.weights.size());
  if constexpr (std::is_same_v<Model, GaussianMixture>)
    d.variances.assign(model.variances.data(),
                       model.variances.data() + model.variances.size());
  d.prior_mean.assign(model.prior.mean.data(),
                      model.prior.mean.data() + model.prior.mean.size());
  d.prior_var.assign(model.prior.var.data(), model.prior.var.data() + model.prior.var.size());
  return d;
}

void emit(const RunReport& report, const Options& o) {
  const std::string text = emlaplace::serialize_report(report);
  if (o.out_path.empty()) {
    std::fwrite(text.data(), 1, text.size(), stdout);
  } else {
    std::ofstream out(o.out_path, std::ios::binary);
    if (!out) throw InputError(o.out_path + ": cannot open for writing");
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
  }
}

// Run the model-specific part of a subcommand on the parsed dataset.
template <class F>
int with_problem(const Options& o, F&& run) {
  const std::string bytes = emlaplace::read_file(o.data_path);
  emlaplace::DataDigest digest;
  digest.checksum = "fnv1a64:" + emlaplace::fnv1a64_hex(bytes);

  if (o.family == "gmm") {
    if (!o.init_logodds.empty()) throw InputError("--init-logodds: not valid for --model gmm");
    const auto data = emlaplace::parse_reals(bytes, o.data_path);
    digest.records = static_cast<long long>(data.size());
    GaussianMixture model(
        to_eigen(expect_length(o.weights, o.components, 1.0 / o.components, "--weights")),
        to_eigen(expect_length(o.variances, o.components, 1.0, "--variances")),
        build_prior(o));
    const Eigen::VectorXd theta0 = o.init_means.empty()
                                       ? quantile_means(data, o.components)
                                       : to_eigen(expect_length(o.init_means, o.components,
                                                                0.0, "--init-means"));
    return run(model, data, theta0, digest);
  }
  if (o.family == "coin") {
    if (!o.init_means.empty()) throw InputError("--init-means: not valid for --model coin");
    if (!o.variances.empty()) throw InputError("--variances: not valid for --model coin");
    const auto data = emlaplace::parse_coin_records(bytes, o.data_path);
    digest.records = static_cast<long long>(data.size());
    CoinMixture model(
        to_eigen(expect_length(o.weights, o.components, 1.0 / o.components, "--weights")),
        build_prior(o));
    const Eigen::VectorXd theta0 = o.init_logodds.empty()
                                       ? spaced_logodds(o.components)
                                       : to_eigen(expect_length(o.init_logodds, o.components,
                                                                0.0, "--init-logodds"));
    return run(model, data, theta0, digest);
  }
  throw InputError("--model: expected gmm|coin, got '" + o.family + "'");
}

struct FitOutcome {
  emlaplace::EmTrace trace;
  Eigen::VectorXd theta;  // after any mode polish
  int polish_iters = 0;
  double grad_max_norm = 0.0;
};

// EM fit, optionally followed by extra EM steps until the gradient is small
// enough for the Laplace gate. The stopping rule can park short of that, so
// subcommands that need a mode keep stepping while progress lasts.
template <class Model>
FitOutcome fit_model(const Model& model, const typename Model::Data& data,
                     const Eigen::VectorXd& theta0, const emlaplace::EmConfig& config,
                     bool polish_to_mode) {
  FitOutcome out;
  out.trace = emlaplace::em_fit(model, data, theta0, config);
  out.theta = out.trace.final_theta();
  out.grad_max_norm =
      emlaplace::grad_log_joint(model, data, out.theta).cwiseAbs().maxCoeff();
  if (!polish_to_mode) return out;

  while (out.grad_max_norm > 0.1 * emlaplace::kModeGradTol &&
         out.polish_iters < config.max_iters) {
    const Eigen::VectorXd next = emlaplace::em_step(model, data, out.theta);
    const double step = (next - out.theta).cwiseAbs().maxCoeff();
    out.theta = next;
    ++out.polish_iters;
    out.grad_max_norm =
        emlaplace::grad_log_joint(model, data, out.theta).cwiseAbs().maxCoeff();
    if (step == 0.0) break;  // exact fixed point
  }
  return out;
}

template <class Model>
RunReport base_report(const Model& model, const typename Model::Data& data,
                      const emlaplace::DataDigest& digest, const FitOutcome& fit,
                      const std::string& strategy) {
  RunReport r;
  r.model = describe(model);
  r.data = digest;
  r.strategy = strategy;
  r.theta_hat.assign(fit.theta.data(), fit.theta.data() + fit.theta.size());
  r.em.iterations = fit.trace.iterations() + fit.polish_iters;
  r.em.final_log_joint = emlaplace::log_joint(model, data, fit.theta);
  r.em.converged = fit.trace.converged;
  r.em.reason = emlaplace::to_string(fit.trace.reason);
  r.grad_max_norm = fit.grad_max_norm;
  return r;
}

emlaplace::EmConfig config_from(const Options& o) {
  emlaplace::EmConfig c;
  c.max_iters = o.max_iters;
  c.tol_loglik = o.tol_loglik;
  c.tol_param = o.tol_param;
  c.validate();
  return c;
}

int cmd_fit(const Options& o) {
  const Timer total;
  return with_problem(o, [&](const auto& model, const auto& data,
                             const Eigen::VectorXd& theta0,
                             const emlaplace::DataDigest& digest) {
    const double parse_ms = total.ms();
    const Timer fit_timer;
    const FitOutcome fit = fit_model(model, data, theta0, config_from(o), false);
    const double fit_ms = fit_timer.ms();

    RunReport r = base_report(model, data, digest, fit, "none");
    if (!o.no_timings)
      r.timings = emlaplace::PhaseTimings{parse_ms, fit_ms, 0.0, total.ms()};
    emit(r, o);
    return fit.trace.reason == emlaplace::StopReason::MaxIters ? kExitNoConverge : kExitOk;
  });
}

int cmd_laplace(const Options& o) {
  const Timer total;
  const DiffStrategy strategy = parse_strategy(o.strategy, o.step);
  return with_problem(o, [&](const auto& model, const auto& data,
                             const Eigen::VectorXd& theta0,
                             const emlaplace::DataDigest& digest) {
    const double parse_ms = total.ms();
    const Timer fit_timer;
    const FitOutcome fit = fit_model(model, data, theta0, config_from(o), true);
    const double fit_ms = fit_timer.ms();

    const Timer laplace_timer;
    const auto posterior =
        emlaplace::laplace_posterior(model, data, fit.theta, strategy, o.threads);
    const double laplace_ms = laplace_timer.ms();

    RunReport r = base_report(model, data, digest, fit, o.strategy);
    r.has_laplace = true;
    const auto n = posterior.covariance.rows();
    r.hessian.reserve(static_cast<std::size_t>(n * n));
    r.covariance.reserve(static_cast<std::size_t>(n * n));
    const Eigen::MatrixXd lambda =
        emlaplace::hessian(model, data, fit.theta, strategy, o.threads);
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < n; ++j) {
        r.hessian.push_back(lambda(i, j));
        r.covariance.push_back(posterior.covariance(i, j));
      }
    r.log_det_neg_lambda = posterior.log_det_neg_lambda;
    r.log_evidence = posterior.log_evidence;
    if (!o.no_timings)
      r.timings = emlaplace::PhaseTimings{parse_ms, fit_ms, laplace_ms, total.ms()};
    emit(r, o);
    return kExitOk;
  });
}

struct CheckLine {
  std::string name;
  double residual;
  double tol;
  bool pass;
};

int cmd_check(const Options& o) {
  const DiffStrategy strategy = parse_strategy(o.strategy, o.step);
  return with_problem(o, [&](const auto& model, const auto& data,
                             const Eigen::VectorXd& theta0,
                             const emlaplace::DataDigest&) {
    const FitOutcome fit = fit_model(model, data, theta0, config_from(o), true);
    const Eigen::VectorXd& th = fit.theta;

    const auto log_joint_fn = [&](const Eigen::VectorXd& t) {
      return emlaplace::log_joint(model, data, t);
    };

    std::vector<CheckLine> lines;
    const auto add = [&](std::string name, double residual, double tol) {
      lines.push_back({std::move(name), residual, tol, residual <= tol});
    };

    // Gradient through the auxiliary vs finite differences of the marginal.
    {
      Eigen::VectorXd g = emlaplace::grad_log_joint(model, data, th);
      if (o.perturb_grad != 0.0) g[0] += o.perturb_grad;  // fault-injection hook
      const Eigen::VectorXd gfd = emlaplace::oracle::fd_gradient(log_joint_fn, th);
      const double scale =
          std::max({1.0, g.cwiseAbs().maxCoeff(), gfd.cwiseAbs().maxCoeff()});
      add("gradient-identity", (g - gfd).cwiseAbs().maxCoeff() / scale, 1e-6);
    }

    // Derivatives that must vanish where the two arguments coincide.
    add("divergence-grad-theta",
        emlaplace::oracle::fd_gradient(
            [&](const Eigen::VectorXd& t) { return emlaplace::divergence(model, data, th, t); },
            th)
            .cwiseAbs()
            .maxCoeff(),
        1e-6);
    add("auxiliary-grad-theta-prime",
        emlaplace::oracle::fd_gradient(
            [&](const Eigen::VectorXd& t) { return emlaplace::auxiliary(model, data, t, th); },
            th)
            .cwiseAbs()
            .maxCoeff(),
        1e-6);
    add("divergence-grad-theta-prime",
        emlaplace::oracle::fd_gradient(
            [&](const Eigen::VectorXd& t) { return emlaplace::divergence(model, data, t, th); },
            th)
            .cwiseAbs()
            .maxCoeff(),
        1e-6);

    // Auxiliary curvature plus posterior-derivative term reassembles the
    // production Hessian. The posterior term's own size is reported too; it
    // vanishes exactly when the hidden posterior does not depend on theta.
    double posterior_term_norm = 0.0;
    {
      const auto parts = emlaplace::oracle::hessian_decomposition(model, data, th);
      const Eigen::MatrixXd h = emlaplace::hessian(model, data, th, strategy, o.threads);
      const double scale = std::max(1.0, h.cwiseAbs().maxCoeff());
      add("hessian-decomposition",
          (parts.aux_hessian + parts.extra_term - h).cwiseAbs().maxCoeff() / scale, 1e-5);
      posterior_term_norm = parts.extra_term.cwiseAbs().maxCoeff();
    }

    if (o.quadrature) {
      const auto posterior =
          emlaplace::laplace_posterior(model, data, th, strategy, o.threads);
      emlaplace::oracle::GridSpec grid;
      grid.points_per_axis = o.quad_points;
      grid.center = th;
      const double quad = emlaplace::oracle::quadrature_evidence(model, data, grid);
      add("quadrature-evidence",
          std::abs(posterior.log_evidence - quad) / std::max(1e-12, std::abs(quad)), 0.02);
    }

    bool all_pass = true;
    for (const auto& line : lines) {
      all_pass = all_pass && line.pass;
      std::printf("%-28s residual=%.6e tol=%.0e %s\n", line.name.c_str(), line.residual,
                  line.tol, line.pass ? "PASS" : "FAIL");
    }
    std::printf("%-28s max-norm=%.6e (informational)\n", "posterior-derivative-term",
                posterior_term_norm);
    return all_pass ? kExitOk : kExitCheckFailure;
  });
}

void add_common_options(CLI::App* cmd, Options& o) {
  cmd->add_option("--model", o.family, "Model family: gmm|coin")->required();
  cmd->add_option("--components", o.components, "Number of mixture components")
      ->check(CLI::PositiveNumber);
  std::function<void(const std::string&)> noop;
  cmd->add_option_function<std::string>(
      "--weights", [&o](const std::string& s) { o.weights = parse_csv(s, "--weights"); },
      "Component weights, comma-separated (default uniform)");
  cmd->add_option_function<std::string>(
      "--variances", [&o](const std::string& s) { o.variances = parse_csv(s, "--variances"); },
      "Component variances, comma-separated (gmm only, default 1)");
  cmd->add_option_function<std::string>(
      "--prior-mean",
      [&o](const std::string& s) { o.prior_mean = parse_csv(s, "--prior-mean"); },
      "Prior means per parameter (default 0)");
  cmd->add_option_function<std::string>(
      "--prior-var",
      [&o](const std::string& s) { o.prior_var = parse_csv(s, "--prior-var", true); },
      "Prior variances per parameter; inf = flat (default)");
  cmd->add_option_function<std::string>(
      "--init-means",
      [&o](const std::string& s) { o.init_means = parse_csv(s, "--init-means"); },
      "Starting means (gmm; default data quantiles)");
  cmd->add_option_function<std::string>(
      "--init-logodds",
      [&o](const std::string& s) { o.init_logodds = parse_csv(s, "--init-logodds"); },
      "Starting log-odds (coin; default evenly spaced)");
  cmd->add_option("--data", o.data_path, "Input data file")->required();
  cmd->add_option("--out", o.out_path, "Write the JSON report here instead of stdout");
  cmd->add_option("--max-iters", o.max_iters, "EM iteration cap")->check(CLI::NonNegativeNumber);
  cmd->add_option("--tol-loglik", o.tol_loglik, "Stop when the log-joint gain drops below this");
  cmd->add_option("--tol-param", o.tol_param, "Stop when the parameter step drops below this");
  cmd->add_flag("--no-timings", o.no_timings, "Omit wall-clock timings from the report");
  cmd->add_option("--threads", o.threads, "Hessian column threads (0 = all cores)");
}

void add_strategy_options(CLI::App* cmd, Options& o) {
  cmd->add_option("--strategy", o.strategy, "Derivative strategy: dual|complex|fd");
  cmd->add_option("--step", o.step, "Step size override for complex/fd (0 = default)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"EM mixture fitting with a Laplace posterior approximation"};
  app.require_subcommand(1);

  Options fit_opts, laplace_opts, check_opts;
  CLI::App* fit = app.add_subcommand("fit", "Fit by EM and report the mode");
  add_common_options(fit, fit_opts);
  CLI::App* laplace =
      app.add_subcommand("laplace", "Fit, then report the Laplace posterior and evidence");
  add_common_options(laplace, laplace_opts);
  add_strategy_options(laplace, laplace_opts);
  CLI::App* check = app.add_subcommand("check", "Fit, then run oracle cross-checks");
  add_common_options(check, check_opts);
  add_strategy_options(check, check_opts);
  check->add_flag("--quadrature", check_opts.quadrature,
                  "Also compare the evidence against reference quadrature (n <= 2)");
  check->add_option("--quad-points", check_opts.quad_points,
                    "Quadrature grid points per axis (0 = default)");
  check->add_option("--perturb-grad", check_opts.perturb_grad,
                    "Fault-injection: add this to the first gradient component in checks")
      ->group("");  // hidden test hook

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    app.exit(e);
    return kExitInput;
  }

  try {
    if (fit->parsed()) return cmd_fit(fit_opts);
    if (laplace->parsed()) return cmd_laplace(laplace_opts);
    return cmd_check(check_opts);
  } catch (const InputError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitInput;
  } catch (const emlaplace::DimensionError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitInput;
  } catch (const emlaplace::QuadratureError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitCheckFailure;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    if (check->parsed()) return kExitCheckFailure;
    return kExitModeFailure;
  }
}
