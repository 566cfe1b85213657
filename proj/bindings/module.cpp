#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "emlaplace/em.hpp"
#include "emlaplace/laplace.hpp"
#include "emlaplace/models.hpp"
#include "emlaplace/oracle.hpp"

namespace py = pybind11;
using namespace emlaplace;

namespace {

GaussianPrior make_prior(int n, const std::optional<Eigen::VectorXd>& mean,
                         const std::optional<Eigen::VectorXd>& var) {
  GaussianPrior prior = GaussianPrior::flat(n);
  if (mean) prior.mean = *mean;
  if (var) prior.var = *var;
  prior.validate();
  return prior;
}

std::vector<CoinRecord> to_records(const std::vector<std::pair<long long, long long>>& pairs) {
  std::vector<CoinRecord> recs;
  recs.reserve(pairs.size());
  for (const auto& [s, t] : pairs) {
    CoinRecord r{s, t};
    CoinMixture::validate_record(r);
    recs.push_back(r);
  }
  return recs;
}

DiffStrategy strategy_from(const std::string& name, double step) {
  if (name == "dual") return DiffStrategy::dual();
  if (name == "complex")
    return step > 0.0 ? DiffStrategy::complex_step(step) : DiffStrategy::complex_step();
  if (name == "fd") return DiffStrategy::central_diff(step);
  throw py::value_error("strategy must be one of 'dual', 'complex', 'fd'");
}

// The same operation surface is bound once per model family; `to_data`
// adapts the Python-side dataset (reals, or (successes, trials) pairs).
template <class Model, class ToData>
void bind_ops(py::module_& m, ToData to_data) {
  m.def("log_joint",
        [to_data](const Model& model, const py::object& data, const Eigen::VectorXd& theta) {
          return log_joint(model, to_data(data), theta);
        },
        py::arg("model"), py::arg("data"), py::arg("theta"));
  m.def("auxiliary",
        [to_data](const Model& model, const py::object& data,
                  const Eigen::VectorXd& theta_prime, const Eigen::VectorXd& theta) {
          return auxiliary(model, to_data(data), theta_prime, theta);
        },
        py::arg("model"), py::arg("data"), py::arg("theta_prime"), py::arg("theta"));
  m.def("divergence",
        [to_data](const Model& model, const py::object& data,
                  const Eigen::VectorXd& theta_prime, const Eigen::VectorXd& theta) {
          return divergence(model, to_data(data), theta_prime, theta);
        },
        py::arg("model"), py::arg("data"), py::arg("theta_prime"), py::arg("theta"));
  m.def("e_step",
        [to_data](const Model& model, const py::object& data, const Eigen::VectorXd& theta) {
          return e_step(model, to_data(data), theta).value_matrix();
        },
        py::arg("model"), py::arg("data"), py::arg("theta"));
  m.def("em_step",
        [to_data](const Model& model, const py::object& data, const Eigen::VectorXd& theta) {
          return em_step(model, to_data(data), theta);
        },
        py::arg("model"), py::arg("data"), py::arg("theta"));
  m.def("em_fit",
        [to_data](const Model& model, const py::object& data, const Eigen::VectorXd& theta0,
                  const EmConfig& config) { return em_fit(model, to_data(data), theta0, config); },
        py::arg("model"), py::arg("data"), py::arg("theta0"), py::arg("config") = EmConfig{});
  m.def("grad_log_joint",
        [to_data](const Model& model, const py::object& data, const Eigen::VectorXd& theta) {
          return grad_log_joint(model, to_data(data), theta);
        },
        py::arg("model"), py::arg("data"), py::arg("theta"));
  m.def("hvp",
        [to_data](const Model& model, const py::object& data, const Eigen::VectorXd& theta,
                  const Eigen::VectorXd& v, const std::string& strategy, double step) {
          return hvp(model, to_data(data), theta, v, strategy_from(strategy, step));
        },
        py::arg("model"), py::arg("data"), py::arg("theta"), py::arg("v"),
        py::arg("strategy") = "dual", py::arg("step") = 0.0);
  m.def("hessian",
        [to_data](const Model& model, const py::object& data, const Eigen::VectorXd& theta,
                  const std::string& strategy, double step, int threads) {
          return hessian(model, to_data(data), theta, strategy_from(strategy, step), threads);
        },
        py::arg("model"), py::arg("data"), py::arg("theta"), py::arg("strategy") = "dual",
        py::arg("step") = 0.0, py::arg("threads") = 1);
  m.def("laplace_posterior",
        [to_data](const Model& model, const py::object& data, const Eigen::VectorXd& theta,
                  const std::string& strategy, double step, int threads) {
          return laplace_posterior(model, to_data(data), theta, strategy_from(strategy, step),
                                   threads);
        },
        py::arg("model"), py::arg("data"), py::arg("theta"), py::arg("strategy") = "dual",
        py::arg("step") = 0.0, py::arg("threads") = 1);
  m.def("marginal_by_enumeration",
        [to_data](const Model& model, const py::object& data, const Eigen::VectorXd& theta) {
          return oracle::marginal_by_enumeration(model, to_data(data), theta);
        },
        py::arg("model"), py::arg("data"), py::arg("theta"));
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "EM mixture fitting with a Laplace posterior approximation";

  py::register_exception<NotAtModeError>(m, "NotAtModeError");
  py::register_exception<NotNegativeDefiniteError>(m, "NotNegativeDefiniteError");
  py::register_exception<MStepError>(m, "MStepError");

  py::class_<GaussianMixture>(m, "GaussianMixture")
      .def(py::init([](const Eigen::VectorXd& weights, const Eigen::VectorXd& variances,
                       std::optional<Eigen::VectorXd> prior_mean,
                       std::optional<Eigen::VectorXd> prior_var) {
             return GaussianMixture(
                 weights, variances,
                 make_prior(static_cast<int>(weights.size()), prior_mean, prior_var));
           }),
           py::arg("weights"), py::arg("variances"), py::arg("prior_mean") = std::nullopt,
           py::arg("prior_var") = std::nullopt)
      .def_property_readonly("components", &GaussianMixture::components)
      .def_property_readonly("param_dim", &GaussianMixture::param_dim);

  py::class_<CoinMixture>(m, "CoinMixture")
      .def(py::init([](const Eigen::VectorXd& weights, std::optional<Eigen::VectorXd> prior_mean,
                       std::optional<Eigen::VectorXd> prior_var) {
             return CoinMixture(weights, make_prior(static_cast<int>(weights.size()),
                                                    prior_mean, prior_var));
           }),
           py::arg("weights"), py::arg("prior_mean") = std::nullopt,
           py::arg("prior_var") = std::nullopt)
      .def_property_readonly("components", &CoinMixture::components)
      .def_property_readonly("param_dim", &CoinMixture::param_dim);

  py::class_<EmConfig>(m, "EmConfig")
      .def(py::init([](int max_iters, double tol_loglik, double tol_param) {
             EmConfig c{max_iters, tol_loglik, tol_param};
             c.validate();
             return c;
           }),
           py::arg("max_iters") = 1000, py::arg("tol_loglik") = 1e-10,
           py::arg("tol_param") = 1e-8)
      .def_readwrite("max_iters", &EmConfig::max_iters)
      .def_readwrite("tol_loglik", &EmConfig::tol_loglik)
      .def_readwrite("tol_param", &EmConfig::tol_param);

  py::class_<EmTrace>(m, "EmTrace")
      .def_property_readonly("theta", [](const EmTrace& t) { return t.final_theta(); })
      .def_property_readonly("log_joint", &EmTrace::final_log_joint)
      .def_property_readonly("iterations", &EmTrace::iterations)
      .def_readonly("converged", &EmTrace::converged)
      .def_property_readonly("reason", [](const EmTrace& t) { return to_string(t.reason); })
      .def_property_readonly("path", [](const EmTrace& t) {
        py::list out;
        for (const auto& it : t.iterates)
          out.append(py::make_tuple(it.iteration, it.theta, it.log_joint));
        return out;
      });

  py::class_<LaplacePosterior>(m, "LaplacePosterior")
      .def_readonly("mean", &LaplacePosterior::mean)
      .def_readonly("covariance", &LaplacePosterior::covariance)
      .def_readonly("log_det_neg_lambda", &LaplacePosterior::log_det_neg_lambda)
      .def_readonly("log_evidence", &LaplacePosterior::log_evidence);

  bind_ops<GaussianMixture>(m, [](const py::object& data) {
    return data.cast<std::vector<double>>();
  });
  bind_ops<CoinMixture>(m, [](const py::object& data) {
    return to_records(data.cast<std::vector<std::pair<long long, long long>>>());
  });
}
