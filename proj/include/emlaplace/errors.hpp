#pragma once

#include <cstdio>
#include <stdexcept>
#include <string>

namespace emlaplace {

// %g rendering for diagnostics; std::to_string loses small magnitudes.
inline std::string format_value(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

// Argument shape or size violations.
struct DimensionError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Scalar domain violations (log/sqrt of a non-positive value part).
struct DomainError : std::domain_error {
  using std::domain_error::domain_error;
};

// Non-finite or degenerate numeric results. `index` is the offending
// component or record where that is meaningful, -1 otherwise.
struct NumericError : std::runtime_error {
  int index = -1;
  explicit NumericError(const std::string& what, int idx = -1)
      : std::runtime_error(what), index(idx) {}
};

// Closed-form maximization of the auxiliary failed (coin model Newton).
struct MStepError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A Laplace posterior was requested at a point that is not a mode.
struct NotAtModeError : std::runtime_error {
  double grad_max_norm = 0.0;
  explicit NotAtModeError(const std::string& what, double norm)
      : std::runtime_error(what), grad_max_norm(norm) {}
};

// The negated Hessian is not positive-definite (saddle or degenerate mode).
struct NotNegativeDefiniteError : std::runtime_error {
  int pivot = -1;
  explicit NotNegativeDefiniteError(const std::string& what, int pivot_index)
      : std::runtime_error(what), pivot(pivot_index) {}
};

// Hessian columns disagree beyond round-off; the gradient implementation
// is inconsistent.
struct AsymmetricHessianError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Reference quadrature could not certify its own resolution.
struct QuadratureError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace emlaplace
