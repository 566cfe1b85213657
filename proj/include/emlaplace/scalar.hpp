#pragma once

#include <cmath>
#include <complex>
#include <concepts>
#include <limits>
#include <string>

#include "emlaplace/errors.hpp"

namespace emlaplace {

// Forward-mode scalar: a value plus one tangent component. Propagating a
// tangent through arithmetic yields the exact directional derivative of
// whatever was computed, with no step size involved.
struct Dual {
  double value = 0.0;
  double tangent = 0.0;

  constexpr Dual() = default;
  constexpr Dual(double v) : value(v) {}  // NOLINT: literals join arithmetic
  constexpr Dual(double v, double t) : value(v), tangent(t) {}
};

constexpr Dual operator+(Dual a) { return a; }
constexpr Dual operator-(Dual a) { return {-a.value, -a.tangent}; }

constexpr Dual operator+(Dual a, Dual b) {
  return {a.value + b.value, a.tangent + b.tangent};
}
constexpr Dual operator-(Dual a, Dual b) {
  return {a.value - b.value, a.tangent - b.tangent};
}
constexpr Dual operator*(Dual a, Dual b) {
  return {a.value * b.value, a.value * b.tangent + a.tangent * b.value};
}
constexpr Dual operator/(Dual a, Dual b) {
  const double q = a.value / b.value;
  return {q, (a.tangent - q * b.tangent) / b.value};
}

inline Dual& operator+=(Dual& a, Dual b) { return a = a + b; }
inline Dual& operator-=(Dual& a, Dual b) { return a = a - b; }
inline Dual& operator*=(Dual& a, Dual b) { return a = a * b; }
inline Dual& operator/=(Dual& a, Dual b) { return a = a / b; }

// Comparisons order by value part only, so plain, dual, and complex-step
// evaluations of the same code take identical branches.
constexpr bool operator==(Dual a, Dual b) { return a.value == b.value; }
constexpr bool operator!=(Dual a, Dual b) { return a.value != b.value; }
constexpr bool operator<(Dual a, Dual b) { return a.value < b.value; }
constexpr bool operator>(Dual a, Dual b) { return a.value > b.value; }
constexpr bool operator<=(Dual a, Dual b) { return a.value <= b.value; }
constexpr bool operator>=(Dual a, Dual b) { return a.value >= b.value; }

// The three realizations of the generic scalar: plain real, dual, and
// complex-step carrier.
template <class S>
concept GenericScalar = std::same_as<S, double> || std::same_as<S, Dual> ||
                        std::same_as<S, std::complex<double>>;

constexpr double value_part(double x) { return x; }
constexpr double value_part(Dual x) { return x.value; }
inline double value_part(const std::complex<double>& x) { return x.real(); }

inline bool finite_parts(double x) { return std::isfinite(x); }
inline bool finite_parts(Dual x) {
  return std::isfinite(x.value) && std::isfinite(x.tangent);
}
inline bool finite_parts(const std::complex<double>& x) {
  return std::isfinite(x.real()) && std::isfinite(x.imag());
}

// Elementary functions over the generic scalar. log and sqrt insist on a
// positive value part for every realization, instead of deferring to the
// realization-specific NaN/branch-cut behaviour.

inline double exp(double x) { return std::exp(x); }
inline Dual exp(Dual x) {
  const double e = std::exp(x.value);
  return {e, e * x.tangent};
}
inline std::complex<double> exp(const std::complex<double>& x) {
  return std::exp(x);
}

inline double log(double x) {
  if (!(x > 0.0)) throw DomainError("log: non-positive value " + format_value(x));
  return std::log(x);
}
inline Dual log(Dual x) {
  if (!(x.value > 0.0))
    throw DomainError("log: non-positive value " + format_value(x.value));
  return {std::log(x.value), x.tangent / x.value};
}
inline std::complex<double> log(const std::complex<double>& x) {
  if (!(x.real() > 0.0))
    throw DomainError("log: non-positive value " + format_value(x.real()));
  return std::log(x);
}

inline double sqrt(double x) {
  if (!(x > 0.0)) throw DomainError("sqrt: non-positive value " + format_value(x));
  return std::sqrt(x);
}
inline Dual sqrt(Dual x) {
  if (!(x.value > 0.0))
    throw DomainError("sqrt: non-positive value " + format_value(x.value));
  const double r = std::sqrt(x.value);
  return {r, x.tangent / (2.0 * r)};
}
inline std::complex<double> sqrt(const std::complex<double>& x) {
  if (!(x.real() > 0.0))
    throw DomainError("sqrt: non-positive value " + format_value(x.real()));
  return std::sqrt(x);
}

inline double tanh(double x) { return std::tanh(x); }
inline Dual tanh(Dual x) {
  const double t = std::tanh(x.value);
  return {t, x.tangent * (1.0 - t * t)};
}
inline std::complex<double> tanh(const std::complex<double>& x) {
  return std::tanh(x);
}

// log(1 + x). The complex realization evaluates log(1+x) directly: the
// imaginary (derivative-carrying) part is unaffected by the real-part
// rounding that log1p exists to avoid.
inline double log1p(double x) { return std::log1p(x); }
inline Dual log1p(Dual x) { return {std::log1p(x.value), x.tangent / (1.0 + x.value)}; }
inline std::complex<double> log1p(const std::complex<double>& x) {
  return std::log(1.0 + x);
}

// How a directional derivative is evaluated: exact forward mode, a tiny
// imaginary perturbation, or a symmetric difference quotient.
struct DiffStrategy {
  enum class Kind { Dual, ComplexStep, CentralDiff };

  Kind kind = Kind::Dual;
  double step = 0.0;  // 0 selects the per-kind default; ignored by Dual

  static DiffStrategy dual() { return {Kind::Dual, 0.0}; }
  static DiffStrategy complex_step(double h = 1e-20) {
    return {Kind::ComplexStep, h};
  }
  static DiffStrategy central_diff(double h = 0.0) {
    return {Kind::CentralDiff, h};
  }
};

inline constexpr double kDefaultComplexStep = 1e-20;

inline double default_central_step_scale() {
  return std::cbrt(std::numeric_limits<double>::epsilon());
}

}  // namespace emlaplace
