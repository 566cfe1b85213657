#pragma once

#include <optional>
#include <string>
#include <vector>

namespace emlaplace {

struct ModelDescriptor {
  std::string family;
  int components = 0;
  std::vector<double> weights;
  std::vector<double> variances;  // empty for the coin family
  std::vector<double> prior_mean;
  std::vector<double> prior_var;  // +inf marks a flat coordinate

  bool operator==(const ModelDescriptor&) const = default;
};

struct DataDigest {
  long long records = 0;
  std::string checksum;

  bool operator==(const DataDigest&) const = default;
};

struct EmSummary {
  int iterations = 0;
  double final_log_joint = 0.0;
  bool converged = false;
  std::string reason;

  bool operator==(const EmSummary&) const = default;
};

struct PhaseTimings {
  double parse_ms = 0.0;
  double fit_ms = 0.0;
  double laplace_ms = 0.0;
  double total_ms = 0.0;

  bool operator==(const PhaseTimings&) const = default;
};

// Everything one CLI run reports. Matrices are row-major, n*n with n the
// length of theta_hat; the Laplace block is absent for fit-only runs.
struct RunReport {
  ModelDescriptor model;
  DataDigest data;
  std::string strategy;  // "none" for fit-only runs
  std::vector<double> theta_hat;
  EmSummary em;
  double grad_max_norm = 0.0;
  bool has_laplace = false;
  std::vector<double> hessian;
  std::vector<double> covariance;
  double log_det_neg_lambda = 0.0;
  double log_evidence = 0.0;
  std::optional<PhaseTimings> timings;

  bool operator==(const RunReport&) const = default;
};

// Fixed field order, 17-significant-digit floats; identical inputs produce
// byte-identical output.
std::string serialize_report(const RunReport& report);

// Inverse of serialize_report; throws std::runtime_error on malformed input.
RunReport parse_report(const std::string& json_text);

// FNV-1a 64-bit digest as 16 hex characters.
std::string fnv1a64_hex(const std::string& bytes);

}  // namespace emlaplace
