#include "emlaplace/report.hpp"

#include <cinttypes>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <stdexcept>

#include <json.hpp>

namespace emlaplace {

namespace {

// %.17g round-trips every finite double exactly.
void append_double(std::string& out, double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  out += buf;
}

void append_number_or_null(std::string& out, double v) {
  if (std::isinf(v)) {
    out += "null";
    return;
  }
  append_double(out, v);
}

void append_string(std::string& out, const std::string& s) {
  out += '"';
  for (char c : s) {
    switch (c) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\t': out += "\\t"; break;
      default: out += c;
    }
  }
  out += '"';
}

template <class Append>
void append_array(std::string& out, const std::vector<double>& v, Append append_elem) {
  out += '[';
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i > 0) out += ',';
    append_elem(out, v[i]);
  }
  out += ']';
}

std::vector<double> read_double_array(const nlohmann::json& j, const char* key,
                                      bool nulls_are_inf = false) {
  std::vector<double> out;
  for (const auto& e : j.at(key)) {
    if (nulls_are_inf && e.is_null())
      out.push_back(std::numeric_limits<double>::infinity());
    else
      out.push_back(e.get<double>());
  }
  return out;
}

}  // namespace

std::string serialize_report(const RunReport& r) {
  std::string out;
  out.reserve(1024);

  out += "{\"model\":{\"family\":";
  append_string(out, r.model.family);
  out += ",\"components\":" + std::to_string(r.model.components);
  out += ",\"weights\":";
  append_array(out, r.model.weights, append_double);
  if (!r.model.variances.empty()) {
    out += ",\"variances\":";
    append_array(out, r.model.variances, append_double);
  }
  out += ",\"prior_mean\":";
  append_array(out, r.model.prior_mean, append_double);
  out += ",\"prior_var\":";
  append_array(out, r.model.prior_var, append_number_or_null);
  out += "},\"data\":{\"records\":" + std::to_string(r.data.records);
  out += ",\"checksum\":";
  append_string(out, r.data.checksum);
  out += "},\"strategy\":";
  append_string(out, r.strategy);
  out += ",\"theta_hat\":";
  append_array(out, r.theta_hat, append_double);
  out += ",\"em\":{\"iterations\":" + std::to_string(r.em.iterations);
  out += ",\"final_log_joint\":";
  append_double(out, r.em.final_log_joint);
  out += ",\"converged\":";
  out += r.em.converged ? "true" : "false";
  out += ",\"reason\":";
  append_string(out, r.em.reason);
  out += "},\"grad_max_norm\":";
  append_double(out, r.grad_max_norm);
  if (r.has_laplace) {
    out += ",\"hessian\":";
    append_array(out, r.hessian, append_double);
    out += ",\"covariance\":";
    append_array(out, r.covariance, append_double);
    out += ",\"log_det_neg_lambda\":";
    append_double(out, r.log_det_neg_lambda);
    out += ",\"log_evidence\":";
    append_double(out, r.log_evidence);
  }
  if (r.timings) {
    out += ",\"timings_ms\":{\"parse\":";
    append_double(out, r.timings->parse_ms);
    out += ",\"fit\":";
    append_double(out, r.timings->fit_ms);
    out += ",\"laplace\":";
    append_double(out, r.timings->laplace_ms);
    out += ",\"total\":";
    append_double(out, r.timings->total_ms);
    out += '}';
  }
  out += "}\n";
  return out;
}

RunReport parse_report(const std::string& json_text) {
  const nlohmann::json j = nlohmann::json::parse(json_text);
  RunReport r;
  const auto& jm = j.at("model");
  r.model.family = jm.at("family").get<std::string>();
  r.model.components = jm.at("components").get<int>();
  r.model.weights = read_double_array(jm, "weights");
  if (jm.contains("variances")) r.model.variances = read_double_array(jm, "variances");
  r.model.prior_mean = read_double_array(jm, "prior_mean");
  r.model.prior_var = read_double_array(jm, "prior_var", /*nulls_are_inf=*/true);

  const auto& jd = j.at("data");
  r.data.records = jd.at("records").get<long long>();
  r.data.checksum = jd.at("checksum").get<std::string>();

  r.strategy = j.at("strategy").get<std::string>();
  r.theta_hat = read_double_array(j, "theta_hat");

  const auto& je = j.at("em");
  r.em.iterations = je.at("iterations").get<int>();
  r.em.final_log_joint = je.at("final_log_joint").get<double>();
  r.em.converged = je.at("converged").get<bool>();
  r.em.reason = je.at("reason").get<std::string>();

  r.grad_max_norm = j.at("grad_max_norm").get<double>();

  r.has_laplace = j.contains("hessian");
  if (r.has_laplace) {
    r.hessian = read_double_array(j, "hessian");
    r.covariance = read_double_array(j, "covariance");
    r.log_det_neg_lambda = j.at("log_det_neg_lambda").get<double>();
    r.log_evidence = j.at("log_evidence").get<double>();
  }

  if (j.contains("timings_ms")) {
    const auto& jt = j.at("timings_ms");
    PhaseTimings t;
    t.parse_ms = jt.at("parse").get<double>();
    t.fit_ms = jt.at("fit").get<double>();
    t.laplace_ms = jt.at("laplace").get<double>();
    t.total_ms = jt.at("total").get<double>();
    r.timings = t;
  }
  return r;
}

std::string fnv1a64_hex(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016" PRIx64, h);
  return buf;
}

}  // namespace emlaplace
