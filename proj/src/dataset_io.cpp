#include "emlaplace/dataset_io.hpp"

#include <cerrno>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace emlaplace {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double parse_double_token(const std::string& tok, const std::string& where) {
  errno = 0;
  char* end = nullptr;
  const double v = std::strtod(tok.c_str(), &end);
  if (end != tok.c_str() + tok.size() || tok.empty() || errno == ERANGE || !std::isfinite(v))
    throw InputError(where + ": expected a finite real number, got '" + tok + "'");
  return v;
}

long long parse_int_token(const std::string& tok, const std::string& where) {
  errno = 0;
  char* end = nullptr;
  const long long v = std::strtoll(tok.c_str(), &end, 10);
  if (end != tok.c_str() + tok.size() || tok.empty() || errno == ERANGE)
    throw InputError(where + ": expected an integer, got '" + tok + "'");
  return v;
}

}  // namespace

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError(path + ": cannot open file");
  std::ostringstream buf;
  buf << in.rdbuf();
  if (!in.good() && !in.eof()) throw InputError(path + ": read failed");
  return buf.str();
}

std::vector<double> parse_reals(const std::string& bytes, const std::string& name) {
  std::vector<double> out;
  std::istringstream in(bytes);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string tok = trim(line);
    if (tok.empty()) continue;
    out.push_back(parse_double_token(tok, name + ":" + std::to_string(lineno)));
  }
  if (out.empty()) throw InputError(name + ": no records");
  return out;
}

std::vector<CoinRecord> parse_coin_records(const std::string& bytes, const std::string& name) {
  std::vector<CoinRecord> out;
  std::istringstream in(bytes);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string tok = trim(line);
    if (tok.empty()) continue;
    const std::string where = name + ":" + std::to_string(lineno);
    const auto comma = tok.find(',');
    if (comma == std::string::npos)
      throw InputError(where + ": expected 'successes,trials'");
    CoinRecord rec;
    rec.successes = parse_int_token(trim(tok.substr(0, comma)), where);
    rec.trials = parse_int_token(trim(tok.substr(comma + 1)), where);
    if (rec.trials < 1 || rec.successes < 0 || rec.successes > rec.trials)
      throw InputError(where + ": need 0 <= successes <= trials and trials >= 1");
    out.push_back(rec);
  }
  if (out.empty()) throw InputError(name + ": no records");
  return out;
}

}  // namespace emlaplace
