#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "emlaplace/models.hpp"

namespace emlaplace {

// Malformed or unreadable user input; the message carries file:line.
struct InputError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Whole file as bytes (also the checksum input). Throws InputError.
std::string read_file(const std::string& path);

// One real per line, blank lines ignored.
std::vector<double> parse_reals(const std::string& bytes, const std::string& name);

// One "successes,trials" pair per line, blank lines ignored.
std::vector<CoinRecord> parse_coin_records(const std::string& bytes, const std::string& name);

}  // namespace emlaplace
