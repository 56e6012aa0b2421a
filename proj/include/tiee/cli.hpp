#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

namespace tiee::cli {

inline constexpr const char* kVersion = "0.1.0";

enum ExitCode : int { kOk = 0, kUsage = 2, kEstimation = 3 };

struct RunConfig {
  std::string command;
  std::string input;
  std::string y;
  std::string d;
  std::vector<std::string> x;
  std::string scenario;
  double tau = -1.0;  ///< unset when negative
  std::vector<std::string> regimes;
  std::vector<std::string> methods;
  std::string basis;
  std::string link = "logit";
  double p_u = -1.0;  ///< unset when negative
  std::size_t K = 0;  ///< 0 selects the default
  double alpha = 0.10;
  int reps = 200;
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::size_t n = 1000;
  std::string out = ".";
  std::string format = "csv";
  std::string study;
  std::string sweep;
};

nlohmann::ordered_json to_json(const RunConfig& c);

/// Parses argv and runs one command. Diagnostics go to `err`, summaries to `out`.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace tiee::cli
