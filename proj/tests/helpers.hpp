#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "tiee/dataset.hpp"

namespace testing {

inline std::filesystem::path temp_path(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "tiee_tests";
  std::filesystem::create_directories(dir);
  return dir / name;
}

inline std::filesystem::path write_file(const std::string& name, const std::string& content) {
  const auto p = temp_path(name);
  std::ofstream(p) << content;
  return p;
}

/// Smallest sample value whose normalized weighted ECDF reaches p, by brute force.
inline double brute_quantile(const std::vector<double>& v, const std::vector<double>& w, double p) {
  double total = 0.0;
  for (double x : w) total += x;
  double best = INFINITY;
  for (double c : v) {
    double mass = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i)
      if (v[i] <= c) mass += w[i];
    if (mass / total >= p - 1e-12 && c < best) best = c;
  }
  return best;
}

inline tiee::Dataset make_dataset(const std::vector<double>& y, const std::vector<int>& d,
                                  const std::vector<double>& x = {}, std::size_t cov_dim = 0) {
  std::vector<double> xs = x;
  if (cov_dim == 0) xs.clear();
  return tiee::Dataset(y, d, xs, cov_dim);
}

}  // namespace testing
