#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace tiee {

/// One unit W(i) = (Y, D, X).
struct Observation {
  double y = 0.0;
  int d = 0;
  std::vector<double> x;
};

/// Column names used to map a CSV file onto a Dataset.
struct ColumnMap {
  std::string y;
  std::string d;
  std::vector<std::string> x;
};

/// Immutable observed sample. Covariates are stored row-major.
class Dataset {
 public:
  Dataset(std::vector<double> y, std::vector<int> d, std::vector<double> x_row_major,
          std::size_t cov_dim, std::vector<std::string> covariate_names = {});

  static Dataset from_observations(std::span<const Observation> obs);

  std::size_t n() const noexcept { return y_.size(); }
  std::size_t cov_dim() const noexcept { return cov_dim_; }

  double y(std::size_t i) const { return y_[i]; }
  int d(std::size_t i) const { return d_[i]; }
  std::span<const double> x(std::size_t i) const {
    return {x_.data() + i * cov_dim_, cov_dim_};
  }
  double covariate(std::size_t i, std::size_t j) const { return x_[i * cov_dim_ + j]; }
  Observation observation(std::size_t i) const;

  std::span<const double> outcomes() const noexcept { return y_; }
  std::span<const int> treatments() const noexcept { return d_; }
  const std::vector<std::string>& covariate_names() const noexcept { return names_; }

  std::size_t arm_size(int d) const;
  std::vector<std::size_t> arm_indices(int d) const;
  /// Throws EmptyArmError unless both treatment arms contain at least one unit.
  void require_both_arms() const;

  /// Subsample by index (indices may repeat, as in a bootstrap draw).
  Dataset select(std::span<const std::size_t> idx) const;

 private:
  std::vector<double> y_;
  std::vector<int> d_;
  std::vector<double> x_;
  std::size_t cov_dim_;
  std::vector<std::string> names_;
};

/// Reads a header-first CSV with '.' decimals. Row numbers in errors are
/// 1-based data rows (the header is not counted).
Dataset load_csv(const std::filesystem::path& path, const ColumnMap& columns);

/// Weighted empirical distribution: values sorted nondecreasing with their
/// nonnegative weights. `source(i)` is the dataset index the value came from,
/// or npos when the sample was built from bare values.
class WeightedSample {
 public:
  static constexpr std::size_t npos = static_cast<std::size_t>(-1);

  WeightedSample(std::vector<double> values, std::vector<double> weights,
                 std::vector<std::size_t> source = {});
  static WeightedSample unit(std::vector<double> values);

  std::size_t size() const noexcept { return values_.size(); }
  std::span<const double> values() const noexcept { return values_; }
  std::span<const double> weights() const noexcept { return weights_; }
  std::size_t source(std::size_t i) const { return source_.empty() ? npos : source_[i]; }
  double total_weight() const noexcept { return cumulative_.empty() ? 0.0 : cumulative_.back(); }
  /// Weight summed over values[0..i] inclusive.
  double cumulative(std::size_t i) const { return cumulative_[i]; }

 private:
  std::vector<double> values_;
  std::vector<double> weights_;
  std::vector<std::size_t> source_;
  std::vector<double> cumulative_;
};

/// Smallest sample value v with F_w(v) >= p, where F_w is the normalized
/// weighted ECDF (left-continuous inverse). Minimizes sum w_i rho_p(y_i - q).
double weighted_quantile(const WeightedSample& sample, double p);

/// Index into `sample.values()` of the weighted_quantile result.
std::size_t weighted_quantile_index(const WeightedSample& sample, double p);

/// Check loss rho_p(u) = u (p - 1{u < 0}).
inline double check_loss(double u, double p) { return u * (p - (u < 0.0 ? 1.0 : 0.0)); }

}  // namespace tiee
