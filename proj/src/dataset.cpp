#include "tiee/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "tiee/errors.hpp"

namespace tiee {

Dataset::Dataset(std::vector<double> y, std::vector<int> d, std::vector<double> x_row_major,
                 std::size_t cov_dim, std::vector<std::string> covariate_names)
    : y_(std::move(y)),
      d_(std::move(d)),
      x_(std::move(x_row_major)),
      cov_dim_(cov_dim),
      names_(std::move(covariate_names)) {
  if (y_.empty()) throw EmptyInputError("dataset has no observations");
  if (d_.size() != y_.size() || x_.size() != y_.size() * cov_dim_)
    throw UsageError("dataset columns have inconsistent lengths");
  for (std::size_t i = 0; i < y_.size(); ++i) {
    if (!std::isfinite(y_[i])) throw ParseError("non-finite outcome", i + 1);
    if (d_[i] != 0 && d_[i] != 1) throw ParseError("treatment must be 0 or 1", i + 1);
  }
  for (std::size_t k = 0; k < x_.size(); ++k)
    if (!std::isfinite(x_[k])) throw ParseError("non-finite covariate", k / std::max<std::size_t>(cov_dim_, 1) + 1);
  if (names_.empty())
    for (std::size_t j = 0; j < cov_dim_; ++j) names_.push_back("x" + std::to_string(j + 1));
}

Dataset Dataset::from_observations(std::span<const Observation> obs) {
  if (obs.empty()) throw EmptyInputError("dataset has no observations");
  const std::size_t k = obs.front().x.size();
  std::vector<double> y, x;
  std::vector<int> d;
  y.reserve(obs.size());
  d.reserve(obs.size());
  x.reserve(obs.size() * k);
  for (const auto& o : obs) {
    if (o.x.size() != k) throw UsageError("observations have differing covariate dimension");
    y.push_back(o.y);
    d.push_back(o.d);
    x.insert(x.end(), o.x.begin(), o.x.end());
  }
  return Dataset(std::move(y), std::move(d), std::move(x), k);
}

Observation Dataset::observation(std::size_t i) const {
  auto xi = x(i);
  return {y_[i], d_[i], std::vector<double>(xi.begin(), xi.end())};
}

std::size_t Dataset::arm_size(int d) const {
  return static_cast<std::size_t>(std::count(d_.begin(), d_.end(), d));
}

std::vector<std::size_t> Dataset::arm_indices(int d) const {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < d_.size(); ++i)
    if (d_[i] == d) idx.push_back(i);
  return idx;
}

void Dataset::require_both_arms() const {
  if (arm_size(1) == 0) throw EmptyArmError("treated arm (d=1) is empty");
  if (arm_size(0) == 0) throw EmptyArmError("control arm (d=0) is empty");
}

Dataset Dataset::select(std::span<const std::size_t> idx) const {
  std::vector<double> y, x;
  std::vector<int> d;
  y.reserve(idx.size());
  d.reserve(idx.size());
  x.reserve(idx.size() * cov_dim_);
  for (auto i : idx) {
    y.push_back(y_[i]);
    d.push_back(d_[i]);
    auto xi = this->x(i);
    x.insert(x.end(), xi.begin(), xi.end());
  }
  return Dataset(std::move(y), std::move(d), std::move(x), cov_dim_, names_);
}

namespace {

// Splits one logical CSV record; quoted fields may contain commas, doubled
// quotes and newlines.
bool read_record(std::istream& in, std::vector<std::string>& fields) {
  fields.clear();
  std::string field;
  bool in_quotes = false, any = false;
  char c;
  while (in.get(c)) {
    any = true;
    if (in_quotes) {
      if (c == '"') {
        if (in.peek() == '"') {
          field.push_back('"');
          in.get();
        } else {
          in_quotes = false;
        }
      } else {
        field.push_back(c);
      }
    } else if (c == '"') {
      in_quotes = true;
    } else if (c == ',') {
      fields.push_back(std::move(field));
      field.clear();
    } else if (c == '\n') {
      break;
    } else if (c != '\r') {
      field.push_back(c);
    }
  }
  if (!any) return false;
  fields.push_back(std::move(field));
  return true;
}

std::string trim(std::string s) {
  auto ws = [](unsigned char ch) { return std::isspace(ch) != 0; };
  while (!s.empty() && ws(s.back())) s.pop_back();
  std::size_t b = 0;
  while (b < s.size() && ws(s[b])) ++b;
  return s.substr(b);
}

double parse_number(const std::string& raw, const std::string& column, std::size_t row) {
  const std::string s = trim(raw);
  double v = 0.0;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  if (!s.empty() && *first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (s.empty() || ec != std::errc() || ptr != last || !std::isfinite(v))
    throw ParseError("row " + std::to_string(row) + ": column '" + column +
                         "' is not a finite number: '" + s + "'",
                     row);
  return v;
}

}  // namespace

Dataset load_csv(const std::filesystem::path& path, const ColumnMap& columns) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw SchemaError("cannot open input file: " + path.string());
  std::vector<std::string> header;
  if (!read_record(in, header) || (header.size() == 1 && trim(header[0]).empty()))
    throw EmptyInputError("input file is empty: " + path.string());
  for (auto& h : header) h = trim(h);

  auto locate = [&](const std::string& name) {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw SchemaError("missing column '" + name + "'");
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t yc = locate(columns.y);
  const std::size_t dc = locate(columns.d);
  std::vector<std::size_t> xc;
  for (const auto& name : columns.x) xc.push_back(locate(name));

  std::vector<double> y, x;
  std::vector<int> d;
  std::vector<std::string> rec;
  std::size_t row = 0;
  while (read_record(in, rec)) {
    if (rec.size() == 1 && trim(rec[0]).empty()) continue;  // blank line
    ++row;
    if (rec.size() != header.size())
      throw ParseError("row " + std::to_string(row) + ": expected " +
                           std::to_string(header.size()) + " fields, found " +
                           std::to_string(rec.size()),
                       row);
    y.push_back(parse_number(rec[yc], columns.y, row));
    const double dv = parse_number(rec[dc], columns.d, row);
    if (dv != 0.0 && dv != 1.0)
      throw ParseError("row " + std::to_string(row) + ": treatment column '" + columns.d +
                           "' must be 0 or 1, found '" + trim(rec[dc]) + "'",
                       row);
    d.push_back(static_cast<int>(dv));
    for (std::size_t j = 0; j < xc.size(); ++j) x.push_back(parse_number(rec[xc[j]], columns.x[j], row));
  }
  if (y.empty()) throw EmptyInputError("input file has a header but no data rows: " + path.string());
  return Dataset(std::move(y), std::move(d), std::move(x), xc.size(), columns.x);
}

WeightedSample::WeightedSample(std::vector<double> values, std::vector<double> weights,
                               std::vector<std::size_t> source) {
  if (values.size() != weights.size() || (!source.empty() && source.size() != values.size()))
    throw UsageError("weighted sample: values, weights and sources differ in length");
  if (values.empty()) throw DegenerateWeightsError("weighted sample is empty");
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  values_.reserve(order.size());
  weights_.reserve(order.size());
  cumulative_.reserve(order.size());
  double acc = 0.0;
  for (auto o : order) {
    if (!(weights[o] >= 0.0) || !std::isfinite(weights[o]))
      throw DomainError("weighted sample: weights must be finite and nonnegative");
    if (!std::isfinite(values[o])) throw DomainError("weighted sample: values must be finite");
    values_.push_back(values[o]);
    weights_.push_back(weights[o]);
    acc += weights[o];
    cumulative_.push_back(acc);
    if (!source.empty()) source_.push_back(source[o]);
  }
}

WeightedSample WeightedSample::unit(std::vector<double> values) {
  std::vector<double> w(values.size(), 1.0);
  return WeightedSample(std::move(values), std::move(w));
}

std::size_t weighted_quantile_index(const WeightedSample& sample, double p) {
  if (!(p > 0.0 && p < 1.0)) throw DomainError("quantile level must lie in (0,1)");
  const double total = sample.total_weight();
  if (!(total > 0.0)) throw DegenerateWeightsError("weighted sample has zero total weight");
  // Relative slack absorbs rounding in the running sum so that e.g. p = 1/4 on
  // four unit atoms lands on the first atom.
  const double target = p * total * (1.0 - 1e-12);
  std::size_t lo = 0, hi = sample.size() - 1;
  while (lo < hi) {
    const std::size_t mid = lo + (hi - lo) / 2;
    if (sample.cumulative(mid) >= target)
      hi = mid;
    else
      lo = mid + 1;
  }
  return lo;
}

double weighted_quantile(const WeightedSample& sample, double p) {
  return sample.values()[weighted_quantile_index(sample, p)];
}

}  // namespace tiee
