#pragma once

#include <stdexcept>
#include <string>

namespace tiee {

/// Base class for all library errors. `kind()` is a stable machine-readable tag
/// used by the CLI when writing JSON error objects.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& what)
      : std::runtime_error(what), kind_(std::move(kind)) {}
  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

// Input / usage problems (CLI exit code 2).
struct SchemaError : Error {
  explicit SchemaError(const std::string& w) : Error("schema", w) {}
};
struct ParseError : Error {
  ParseError(const std::string& w, std::size_t row) : Error("parse", w), row(row) {}
  std::size_t row;
};
struct EmptyInputError : Error {
  explicit EmptyInputError(const std::string& w) : Error("empty_input", w) {}
};
struct DomainError : Error {
  explicit DomainError(const std::string& w) : Error("domain", w) {}
};
struct UsageError : Error {
  explicit UsageError(const std::string& w) : Error("usage", w) {}
};

// Estimation failures (CLI exit code 3).
struct DegenerateWeightsError : Error {
  explicit DegenerateWeightsError(const std::string& w) : Error("degenerate_weights", w) {}
};
struct EmptyArmError : Error {
  explicit EmptyArmError(const std::string& w) : Error("empty_arm", w) {}
};
struct SingularDesignError : Error {
  explicit SingularDesignError(const std::string& w) : Error("singular_design", w) {}
};
struct TooFewObservationsError : Error {
  explicit TooFewObservationsError(const std::string& w) : Error("too_few_observations", w) {}
};
struct InsufficientTailDataError : Error {
  explicit InsufficientTailDataError(const std::string& w) : Error("insufficient_tail_data", w) {}
};
struct DegenerateTailError : Error {
  explicit DegenerateTailError(const std::string& w) : Error("degenerate_tail", w) {}
};
struct LogDomainError : Error {
  explicit LogDomainError(const std::string& w) : Error("log_domain", w) {}
};
struct HeavyTailViolationError : Error {
  explicit HeavyTailViolationError(const std::string& w) : Error("heavy_tail_violation", w) {}
};
struct DegenerateSpacingError : Error {
  explicit DegenerateSpacingError(const std::string& w) : Error("degenerate_spacing", w) {}
};
struct ExtrapolationBoundError : Error {
  explicit ExtrapolationBoundError(const std::string& w) : Error("extrapolation_bound", w) {}
};
struct FlatMomentError : Error {
  explicit FlatMomentError(const std::string& w) : Error("flat_moment", w) {}
};
struct SingularNuisanceError : Error {
  explicit SingularNuisanceError(const std::string& w) : Error("singular_nuisance", w) {}
};
struct InsufficientDataError : Error {
  explicit InsufficientDataError(const std::string& w) : Error("insufficient_data", w) {}
};
struct CampaignError : Error {
  explicit CampaignError(const std::string& w) : Error("campaign", w) {}
};

}  // namespace tiee
