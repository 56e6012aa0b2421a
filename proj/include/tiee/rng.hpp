#pragma once

#include <array>
#include <cstdint>

namespace tiee {

/// Philox4x32-10 block function (Salmon et al., Random123). Pure function of
/// (key, counter), so draws are reproducible independent of thread schedule.
std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> counter,
                                        std::array<std::uint32_t, 2> key) noexcept;

/// SplitMix64 finalizer.
std::uint64_t mix64(std::uint64_t z) noexcept;

/// Child seed for replicate/resample `index` of a campaign seeded with `base`.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index) noexcept;

/// Uniform on the open interval (0,1) with 53 random bits.
double bits_to_open_unit(std::uint32_t hi, std::uint32_t lo) noexcept;

/// Counter-addressed uniform source. `uniform(unit, stream)` is the draw for a
/// given sample unit and named stream; it never depends on call order.
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t seed) noexcept;

  double uniform(std::uint64_t unit, std::uint32_t stream) const noexcept;

  /// Sequential interface over a private stream (e.g. bootstrap indices).
  double next_uniform() noexcept;
  std::uint64_t next_index(std::uint64_t bound) noexcept;

  std::uint64_t seed() const noexcept { return seed_; }

 private:
  std::uint64_t seed_;
  std::array<std::uint32_t, 2> key_;
  std::uint64_t sequence_ = 0;
};

}  // namespace tiee
