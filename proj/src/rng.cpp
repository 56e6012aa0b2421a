#include "tiee/rng.hpp"

namespace tiee {

namespace {
constexpr std::uint32_t kMul0 = 0xD2511F53u;
constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;
constexpr std::uint32_t kSequentialStream = 0xFFFFFFFFu;

inline void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi, std::uint32_t& lo) {
  const std::uint64_t p = static_cast<std::uint64_t>(a) * b;
  hi = static_cast<std::uint32_t>(p >> 32);
  lo = static_cast<std::uint32_t>(p);
}
}  // namespace

std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> ctr,
                                        std::array<std::uint32_t, 2> key) noexcept {
  for (int round = 0; round < 10; ++round) {
    std::uint32_t hi0, lo0, hi1, lo1;
    mulhilo(kMul0, ctr[0], hi0, lo0);
    mulhilo(kMul1, ctr[2], hi1, lo1);
    ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    key[0] += kWeyl0;
    key[1] += kWeyl1;
  }
  return ctr;
}

std::uint64_t mix64(std::uint64_t z) noexcept {
  z += 0x9E3779B97F4A7C15ull;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index) noexcept {
  return mix64(mix64(base) ^ mix64(index + 0x632BE59BD9B4E019ull));
}

double bits_to_open_unit(std::uint32_t hi, std::uint32_t lo) noexcept {
  const std::uint64_t k = (static_cast<std::uint64_t>(hi) << 21) | (lo >> 11);
  return (static_cast<double>(k) + 0.5) * 0x1.0p-53;
}

CounterRng::CounterRng(std::uint64_t seed) noexcept
    : seed_(seed),
      key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)} {}

double CounterRng::uniform(std::uint64_t unit, std::uint32_t stream) const noexcept {
  const auto r = philox4x32({static_cast<std::uint32_t>(unit),
                             static_cast<std::uint32_t>(unit >> 32), stream, 0u},
                            key_);
  return bits_to_open_unit(r[0], r[1]);
}

double CounterRng::next_uniform() noexcept {
  const std::uint64_t c = sequence_++;
  const auto r = philox4x32({static_cast<std::uint32_t>(c), static_cast<std::uint32_t>(c >> 32),
                             kSequentialStream, 0u},
                            key_);
  return bits_to_open_unit(r[0], r[1]);
}

std::uint64_t CounterRng::next_index(std::uint64_t bound) noexcept {
  auto k = static_cast<std::uint64_t>(next_uniform() * static_cast<double>(bound));
  return k < bound ? k : bound - 1;
}

}  // namespace tiee
