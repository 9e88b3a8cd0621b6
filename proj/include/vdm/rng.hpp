#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace vdm {

// splitmix64 finalizer; good avalanche, cheap, identical on every platform.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Stateless draw keyed by (seed, stream, counter). Frames and RANSAC iterations derive
/// their randomness from their own index so results do not depend on evaluation order.
constexpr std::uint64_t counter_bits(std::uint64_t seed, std::uint64_t stream, std::uint64_t counter) {
  return mix64(mix64(mix64(seed) ^ stream) ^ counter);
}

inline double bits_to_unit(std::uint64_t bits) {
  return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

inline double counter_uniform(std::uint64_t seed, std::uint64_t stream, std::uint64_t counter) {
  return bits_to_unit(counter_bits(seed, stream, counter));
}

/// Sequential generator with the same mixing; std distributions are avoided because their
/// algorithms differ between standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0) : seed_(seed), stream_(stream) {}

  std::uint64_t next_u64() { return counter_bits(seed_, stream_, counter_++); }
  double uniform() { return bits_to_unit(next_u64()); }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Lemire-free modulo is fine here: n is tiny relative to 2^64.
  std::uint64_t below(std::uint64_t n) { return next_u64() % n; }

  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    spare_ = r * std::sin(2.0 * std::numbers::pi * u2);
    has_spare_ = true;
    return r * std::cos(2.0 * std::numbers::pi * u2);
  }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
  std::uint64_t counter_ = 0;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace vdm
