#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <random>

namespace eir {

/// Deterministic random stream. Raw bits come from std::mt19937_64 (whose
/// sequence is fixed by the standard); the real-valued draws below are
/// hand-rolled so results do not depend on libstdc++'s distribution
/// implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t raw() { return gen_(); }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n). n must be > 0. Unbiased via rejection.
  std::uint64_t integer(std::uint64_t n) {
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x;
    do {
      x = gen_();
    } while (x >= limit);
    return x % n;
  }

  /// Standard normal via Box-Muller; consumes exactly two uniforms.
  double normal() {
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586477 * u2);
  }

  bool bernoulli(double p) { return uniform() < p; }

 private:
  std::mt19937_64 gen_;
};

/// Purposes for derived streams. Skipping one stream (e.g. interpolation
/// when lambda2 = 0) never perturbs draws made from any other stream.
enum class Stream : std::uint64_t {
  bank_init = 1,
  encoder_init = 2,
  shuffle = 3,
  view = 4,
  pairing = 5,
  interpolation = 6,
  synthetic = 7,
  eval = 8,
};

namespace detail {
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}
}  // namespace detail

/// Counter-based stream derivation: hash-folds (seed, purpose, counters...)
/// into a fresh generator seed.
inline Rng derive_rng(std::uint64_t seed, Stream purpose,
                      std::initializer_list<std::uint64_t> counters = {}) {
  std::uint64_t h = detail::splitmix64(seed ^ 0x6a09e667f3bcc908ULL);
  h = detail::splitmix64(h ^ static_cast<std::uint64_t>(purpose));
  for (std::uint64_t c : counters) h = detail::splitmix64(h ^ c);
  return Rng(h);
}

}  // namespace eir
