#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

namespace boxprune {

#ifdef BOXPRUNE_FLOAT32
using real = float;
#else
using real = double;
#endif

// Retention fractions are floored here for every profile source; values
// below this make the rebuilt tensors degenerate.
inline constexpr double kBetaMin = 0.1;

// Tolerance constants are per scalar mode; tests pin the 64-bit build.
#ifdef BOXPRUNE_FLOAT32
inline constexpr real kGradCheckTol = real(1e-2);
inline constexpr real kGradCheckStep = real(1e-3);
inline constexpr real kMaskEquivTol = real(1e-3);
#else
inline constexpr real kGradCheckTol = 1e-4;
inline constexpr real kGradCheckStep = 1e-5;
inline constexpr real kMaskEquivTol = 1e-5;
#endif

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Wrong tensor/layer geometry; message names the offending layer.
struct ShapeError : Error {
  using Error::Error;
};

// Bad user-facing configuration (CLI exit code 2).
struct ConfigError : Error {
  using Error::Error;
};

// Non-finite values, divergence (CLI exit code 3).
struct NumericError : Error {
  using Error::Error;
};

// API misuse, e.g. backward before forward.
struct UsageError : Error {
  using Error::Error;
};

inline uint64_t splitmix64(uint64_t& state) {
  uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

// Deterministic RNG. Distributions are hand-rolled on top of xoshiro256**
// so that streams are identical across standard libraries; child streams
// are derived from (seed, salt) alone, independent of draw history.
class Rng {
 public:
  explicit Rng(uint64_t seed) : seed_(seed) {
    uint64_t sm = seed;
    for (auto& word : s_) word = splitmix64(sm);
  }

  uint64_t seed() const { return seed_; }

  uint64_t next_u64() {
    const uint64_t result = rotl(s_[1] * 5, 7) * 9;
    const uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  // [0, 1)
  double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // [0, n)
  uint64_t uniform_int(uint64_t n) {
    return uint64_t((static_cast<__uint128_t>(next_u64()) * n) >> 64);
  }

  double normal() {
    // Box-Muller, fresh pair each call.
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * std::numbers::pi * u2);
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[uniform_int(i)]);
    }
  }

  // k distinct indices from [0, n), ascending.
  std::vector<int> sample_indices(int n, int k);

  // Deterministic child stream; does not disturb this stream.
  Rng child(uint64_t salt) const {
    uint64_t s = seed_ ^ (salt * 0x9E3779B97F4A7C15ULL + 0xD1B54A32D192ED03ULL);
    return Rng(splitmix64(s));
  }

 private:
  static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

  uint64_t seed_;
  uint64_t s_[4];
};

inline std::vector<int> Rng::sample_indices(int n, int k) {
  std::vector<int> all(n);
  for (int i = 0; i < n; ++i) all[i] = i;
  for (int i = 0; i < k; ++i) {
    std::swap(all[i], all[i + int(uniform_int(uint64_t(n - i)))]);
  }
  std::vector<int> picked(all.begin(), all.begin() + k);
  std::sort(picked.begin(), picked.end());
  return picked;
}

}  // namespace boxprune
