#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <numeric>
#include <random>
#include <vector>

#include "fair_context/error.hpp"

namespace fairctx {

// Random streams are built on std::mt19937_64, whose output sequence is fixed
// by the C++ standard. The std:: distributions are not (their algorithms are
// implementation-defined), so the helpers below draw directly from the raw
// 64-bit output. Identifier of this scheme, recorded in run manifests:
inline constexpr const char* kRngAlgorithm = "mt19937_64+splitmix64/v1";

inline constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Stream seed for (seed_index, fold): base ^ (seed_index * 100003 + fold).
inline constexpr std::uint64_t stream_seed(std::uint64_t base, std::uint64_t seed_index,
                                           std::uint64_t fold) noexcept {
  return base ^ (seed_index * 100003ULL + fold);
}

/// Tags separating independent uses of one stream.
enum class Purpose : std::uint64_t {
  holdout = 1,
  calibration_split = 2,
  kfold = 3,
  balanced = 4,
  cap = 5,
};

inline constexpr std::uint64_t purpose_seed(std::uint64_t stream, Purpose purpose) noexcept {
  return splitmix64(stream ^ splitmix64(static_cast<std::uint64_t>(purpose)));
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(splitmix64(seed)) {}

  std::uint64_t next() { return engine_(); }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  /// Uniform integer in [0, n), unbiased (rejection of the short tail).
  std::uint64_t below(std::uint64_t n) {
    if (n <= 1) return 0;
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % n;
    std::uint64_t x;
    do {
      x = next();
    } while (x >= limit);
    return x % n;
  }

  bool bernoulli(double p) { return uniform() < p; }

  /// Standard normal via Box-Muller (one variate per call).
  double normal() {
    double u1;
    do {
      u1 = uniform();
    } while (u1 <= 0.0);
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  template <typename T>
  void shuffle(std::vector<T>& values) {
    for (std::size_t i = values.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(values[i - 1], values[j]);
    }
  }

  /// k distinct elements of `values` chosen uniformly, returned sorted.
  template <typename T>
  std::vector<T> sample(std::vector<T> values, std::size_t k) {
    require(k <= values.size(), ErrorCode::invalid_argument, "sample size exceeds population");
    for (std::size_t i = 0; i < k; ++i) {
      const std::size_t j = i + static_cast<std::size_t>(below(values.size() - i));
      std::swap(values[i], values[j]);
    }
    values.resize(k);
    std::sort(values.begin(), values.end());
    return values;
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace fairctx
