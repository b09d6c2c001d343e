#pragma once

#include "ddpt/linalg.hpp"

#include <cstdint>
#include <limits>

namespace ddpt {

/// Counter-based 64-bit generator. Output n is a keyed hash of n, so a
/// (seed, stream) pair fully determines the sequence and distinct streams
/// can be consumed in any order. Satisfies UniformRandomBitGenerator.
class CounterRng {
 public:
  using result_type = std::uint64_t;

  explicit CounterRng(std::uint64_t seed, std::uint64_t stream = 0);

  result_type operator()();

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform();
  /// Uniform double in (0, 1).
  double uniform_open();
  double normal();
  double gamma(double shape);
  double beta(double a, double b);
  double chi_squared(double dof);

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

std::uint64_t mix64(std::uint64_t x);

/// Draw from N(mean, cov).
Vec sample_gaussian(CounterRng& rng, const Vec& mean, const Mat& cov);

/// Draw from the inverse-Wishart IW(dof, scale) via the Bartlett decomposition.
Mat sample_inverse_wishart(CounterRng& rng, double dof, const Mat& scale);

}  // namespace ddpt
