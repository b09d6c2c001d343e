#include "ddpt/rng.hpp"

#include "ddpt/errors.hpp"

#include <cmath>
#include <numbers>

namespace ddpt {

std::uint64_t mix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

CounterRng::CounterRng(std::uint64_t seed, std::uint64_t stream)
    : key_(mix64(seed) ^ mix64(stream * 0xD1B54A32D192ED03ULL + 0x8CB92BA72F3D8DD7ULL)) {}

CounterRng::result_type CounterRng::operator()() {
  const std::uint64_t c = counter_++;
  return mix64(key_ ^ mix64(c));
}

double CounterRng::uniform() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

double CounterRng::uniform_open() {
  return (static_cast<double>((*this)() >> 11) + 0.5) * 0x1.0p-53;
}

// Distributions are written out rather than taken from <random> so that a
// seed reproduces the same draws under any standard library.
double CounterRng::normal() {
  // Box-Muller, one draw per call.
  const double u1 = uniform_open();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

double CounterRng::gamma(double shape) {
  if (!(shape > 0.0)) throw DomainError("gamma: shape must be positive");
  if (shape < 1.0) {
    // Boost to shape + 1 and rescale by u^(1/shape).
    const double u = uniform_open();
    return gamma(shape + 1.0) * std::pow(u, 1.0 / shape);
  }
  // Marsaglia-Tsang.
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x = 0.0;
    double v = 0.0;
    do {
      x = normal();
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = uniform_open();
    if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
    if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
  }
}

double CounterRng::beta(double a, double b) {
  const double x = gamma(a);
  const double y = gamma(b);
  const double total = x + y;
  if (total == 0.0) return uniform() < a / (a + b) ? 1.0 : 0.0;
  return x / total;
}

double CounterRng::chi_squared(double dof) { return 2.0 * gamma(0.5 * dof); }

Vec sample_gaussian(CounterRng& rng, const Vec& mean, const Mat& cov) {
  const Eigen::LLT<Mat> llt(cov);
  if (llt.info() != Eigen::Success) throw NumericalError("sample_gaussian: covariance not SPD");
  Vec z(mean.size());
  for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = rng.normal();
  return mean + llt.matrixL() * z;
}

Mat sample_inverse_wishart(CounterRng& rng, double dof, const Mat& scale) {
  const auto dim = scale.rows();
  if (!(dof > dim - 1)) throw DomainError("sample_inverse_wishart: dof must exceed dim - 1");
  // Precision ~ Wishart(dof, scale^{-1}); precision = L Z Z^T L^T with
  // L L^T = scale^{-1} and Z the Bartlett lower-triangular factor.
  const Mat scale_inv = scale.llt().solve(Mat::Identity(dim, dim));
  const Eigen::LLT<Mat> llt(0.5 * (scale_inv + scale_inv.transpose()));
  if (llt.info() != Eigen::Success) throw NumericalError("sample_inverse_wishart: scale not SPD");
  Mat z = Mat::Zero(dim, dim);
  for (Eigen::Index i = 0; i < dim; ++i) {
    z(i, i) = std::sqrt(rng.chi_squared(dof - static_cast<double>(i)));
    for (Eigen::Index j = 0; j < i; ++j) z(i, j) = rng.normal();
  }
  const Mat lz = llt.matrixL() * z;
  const Mat precision = lz * lz.transpose();
  Mat cov = precision.llt().solve(Mat::Identity(dim, dim));
  return 0.5 * (cov + cov.transpose());
}

}  // namespace ddpt
