#include "ddpt/errors.hpp"
#include "ddpt/mathcore.hpp"

#include <doctest.h>

#include <boost/math/special_functions/digamma.hpp>
#include <boost/math/special_functions/gamma.hpp>
#include <boost/multiprecision/cpp_bin_float.hpp>

#include <cmath>
#include <limits>
#include <numbers>
#include <random>

using namespace ddpt;
using boost::multiprecision::cpp_bin_float_50;

namespace {

Mat random_spd(int n, std::mt19937_64& gen, double ridge = 0.5) {
  std::normal_distribution<double> g;
  Mat a(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) a(i, j) = g(gen);
  return a * a.transpose() / n + ridge * Mat::Identity(n, n);
}

// Determinant by cofactor expansion, fine for the 5x5 oracle.
double cofactor_det(const Mat& m) {
  const auto n = m.rows();
  if (n == 1) return m(0, 0);
  double det = 0.0;
  for (Eigen::Index j = 0; j < n; ++j) {
    Mat minor(n - 1, n - 1);
    for (Eigen::Index r = 1; r < n; ++r) {
      Eigen::Index cc = 0;
      for (Eigen::Index c = 0; c < n; ++c) {
        if (c == j) continue;
        minor(r - 1, cc++) = m(r, c);
      }
    }
    det += ((j % 2) ? -1.0 : 1.0) * m(0, j) * cofactor_det(minor);
  }
  return det;
}

Mat adjugate_inverse(const Mat& m) {
  const auto n = m.rows();
  const double det = cofactor_det(m);
  Mat inv(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      Mat minor(n - 1, n - 1);
      Eigen::Index rr = 0;
      for (Eigen::Index r = 0; r < n; ++r) {
        if (r == i) continue;
        Eigen::Index cc = 0;
        for (Eigen::Index c = 0; c < n; ++c) {
          if (c == j) continue;
          minor(rr, cc++) = m(r, c);
        }
        ++rr;
      }
      inv(j, i) = (((i + j) % 2) ? -1.0 : 1.0) * cofactor_det(minor) / det;
    }
  }
  return inv;
}

// KL between inverse-gamma laws IG(a1, b1) || IG(a0, b0).
double kl_inverse_gamma(double a1, double b1, double a0, double b0) {
  using boost::math::digamma;
  using boost::math::lgamma;
  return (a1 - a0) * digamma(a1) - lgamma(a1) + lgamma(a0) + a0 * (std::log(b1) - std::log(b0)) +
         a1 * (b0 - b1) / b1;
}

}  // namespace

TEST_CASE("digamma matches the analytic values") {
  CHECK(digamma(1.0) == doctest::Approx(-0.5772156649015329).epsilon(1e-14));
  CHECK(digamma(2.0) == doctest::Approx(0.4227843350984671).epsilon(1e-14));
  CHECK(digamma(0.5) == doctest::Approx(-1.9635100260214235).epsilon(1e-14));
  CHECK(digamma(2.0) - digamma(1.0) == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("digamma agrees with a 50-digit oracle") {
  std::mt19937_64 gen(7);
  std::uniform_real_distribution<double> logu(std::log(1e-6), std::log(1e6));
  for (int i = 0; i < 2000; ++i) {
    const double x = std::exp(logu(gen));
    const double ref = static_cast<double>(boost::math::digamma(cpp_bin_float_50(x)));
    // Near zero |psi| ~ 1/x and a double cannot hold 1e-12 absolute; the
    // bound is absolute for |psi| <= 1 and relative above.
    CHECK(std::abs(digamma(x) - ref) <= 1e-12 * std::max(1.0, std::abs(ref)));
  }
}

TEST_CASE("digamma rejects its pole and non-finite input") {
  CHECK_THROWS_AS(digamma(0.0), DomainError);
  CHECK_THROWS_AS(digamma(-1.5), DomainError);
  CHECK_THROWS_AS(digamma(std::numeric_limits<double>::quiet_NaN()), DomainError);
  CHECK_THROWS_AS(digamma(std::numeric_limits<double>::infinity()), DomainError);
}

TEST_CASE("digamma recurrence holds on random points") {
  std::mt19937_64 gen(11);
  std::uniform_real_distribution<double> u(0.0, 50.0);
  for (int i = 0; i < 1000; ++i) {
    double x = u(gen);
    if (x == 0.0) x = 1e-3;
    const double lhs = digamma(x + 1.0) - digamma(x);
    CHECK(std::abs(lhs - 1.0 / x) <= 1e-10 * std::max(1.0, 1.0 / x));
  }
}

TEST_CASE("log multivariate gamma equals the product formula") {
  for (int dim : {1, 2, 5, 64}) {
    for (double a : {32.0, 40.5, 100.25}) {
      double ref = 0.25 * dim * (dim - 1) * std::log(std::numbers::pi);
      for (int j = 1; j <= dim; ++j) ref += boost::math::lgamma(a + 0.5 * (1 - j));
      CHECK(log_multivariate_gamma(a, dim) == doctest::Approx(ref).epsilon(1e-12));
    }
  }
}

TEST_CASE("expected log beta terms") {
  auto e = expected_log_beta_terms({1.0, 1.0});
  CHECK(e.log_v == doctest::Approx(-1.0).epsilon(1e-14));
  CHECK(e.log_1mv == doctest::Approx(-1.0).epsilon(1e-14));
  e = expected_log_beta_terms({2.0, 2.0});
  CHECK(e.log_v == doctest::Approx(-5.0 / 6.0).epsilon(1e-14));
  CHECK(e.log_1mv == doctest::Approx(-5.0 / 6.0).epsilon(1e-14));
  for (double a : {0.01, 0.7, 3.0, 250.0}) {
    const auto s = expected_log_beta_terms({a, a});
    CHECK(s.log_v == s.log_1mv);
  }
}

TEST_CASE("Jensen bound on E ln v") {
  std::mt19937_64 gen(3);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  for (int i = 0; i < 500; ++i) {
    const double a = std::pow(10.0, u(gen));
    const double b = std::pow(10.0, u(gen));
    const auto e = expected_log_beta_terms({a, b});
    CHECK(std::exp(e.log_v) < a / (a + b));
    CHECK(std::exp(e.log_1mv) < b / (a + b));
  }
}

TEST_CASE("inverse-Wishart expectations, scalar cases") {
  auto e = iw_expectations({4.0, Mat::Constant(1, 1, 2.0)});
  CHECK(e.precision(0, 0) == doctest::Approx(2.0).epsilon(1e-15));
  e = iw_expectations({3.0, Mat::Constant(1, 1, 2.0)});
  CHECK(e.logdet == doctest::Approx(-0.03648997397857652).epsilon(1e-12));
}

TEST_CASE("inverse-Wishart log-determinant against Monte Carlo") {
  // IW(nu, B) in one dimension is inverse-gamma(nu / 2, B / 2).
  std::mt19937_64 gen(21);
  std::gamma_distribution<double> g(1.5, 1.0);
  const int n = 1000000;
  double sum = 0.0;
  double sq = 0.0;
  for (int i = 0; i < n; ++i) {
    const double l = std::log(1.0 / g(gen));  // B / 2 = 1
    sum += l;
    sq += l * l;
  }
  const double mean = sum / n;
  const double se = std::sqrt((sq / n - mean * mean) / n);
  const auto e = iw_expectations({3.0, Mat::Constant(1, 1, 2.0)});
  CHECK(std::abs(e.logdet - mean) < 3.0 * se);
}

TEST_CASE("inverse-Wishart log-determinant shifts by D ln c under scaling") {
  std::mt19937_64 gen(5);
  const int d = 6;
  const Mat b = random_spd(d, gen);
  const auto e1 = iw_expectations({9.0, b});
  const auto e2 = iw_expectations({9.0, 3.5 * b});
  CHECK(e2.logdet - e1.logdet == doctest::Approx(d * std::log(3.5)).epsilon(1e-12));
}

TEST_CASE("inverse-Wishart precision is SPD") {
  std::mt19937_64 gen(8);
  for (int i = 0; i < 50; ++i) {
    const int d = 1 + i % 9;
    const auto e = iw_expectations({d + 0.5 + i, random_spd(d, gen, 0.01)});
    CHECK((e.precision - e.precision.transpose()).norm() <= 1e-12 * e.precision.norm());
    const Eigen::SelfAdjointEigenSolver<Mat> es(e.precision);
    CHECK(es.eigenvalues().minCoeff() > 0.0);
  }
}

TEST_CASE("spd_solve trivial systems") {
  const Vec v = Vec::LinSpaced(4, -1.0, 2.0);
  CHECK((spd_solve(Mat::Identity(4, 4), v) - v).norm() == 0.0);
  CHECK((spd_solve(2.0 * Mat::Identity(4, 4), v) - v / 2.0).norm() <= 1e-15);
}

TEST_CASE("spd_solve matches the adjugate inverse") {
  std::mt19937_64 gen(13);
  for (int rep = 0; rep < 20; ++rep) {
    const Mat a = random_spd(5, gen);
    const Mat inv = adjugate_inverse(a);
    CHECK((spd_solve(a, Mat::Identity(5, 5)) - inv).norm() <= 1e-10 * inv.norm());
  }
}

TEST_CASE("spd_solve round-trips up to 64x64") {
  std::mt19937_64 gen(17);
  std::normal_distribution<double> g;
  for (int n : {1, 2, 7, 16, 33, 64}) {
    const Mat a = random_spd(n, gen, 0.1);
    Mat rhs(n, 3);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < 3; ++j) rhs(i, j) = g(gen);
    const Mat out = spd_solve(a, rhs);
    CHECK((a * out - rhs).norm() / rhs.norm() < 1e-10);
  }
}

TEST_CASE("SpdFactor jitter policy") {
  Mat singular = Mat::Zero(3, 3);
  singular(0, 0) = 1.0;
  singular(1, 1) = 1.0;
  const SpdFactor f(singular);
  CHECK(f.jittered());
  CHECK(std::isfinite(f.logdet()));
  CHECK_FALSE(SpdFactor(Mat::Identity(3, 3)).jittered());
  CHECK_THROWS_AS(SpdFactor(-Mat::Identity(3, 3)), NumericalError);
}

TEST_CASE("KL divergences") {
  CHECK(kl_beta({2.0, 3.0}, {2.0, 3.0}) == doctest::Approx(0.0));
  // Closed form for Beta(a, 1) || Beta(1, 1): ln a + 1/a - 1.
  CHECK(kl_beta({4.0, 1.0}, {1.0, 1.0}) == doctest::Approx(std::log(4.0) - 0.75).epsilon(1e-12));

  const Vec m1 = Vec::Constant(1, 0.3);
  const Vec m0 = Vec::Constant(1, -0.2);
  const Mat s1 = Mat::Constant(1, 1, 0.5);
  const Mat s0 = Mat::Constant(1, 1, 2.0);
  const double ref = 0.5 * (0.5 / 2.0 + 0.25 / 2.0 - 1.0 + std::log(2.0 / 0.5));
  CHECK(kl_gaussian(m1, s1, m0, s0) == doctest::Approx(ref).epsilon(1e-14));

  for (double nu : {1.5, 3.0, 20.0}) {
    for (double b : {0.5, 2.0, 7.0}) {
      const double ref_ig = kl_inverse_gamma(nu / 2.0, b / 2.0, 1.0, 0.5);
      CHECK(kl_inverse_wishart({nu, Mat::Constant(1, 1, b)}, {2.0, Mat::Constant(1, 1, 1.0)}) ==
            doctest::Approx(ref_ig).epsilon(1e-11));
    }
  }
  std::mt19937_64 gen(2);
  const Mat b = random_spd(4, gen);
  CHECK(std::abs(kl_inverse_wishart({7.0, b}, {7.0, b})) < 1e-12);
  CHECK(kl_inverse_wishart({9.0, 2.0 * b}, {7.0, b}) > 0.0);
}
