#include "ddpt/mathcore.hpp"

#include "ddpt/errors.hpp"

#include <cmath>
#include <numbers>
#include <string>

namespace ddpt {

double digamma(double x) {
  if (!(x > 0.0) || !std::isfinite(x)) {
    throw DomainError("digamma: argument must be positive and finite, got " +
                      std::to_string(x));
  }
  double result = 0.0;
  // Shift into the asymptotic range with psi(x) = psi(x + 1) - 1/x.
  while (x < 10.0) {
    result -= 1.0 / x;
    x += 1.0;
  }
  const double inv = 1.0 / x;
  const double inv2 = inv * inv;
  // Bernoulli-number series: B_{2n} / (2n x^{2n}) for n = 1..6.
  const double series =
      inv2 * (1.0 / 12.0 -
              inv2 * (1.0 / 120.0 -
                      inv2 * (1.0 / 252.0 -
                              inv2 * (1.0 / 240.0 -
                                      inv2 * (1.0 / 132.0 -
                                              inv2 * (691.0 / 32760.0))))));
  result += std::log(x) - 0.5 * inv - series;
  return result;
}

double log_multivariate_gamma(double a, int dim) {
  double out = 0.25 * dim * (dim - 1) * std::log(std::numbers::pi);
  for (int i = 1; i <= dim; ++i) out += std::lgamma(a + 0.5 * (1 - i));
  return out;
}

LogBetaExpectations expected_log_beta_terms(const BetaParams& p) {
  if (!(p.a > 0.0) || !(p.b > 0.0)) {
    throw DomainError("expected_log_beta_terms: Beta parameters must be positive");
  }
  const double total = digamma(p.a + p.b);
  return {digamma(p.a) - total, digamma(p.b) - total};
}

SpdFactor::SpdFactor(const Mat& a) {
  if (a.rows() != a.cols()) throw DimensionError("SpdFactor: matrix is not square");
  if (!a.allFinite()) throw NumericalError("SpdFactor: non-finite matrix entries");
  llt_.compute(a);
  if (llt_.info() == Eigen::Success) return;
  const double dim = static_cast<double>(a.rows());
  const double trace = a.trace();
  const double jitter = 1e-9 * std::abs(trace) / dim;
  Mat shifted = a;
  shifted.diagonal().array() += jitter;
  llt_.compute(shifted);
  jittered_ = true;
  if (llt_.info() != Eigen::Success) {
    throw NumericalError("SpdFactor: matrix not positive definite after jitter");
  }
}

Mat SpdFactor::solve(const Mat& rhs) const { return llt_.solve(rhs); }
Vec SpdFactor::solve(const Vec& rhs) const { return llt_.solve(rhs); }

Mat SpdFactor::inverse() const {
  const auto n = llt_.rows();
  Mat inv = llt_.solve(Mat::Identity(n, n));
  return 0.5 * (inv + inv.transpose());
}

double SpdFactor::logdet() const {
  const Mat& l = llt_.matrixLLT();
  return 2.0 * l.diagonal().array().log().sum();
}

Mat spd_solve(const Mat& a, const Mat& rhs) {
  if (a.rows() != rhs.rows()) throw DimensionError("spd_solve: row mismatch");
  return SpdFactor(a).solve(rhs);
}

InverseWishartExpectations iw_expectations(const InverseWishartParams& p) {
  const auto dim = static_cast<int>(p.scale.rows());
  if (!(p.dof > dim - 1)) {
    throw DomainError("iw_expectations: dof must exceed dim - 1");
  }
  const SpdFactor factor(p.scale);
  InverseWishartExpectations out;
  out.precision = p.dof * factor.inverse();
  double psi_sum = 0.0;
  for (int i = 1; i <= dim; ++i) psi_sum += digamma(0.5 * (p.dof + 1 - i));
  out.logdet = factor.logdet() - dim * std::numbers::ln2 - psi_sum;
  return out;
}

double kl_beta(const BetaParams& q, const BetaParams& p) {
  const double log_beta_q = std::lgamma(q.a) + std::lgamma(q.b) - std::lgamma(q.a + q.b);
  const double log_beta_p = std::lgamma(p.a) + std::lgamma(p.b) - std::lgamma(p.a + p.b);
  const double psi_sum = digamma(q.a + q.b);
  return log_beta_p - log_beta_q + (q.a - p.a) * (digamma(q.a) - psi_sum) +
         (q.b - p.b) * (digamma(q.b) - psi_sum);
}

double kl_gaussian(const Vec& mean_q, const Mat& cov_q, const Vec& mean_p,
                   const Mat& cov_p) {
  const SpdFactor prior(cov_p);
  const SpdFactor post(cov_q);
  const Vec diff = mean_q - mean_p;
  const double trace_term = prior.solve(cov_q).trace();
  const double quad = diff.dot(prior.solve(diff));
  const double dim = static_cast<double>(mean_q.size());
  return 0.5 * (trace_term + quad - dim + prior.logdet() - post.logdet());
}

double kl_inverse_wishart(const InverseWishartParams& q,
                          const InverseWishartParams& p) {
  const auto dim = static_cast<int>(q.scale.rows());
  const SpdFactor fq(q.scale);
  const SpdFactor fp(p.scale);
  double psi_sum = 0.0;
  for (int i = 1; i <= dim; ++i) psi_sum += digamma(0.5 * (q.dof + 1 - i));
  const double e_logdet = fq.logdet() - dim * std::numbers::ln2 - psi_sum;
  const double dnu = q.dof - p.dof;
  const double trace_term = fq.solve(p.scale).trace();
  return 0.5 * q.dof * fq.logdet() - 0.5 * p.dof * fp.logdet() -
         0.5 * dnu * dim * std::numbers::ln2 -
         log_multivariate_gamma(0.5 * q.dof, dim) +
         log_multivariate_gamma(0.5 * p.dof, dim) - 0.5 * dnu * e_logdet -
         0.5 * q.dof * dim + 0.5 * q.dof * trace_term;
}

}  // namespace ddpt
