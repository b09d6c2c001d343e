#pragma once

#include "ddpt/linalg.hpp"

#include <optional>

namespace ddpt {

/// Digamma function psi(x) = d/dx ln Gamma(x), x > 0.
/// Throws DomainError for x <= 0 or NaN.
double digamma(double x);

/// ln Gamma_D(a), the multivariate gamma function.
double log_multivariate_gamma(double a, int dim);

struct BetaParams {
  double a = 1.0;
  double b = 1.0;
};

struct LogBetaExpectations {
  double log_v = 0.0;    // E[ln v]
  double log_1mv = 0.0;  // E[ln (1 - v)]
};

/// E[ln v] and E[ln(1-v)] for v ~ Beta(a, b), including the psi(a+b) term.
LogBetaExpectations expected_log_beta_terms(const BetaParams& p);

struct InverseWishartParams {
  double dof = 1.0;
  Mat scale;
};

struct InverseWishartExpectations {
  Mat precision;  // E[Upsilon^{-1}] = dof * scale^{-1}
  double logdet = 0.0;  // E[ln |Upsilon|]
};

InverseWishartExpectations iw_expectations(const InverseWishartParams& p);

/// Cholesky factor of an SPD matrix with a single jitter retry: on failure
/// 1e-9 * trace(A) / dim is added to the diagonal; a second failure throws
/// NumericalError.
class SpdFactor {
 public:
  explicit SpdFactor(const Mat& a);

  Mat solve(const Mat& rhs) const;
  Vec solve(const Vec& rhs) const;
  Mat inverse() const;
  double logdet() const;
  bool jittered() const { return jittered_; }
  Eigen::Index dim() const { return llt_.rows(); }

 private:
  Eigen::LLT<Mat> llt_;
  bool jittered_ = false;
};

/// A^{-1} rhs for SPD A, jitter policy as SpdFactor.
Mat spd_solve(const Mat& a, const Mat& rhs);

/// KL(Beta(q) || Beta(p)).
double kl_beta(const BetaParams& q, const BetaParams& p);

/// KL(N(mq, Sq) || N(mp, Sp)).
double kl_gaussian(const Vec& mean_q, const Mat& cov_q, const Vec& mean_p,
                   const Mat& cov_p);

/// KL(IW(q) || IW(p)) between inverse-Wishart distributions.
double kl_inverse_wishart(const InverseWishartParams& q,
                          const InverseWishartParams& p);

}  // namespace ddpt
