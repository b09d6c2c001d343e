#pragma once

#include "ddpt/linalg.hpp"
#include "ddpt/model.hpp"

#include <functional>
#include <vector>

namespace ddpt {

/// Caps the worker count used by the parallel kernels; n <= 0 restores the
/// runtime default.
void set_thread_count(int n);
int thread_count();

/// Runs body(j) for j in [0, n) on the worker pool. Each index is handled by
/// one worker; the first exception thrown by any body is rethrown after the
/// loop joins.
void parallel_for(std::ptrdiff_t n, const std::function<void(std::ptrdiff_t)>& body);

/// Expectations of one noise component combined with its group, frozen for a
/// phase.
struct ComponentMoments {
  Mat precision;     // P = E[Upsilon^{-1}]
  double logdet = 0.0;  // E ln |Upsilon|
  Vec offset;        // c = <mu> + <u>
  Mat gram;          // G = E[A^T P A]
  Mat proj;          // H = <A>^T P
  double trace_cov = 0.0;  // tr(P (Cov mu + Cov u))
  double trace_gram = 0.0;  // tr(G)
};

struct ModelMoments {
  int groups = 0;
  int components = 0;
  int dim = 0;
  std::vector<ComponentMoments> items;  // t * components + k

  const ComponentMoments& at(int t, int k) const {
    return items[static_cast<std::size_t>(t * components + k)];
  }
};

ModelMoments compute_moments(const VariationalState& state);

/// Pairs (i, t) with q_i(t) > threshold get q(y_{i,t}); the rest keep the
/// prior.
ProjectionPosterior compute_projections(const Mat& x, const VariationalState& state,
                                        const ModelMoments& mom, double threshold);

/// Adds q(y_{i,t}) for pairs above the threshold that proj does not hold,
/// keeping stored entries. Returns the number of pairs added.
std::size_t extend_projections(const Mat& x, const VariationalState& state, const ModelMoments& mom,
                               double threshold, ProjectionPosterior& proj);

/// Expected log-likelihood l[t](i, k) = E ln N(x_i | A y + mu + u, Upsilon)
/// under q(y_{i,t}) and the global factors.
std::vector<Mat> loglik_table(const Mat& x, const ModelMoments& mom,
                              const ProjectionPosterior& proj);

/// Weighted moments of the data and latent codes of one component, weights
/// w_i = q_i(t) q_i(k|t).
struct ComponentStats {
  double mass = 0.0;  // lambda
  Vec sx;             // sum w x
  Mat sxx;            // sum w x x^T
  Vec sm;             // sum w <y>
  Mat sxm;            // sum w x <y>^T
  Mat syy;            // sum w <y y^T>
};

struct Sufficients {
  int groups = 0;
  int components = 0;
  std::vector<double> delta;          // per group, sum_i q_i(t)
  std::vector<ComponentStats> stats;  // t * components + k

  const ComponentStats& at(int t, int k) const {
    return stats[static_cast<std::size_t>(t * components + k)];
  }
  double lambda(int t, int k) const { return at(t, k).mass; }
};

Sufficients accumulate_statistics(const Mat& x, const VariationalState& state,
                                  const ProjectionPosterior& proj);

/// Straightforward serial versions of the kernels above, used to validate
/// them and as the benchmark baseline.
namespace reference {

ProjectionPosterior compute_projections(const Mat& x, const VariationalState& state,
                                        const ModelMoments& mom, double threshold);
std::vector<Mat> loglik_table(const Mat& x, const ModelMoments& mom,
                              const ProjectionPosterior& proj);
Sufficients accumulate_statistics(const Mat& x, const VariationalState& state,
                                  const ProjectionPosterior& proj);

}  // namespace reference

}  // namespace ddpt
