#pragma once

#include "ddpt/linalg.hpp"
#include "ddpt/mathcore.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace ddpt {

/// Fixed prior constants of the two-layer model.
struct Hyperparameters {
  double alpha = 3.0;   // top-layer DP concentration
  double beta = 1e-3;   // noise-layer DP concentration
  Vec mu0;              // prior mean of group offsets
  Mat Sigma0;           // prior covariance of group offsets
  Vec c_a_sq;           // diagonal of C_A (dictionary column variances)
  Vec eps0;             // prior mean of noise means
  Mat Omega0;           // prior covariance of noise means
  double nu0 = 0.0;     // inverse-Wishart dof
  Mat B0;               // inverse-Wishart scale
  int T_max = 30;
  int K_max = 10;

  int dim() const { return static_cast<int>(mu0.size()); }
  /// Throws DomainError / DimensionError on inconsistent values.
  void validate() const;
};

/// alpha = 3, beta = 1e-3, zero means, identity scale matrices, nu0 = d,
/// T_max = 30, K_max = 10.
Hyperparameters default_hyperparameters(int d);

/// q(mu_t) q(A_t) for one low-rank group. Dictionary columns carry
/// independent Gaussian posteriors.
struct GroupPosterior {
  Vec mu_mean;
  Mat mu_cov;
  Mat A_mean;                  // d x d, column v is <a_v>
  std::vector<Mat> A_col_cov;  // covariance of each column

  Mat mu_second_moment() const;
  /// <A^T A>: diagonal <a_v^T a_v>, off-diagonal <a_i>^T <a_j>.
  Mat gram() const;
  /// E[A^T P A] for a fixed data-space matrix P. Equals p * gram() when
  /// P = p I.
  Mat weighted_gram(const Mat& p) const;
  /// sum_v C_v, the summed column covariance.
  Mat column_cov_sum() const;
};

/// q(u_{t,k}) q(Upsilon_{t,k}).
struct NoiseComponentPosterior {
  Vec u_mean;
  Mat u_cov;
  InverseWishartParams iw;

  Mat u_second_moment() const;
};

/// Mean-field posterior over sticks, group and noise parameters, and the
/// two layers of assignments.
struct VariationalState {
  std::vector<BetaParams> top_sticks;                  // T
  std::vector<GroupPosterior> groups;                  // T
  std::vector<std::vector<BetaParams>> noise_sticks;   // T x K
  std::vector<std::vector<NoiseComponentPosterior>> noise;  // T x K
  Mat resp_group;               // N x T, q_i(t)
  std::vector<Mat> resp_noise;  // T entries, N x K, q_i(k|t)

  int group_count() const { return static_cast<int>(groups.size()); }
  int component_count() const { return noise.empty() ? 0 : static_cast<int>(noise.front().size()); }
  Eigen::Index patch_count() const { return resp_group.rows(); }
  int dim() const { return groups.empty() ? 0 : static_cast<int>(groups.front().mu_mean.size()); }

  /// Row-stochastic responsibilities within tol and consistent shapes.
  void check_invariants(double tol = 1e-12) const;
};

/// State whose every factor equals its prior, with uniform responsibilities
/// over n patches.
VariationalState prior_state(const Hyperparameters& hyper, Eigen::Index n);

/// Reset responsibilities to uniform for n patches.
void attach_patches(VariationalState& state, Eigen::Index n);

/// Expected stick weights E[pi_t] with the last stick closed at 1.
std::vector<double> expected_stick_weights(std::span<const BetaParams> sticks);

/// Move the kappa-weighted noise mean of each group into the group offset,
/// leaving mu_t + u_{t,k} unchanged for every k.
void recenter_noise_means(VariationalState& state);

/// Moments of q(y_{i,t}). Pairs not stored hold the prior N(0, I).
struct ProjectionEntry {
  Eigen::Index patch = 0;
  Vec mean;
  Mat second_moment;    // <y y^T>
  double logdet_cov = 0.0;
};

class ProjectionPosterior {
 public:
  ProjectionPosterior() = default;
  ProjectionPosterior(Eigen::Index patches, int groups, int dim);

  /// nullptr when (i, t) holds the prior.
  const ProjectionEntry* find(Eigen::Index i, int t) const;
  Vec mean(Eigen::Index i, int t) const;
  Mat second_moment(Eigen::Index i, int t) const;

  /// Entries of group t in increasing patch order.
  const std::vector<ProjectionEntry>& group_entries(int t) const {
    return entries_[static_cast<std::size_t>(t)];
  }
  /// Entries must be added in increasing patch order per group.
  void append(int t, ProjectionEntry entry);

  Eigen::Index patch_count() const { return patches_; }
  int group_count() const { return static_cast<int>(entries_.size()); }
  int dim() const { return dim_; }
  std::size_t stored() const;

 private:
  Eigen::Index patches_ = 0;
  int dim_ = 0;
  std::vector<std::vector<ProjectionEntry>> entries_;
  std::vector<std::vector<int>> slot_;  // [t][i] -> position or -1
};

/// Parameters of one draw of the generative model.
struct GenerativeParams {
  std::vector<double> pi;
  std::vector<std::vector<double>> kappa;
  std::vector<Vec> mu;
  std::vector<Mat> A;
  std::vector<std::vector<Vec>> u;
  std::vector<std::vector<Mat>> upsilon;
};

struct SyntheticPatches {
  Mat data;                    // n x d noisy patches
  Mat clean;                   // n x d, A y + mu
  std::vector<int> group;      // 0-based
  std::vector<int> component;  // 0-based within the group
};

/// Sticks truncated at T (resp. Ks[t]) with the last piece closed, group
/// offsets and dictionaries from their priors (dictionary truncated to
/// ranks[t] by zeroing trailing singular directions), noise parameters from
/// the conjugate base.
GenerativeParams draw_generative_params(const Hyperparameters& hyper, int groups,
                                        std::span<const int> components,
                                        std::span<const int> ranks, std::uint64_t seed);

/// z ~ Mult(pi), z~ ~ Mult(kappa_z), y ~ N(0, I), x = A y + mu + e with
/// e ~ N(u, Upsilon). Upsilon may be singular.
SyntheticPatches sample_from_params(const GenerativeParams& params, Eigen::Index n,
                                    std::uint64_t seed);

struct GenerativeSample {
  GenerativeParams params;
  SyntheticPatches patches;
};

GenerativeSample sample_noisy_patches(const Hyperparameters& hyper, int groups,
                                      std::span<const int> components,
                                      std::span<const int> ranks, Eigen::Index n,
                                      std::uint64_t seed);

/// Model-state file: "DDPT", u32 version 1, then little-endian float64 in
/// the order documented in model_io.cpp. Responsibilities are not stored.
struct ModelFile {
  Hyperparameters hyper;
  VariationalState state;
};

void save_model(const std::filesystem::path& path, const Hyperparameters& hyper,
                const VariationalState& state);
ModelFile load_model(const std::filesystem::path& path);

std::vector<unsigned char> encode_model(const Hyperparameters& hyper, const VariationalState& state);
ModelFile decode_model(std::span<const unsigned char> bytes);

}  // namespace ddpt
