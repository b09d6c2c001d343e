#pragma once

#include "ddpt/kernels.hpp"
#include "ddpt/model.hpp"

#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace ddpt {

enum class RecenterMode {
  every_sweep,  // after each noise-mean update
  on_output,    // once, after the last sweep
  off,
};

struct InferenceOptions {
  /// Bare psi(a) - psi(b) stick terms in the responsibility updates.
  bool paper_literal_sticks = false;
  /// Halve the expected residual scatter in the inverse-Wishart scale update.
  bool paper_literal_scatter = false;
  RecenterMode recenter = RecenterMode::on_output;
  double projection_threshold = 1e-8;
  int max_sweeps = 100;
  double tol = 1e-6;
  /// Called after each sweep with (sweep, elbo).
  std::function<void(int, double)> on_sweep;
};

/// E[ln pi_t] for truncated sticks with the last one closed. In literal mode
/// each entry is psi(a_t) - psi(b_t).
std::vector<double> expected_log_weights(std::span<const BetaParams> sticks, bool literal = false);

/// Expected residual scatter sum_i w_i E[(x_i - mu - u - A y)(.)^T] of
/// component (t, k).
Mat component_scatter(const VariationalState& state, const ComponentStats& st, int t, int k);

// Coordinate updates. Each overwrites the corresponding factors of state.
// Overloads taking precomputed moments/likelihoods reuse them.

ProjectionPosterior update_projections(const Mat& x, const VariationalState& state,
                                       double threshold = 1e-8);

void update_group_responsibilities(const Mat& x, VariationalState& state,
                                   const ProjectionPosterior& proj, bool literal_sticks = false);
void update_group_responsibilities(VariationalState& state, const ProjectionPosterior& proj,
                                   const std::vector<Mat>& loglik, bool literal_sticks);

void update_noise_responsibilities(const Mat& x, VariationalState& state,
                                   const ProjectionPosterior& proj, bool literal_sticks = false);
void update_noise_responsibilities(VariationalState& state, const std::vector<Mat>& loglik,
                                   bool literal_sticks);

void update_top_sticks(VariationalState& state, const Sufficients& suff, const Hyperparameters& hyper);
void update_noise_sticks(VariationalState& state, const Sufficients& suff, const Hyperparameters& hyper);

void update_group_means(const Mat& x, VariationalState& state, const ProjectionPosterior& proj,
                        const Hyperparameters& hyper);
void update_group_means(VariationalState& state, const Sufficients& suff, const Hyperparameters& hyper);

void update_dictionaries(const Mat& x, VariationalState& state, const ProjectionPosterior& proj,
                         const Hyperparameters& hyper);
void update_dictionaries(VariationalState& state, const Sufficients& suff, const Hyperparameters& hyper);

void update_noise_means(const Mat& x, VariationalState& state, const ProjectionPosterior& proj,
                        const Hyperparameters& hyper, bool recenter = false);
void update_noise_means(VariationalState& state, const Sufficients& suff, const Hyperparameters& hyper,
                        bool recenter);

void update_noise_covariances(const Mat& x, VariationalState& state, const ProjectionPosterior& proj,
                              const Hyperparameters& hyper, bool literal_scatter = false);
void update_noise_covariances(VariationalState& state, const Sufficients& suff,
                              const Hyperparameters& hyper, bool literal_scatter);

/// Evidence lower bound (up to no constant) under the truncated mean-field
/// factorization, always with standard stick expectations.
double elbo(const Mat& x, const Hyperparameters& hyper, const VariationalState& state,
            const ProjectionPosterior& proj);
double elbo(const Hyperparameters& hyper, const VariationalState& state,
            const ProjectionPosterior& proj, const Sufficients& suff);

struct TraceRow {
  int sweep = 0;
  double elbo = 0.0;
  double wall_ms = 0.0;  // since the start of run_vb
};

struct VbResult {
  VariationalState state;
  ProjectionPosterior projections;  // consistent with the returned state
  std::vector<TraceRow> trace;      // row 0 is the initial state
  int sweeps = 0;
  bool converged = false;
};

VbResult run_vb(const Mat& x, const Hyperparameters& hyper, VariationalState init,
                const InferenceOptions& options = {});

struct RecoveredPatch {
  Vec clean;
  int group = 0;
};

/// x_hat = <A_t*><y_{i,t*}> + <mu_t*>, t* = argmax_t q_i(t), lowest index on
/// ties.
RecoveredPatch recover_patch(Eigen::Index i, const VariationalState& state,
                             const ProjectionPosterior& proj);

/// sweep<TAB>elbo<TAB>wall_ms, one line per row.
void write_elbo_trace(std::ostream& out, const std::vector<TraceRow>& trace);

}  // namespace ddpt
