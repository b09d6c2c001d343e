#include "ddpt/model.hpp"

#include "ddpt/errors.hpp"
#include "ddpt/rng.hpp"

#include <cmath>
#include <string>

namespace ddpt {

void Hyperparameters::validate() const {
  const auto d = mu0.size();
  if (d < 1) throw DimensionError("hyperparameters: dimension must be >= 1");
  if (Sigma0.rows() != d || Sigma0.cols() != d || c_a_sq.size() != d || eps0.size() != d ||
      Omega0.rows() != d || Omega0.cols() != d || B0.rows() != d || B0.cols() != d) {
    throw DimensionError("hyperparameters: inconsistent dimensions");
  }
  if (!(alpha > 0.0) || !(beta > 0.0)) throw DomainError("hyperparameters: concentrations must be positive");
  if (!(nu0 > static_cast<double>(d) - 1.0)) throw DomainError("hyperparameters: nu0 must exceed d - 1");
  if ((c_a_sq.array() <= 0.0).any()) throw DomainError("hyperparameters: C_A must be positive");
  if (T_max < 1 || K_max < 1) throw DomainError("hyperparameters: truncations must be >= 1");
}

Hyperparameters default_hyperparameters(int d) {
  if (d < 1) throw DomainError("default_hyperparameters: d must be >= 1");
  Hyperparameters h;
  h.alpha = 3.0;
  h.beta = 1e-3;
  h.mu0 = Vec::Zero(d);
  h.Sigma0 = Mat::Identity(d, d);
  h.c_a_sq = Vec::Ones(d);
  h.eps0 = Vec::Zero(d);
  h.Omega0 = Mat::Identity(d, d);
  h.nu0 = d;
  h.B0 = Mat::Identity(d, d);
  h.T_max = 30;
  h.K_max = 10;
  return h;
}

Mat GroupPosterior::mu_second_moment() const { return mu_cov + mu_mean * mu_mean.transpose(); }

Mat GroupPosterior::gram() const {
  Mat g = A_mean.transpose() * A_mean;
  for (Eigen::Index v = 0; v < g.rows(); ++v) g(v, v) += A_col_cov[static_cast<std::size_t>(v)].trace();
  return g;
}

Mat GroupPosterior::weighted_gram(const Mat& p) const {
  Mat g = A_mean.transpose() * (p * A_mean);
  g = (0.5 * (g + g.transpose())).eval();
  for (Eigen::Index v = 0; v < g.rows(); ++v) {
    g(v, v) += p.cwiseProduct(A_col_cov[static_cast<std::size_t>(v)]).sum();
  }
  return g;
}

Mat GroupPosterior::column_cov_sum() const {
  Mat s = Mat::Zero(A_mean.rows(), A_mean.rows());
  for (const auto& c : A_col_cov) s += c;
  return s;
}

Mat NoiseComponentPosterior::u_second_moment() const { return u_cov + u_mean * u_mean.transpose(); }

void VariationalState::check_invariants(double tol) const {
  const auto t_count = groups.size();
  if (top_sticks.size() != t_count || noise_sticks.size() != t_count || noise.size() != t_count ||
      resp_noise.size() != t_count || static_cast<std::size_t>(resp_group.cols()) != t_count) {
    throw DimensionError("state: group counts disagree");
  }
  const auto n = resp_group.rows();
  auto check_rows = [&](const Mat& m, const char* what) {
    if ((m.array() < 0.0).any() || !m.allFinite()) {
      throw NumericalError(std::string(what) + ": negative or non-finite responsibility");
    }
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      if (std::abs(m.row(i).sum() - 1.0) > tol) {
        throw NumericalError(std::string(what) + ": row " + std::to_string(i) + " does not sum to 1");
      }
    }
  };
  check_rows(resp_group, "resp_group");
  for (const auto& r : resp_noise) {
    if (r.rows() != n) throw DimensionError("state: resp_noise row count");
    check_rows(r, "resp_noise");
  }
}

VariationalState prior_state(const Hyperparameters& hyper, Eigen::Index n) {
  hyper.validate();
  const int d = hyper.dim();
  const auto tn = static_cast<std::size_t>(hyper.T_max);
  const auto kn = static_cast<std::size_t>(hyper.K_max);
  VariationalState s;
  s.top_sticks.assign(tn, BetaParams{1.0, hyper.alpha});
  s.noise_sticks.assign(tn, std::vector<BetaParams>(kn, BetaParams{1.0, hyper.beta}));
  GroupPosterior g;
  g.mu_mean = hyper.mu0;
  g.mu_cov = hyper.Sigma0;
  g.A_mean = Mat::Zero(d, d);
  for (int v = 0; v < d; ++v) g.A_col_cov.push_back(hyper.c_a_sq(v) * Mat::Identity(d, d));
  s.groups.assign(tn, g);
  NoiseComponentPosterior c;
  c.u_mean = hyper.eps0;
  c.u_cov = hyper.Omega0;
  c.iw = {hyper.nu0, hyper.B0};
  s.noise.assign(tn, std::vector<NoiseComponentPosterior>(kn, c));
  attach_patches(s, n);
  return s;
}

void attach_patches(VariationalState& state, Eigen::Index n) {
  const auto t = state.groups.size();
  const auto k = static_cast<Eigen::Index>(state.component_count());
  state.resp_group = Mat::Constant(n, static_cast<Eigen::Index>(t), 1.0 / static_cast<double>(t));
  state.resp_noise.assign(t, Mat::Constant(n, k, 1.0 / static_cast<double>(k)));
}

std::vector<double> expected_stick_weights(std::span<const BetaParams> sticks) {
  std::vector<double> w(sticks.size());
  double remaining = 1.0;
  for (std::size_t i = 0; i < sticks.size(); ++i) {
    if (i + 1 == sticks.size()) {
      w[i] = remaining;
      break;
    }
    const double ev = sticks[i].a / (sticks[i].a + sticks[i].b);
    w[i] = remaining * ev;
    remaining *= 1.0 - ev;
  }
  return w;
}

void recenter_noise_means(VariationalState& state) {
  for (std::size_t t = 0; t < state.groups.size(); ++t) {
    const auto kappa = expected_stick_weights(state.noise_sticks[t]);
    Vec shift = Vec::Zero(state.groups[t].mu_mean.size());
    for (std::size_t k = 0; k < kappa.size(); ++k) shift += kappa[k] * state.noise[t][k].u_mean;
    for (auto& c : state.noise[t]) c.u_mean -= shift;
    state.groups[t].mu_mean += shift;
  }
}

ProjectionPosterior::ProjectionPosterior(Eigen::Index patches, int groups, int dim)
    : patches_(patches),
      dim_(dim),
      entries_(static_cast<std::size_t>(groups)),
      slot_(static_cast<std::size_t>(groups), std::vector<int>(static_cast<std::size_t>(patches), -1)) {}

const ProjectionEntry* ProjectionPosterior::find(Eigen::Index i, int t) const {
  const int s = slot_[static_cast<std::size_t>(t)][static_cast<std::size_t>(i)];
  return s < 0 ? nullptr : &entries_[static_cast<std::size_t>(t)][static_cast<std::size_t>(s)];
}

Vec ProjectionPosterior::mean(Eigen::Index i, int t) const {
  const auto* e = find(i, t);
  return e ? e->mean : Vec::Zero(dim_);
}

Mat ProjectionPosterior::second_moment(Eigen::Index i, int t) const {
  const auto* e = find(i, t);
  return e ? e->second_moment : Mat::Identity(dim_, dim_);
}

void ProjectionPosterior::append(int t, ProjectionEntry entry) {
  auto& list = entries_[static_cast<std::size_t>(t)];
  if (!list.empty() && list.back().patch >= entry.patch) {
    throw DimensionError("ProjectionPosterior: entries must be appended in patch order");
  }
  slot_[static_cast<std::size_t>(t)][static_cast<std::size_t>(entry.patch)] = static_cast<int>(list.size());
  list.push_back(std::move(entry));
}

std::size_t ProjectionPosterior::stored() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.size();
  return n;
}

namespace {

std::vector<double> closed_sticks(CounterRng& rng, int count, double concentration) {
  std::vector<double> w(static_cast<std::size_t>(count));
  double remaining = 1.0;
  for (int i = 0; i < count; ++i) {
    const double v = (i + 1 == count) ? 1.0 : rng.beta(1.0, concentration);
    w[static_cast<std::size_t>(i)] = remaining * v;
    remaining *= 1.0 - v;
  }
  return w;
}

int draw_index(CounterRng& rng, const std::vector<double>& weights) {
  const double u = rng.uniform();
  double acc = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    acc += weights[i];
    if (u < acc) return static_cast<int>(i);
  }
  // Rounding left a sliver above the cumulative sum.
  for (std::size_t i = weights.size(); i-- > 0;) {
    if (weights[i] > 0.0) return static_cast<int>(i);
  }
  return 0;
}

Mat psd_sqrt(const Mat& m) {
  const Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (m + m.transpose()));
  const Vec root = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * root.asDiagonal();
}

}  // namespace

GenerativeParams draw_generative_params(const Hyperparameters& hyper, int groups,
                                        std::span<const int> components,
                                        std::span<const int> ranks, std::uint64_t seed) {
  hyper.validate();
  const int d = hyper.dim();
  if (groups < 1 || groups > hyper.T_max) throw DomainError("draw_generative_params: need 1 <= T <= T_max");
  if (components.size() != static_cast<std::size_t>(groups) || ranks.size() != static_cast<std::size_t>(groups)) {
    throw DimensionError("draw_generative_params: one component count and rank per group");
  }
  CounterRng rng(seed, 1);
  GenerativeParams p;
  p.pi = closed_sticks(rng, groups, hyper.alpha);
  for (int t = 0; t < groups; ++t) {
    const int kt = components[static_cast<std::size_t>(t)];
    const int rank = ranks[static_cast<std::size_t>(t)];
    if (kt < 1) throw DomainError("draw_generative_params: component counts must be >= 1");
    if (rank < 0 || rank > d) throw DomainError("draw_generative_params: rank must be in [0, d]");
    p.kappa.push_back(closed_sticks(rng, kt, hyper.beta));
    p.mu.push_back(sample_gaussian(rng, hyper.mu0, hyper.Sigma0));
    Mat a(d, d);
    for (int v = 0; v < d; ++v) {
      const double sd = std::sqrt(hyper.c_a_sq(v));
      for (int r = 0; r < d; ++r) a(r, v) = sd * rng.normal();
    }
    const Eigen::JacobiSVD<Mat> svd(a, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Vec sv = svd.singularValues();
    for (int j = rank; j < d; ++j) sv(j) = 0.0;
    p.A.push_back(svd.matrixU() * sv.asDiagonal() * svd.matrixV().transpose());
    std::vector<Vec> us;
    std::vector<Mat> ups;
    for (int k = 0; k < kt; ++k) {
      us.push_back(sample_gaussian(rng, hyper.eps0, hyper.Omega0));
      ups.push_back(sample_inverse_wishart(rng, hyper.nu0, hyper.B0));
    }
    p.u.push_back(std::move(us));
    p.upsilon.push_back(std::move(ups));
  }
  return p;
}

SyntheticPatches sample_from_params(const GenerativeParams& params, Eigen::Index n,
                                    std::uint64_t seed) {
  if (params.mu.empty()) throw DimensionError("sample_from_params: no groups");
  const auto d = params.mu.front().size();
  std::vector<std::vector<Mat>> roots;
  for (const auto& group : params.upsilon) {
    std::vector<Mat> r;
    for (const auto& u : group) r.push_back(psd_sqrt(u));
    roots.push_back(std::move(r));
  }
  CounterRng rng(seed, 2);
  SyntheticPatches out;
  out.data.resize(n, d);
  out.clean.resize(n, d);
  out.group.resize(static_cast<std::size_t>(n));
  out.component.resize(static_cast<std::size_t>(n));
  Vec y(d);
  Vec xi(d);
  for (Eigen::Index i = 0; i < n; ++i) {
    const int t = draw_index(rng, params.pi);
    const auto ts = static_cast<std::size_t>(t);
    const int k = draw_index(rng, params.kappa[ts]);
    const auto ks = static_cast<std::size_t>(k);
    for (Eigen::Index j = 0; j < d; ++j) y(j) = rng.normal();
    for (Eigen::Index j = 0; j < d; ++j) xi(j) = rng.normal();
    const Vec clean = params.A[ts] * y + params.mu[ts];
    out.clean.row(i) = clean.transpose();
    out.data.row(i) = (clean + params.u[ts][ks] + roots[ts][ks] * xi).transpose();
    out.group[static_cast<std::size_t>(i)] = t;
    out.component[static_cast<std::size_t>(i)] = k;
  }
  return out;
}

GenerativeSample sample_noisy_patches(const Hyperparameters& hyper, int groups,
                                      std::span<const int> components,
                                      std::span<const int> ranks, Eigen::Index n,
                                      std::uint64_t seed) {
  GenerativeSample s;
  s.params = draw_generative_params(hyper, groups, components, ranks, seed);
  s.patches = sample_from_params(s.params, n, seed);
  return s;
}

}  // namespace ddpt
