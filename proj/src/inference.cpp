#include "ddpt/inference.hpp"

#include "ddpt/errors.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>
#include <ostream>
#include <string>

namespace ddpt {

namespace {

constexpr double kRespFloor = 1e-300;

// Softmax in place with max-subtraction and a floor before renormalizing.
void softmax_row(std::vector<double>& v, const char* what, Eigen::Index row) {
  const double mx = *std::max_element(v.begin(), v.end());
  if (!std::isfinite(mx)) {
    throw NumericalError(std::string(what) + ": non-finite log-responsibilities at patch " +
                         std::to_string(row));
  }
  double sum = 0.0;
  for (auto& e : v) {
    e = std::max(std::exp(e - mx), kRespFloor);
    sum += e;
  }
  for (auto& e : v) e /= sum;
}

std::vector<std::vector<double>> noise_log_weights(const VariationalState& state, bool literal) {
  std::vector<std::vector<double>> out;
  out.reserve(state.noise_sticks.size());
  for (const auto& s : state.noise_sticks) out.push_back(expected_log_weights(s, literal));
  return out;
}

std::vector<Mat> precisions(const VariationalState& state) {
  const int kn = state.component_count();
  std::vector<Mat> p(static_cast<std::size_t>(state.group_count() * kn));
  parallel_for(static_cast<std::ptrdiff_t>(p.size()), [&](std::ptrdiff_t j) {
    const auto t = static_cast<std::size_t>(j / kn);
    const auto k = static_cast<std::size_t>(j % kn);
    p[static_cast<std::size_t>(j)] = iw_expectations(state.noise[t][k].iw).precision;
  });
  return p;
}

std::vector<Mat> precisions(const ModelMoments& mom) {
  std::vector<Mat> p;
  p.reserve(mom.items.size());
  for (const auto& m : mom.items) p.push_back(m.precision);
  return p;
}

void group_means(VariationalState& state, const Sufficients& suff, const Hyperparameters& hyper,
                 const std::vector<Mat>& prec) {
  const int kn = state.component_count();
  const SpdFactor prior(hyper.Sigma0);
  const Mat prior_prec = prior.inverse();
  const Vec prior_eta = prior.solve(hyper.mu0);
  parallel_for(state.group_count(), [&](std::ptrdiff_t tt) {
    const int t = static_cast<int>(tt);
    auto& g = state.groups[static_cast<std::size_t>(t)];
    Mat lam = prior_prec;
    Vec eta = prior_eta;
    for (int k = 0; k < kn; ++k) {
      const auto& st = suff.at(t, k);
      const Mat& p = prec[static_cast<std::size_t>(t * kn + k)];
      const auto& u = state.noise[static_cast<std::size_t>(t)][static_cast<std::size_t>(k)].u_mean;
      lam.noalias() += st.mass * p;
      eta.noalias() += p * (st.sx - st.mass * u - g.A_mean * st.sm);
    }
    const SpdFactor f(lam);
    g.mu_cov = f.inverse();
    g.mu_mean = f.solve(eta);
  });
}

void dictionaries(VariationalState& state, const Sufficients& suff, const Hyperparameters& hyper,
                  const std::vector<Mat>& prec) {
  const int kn = state.component_count();
  const int d = state.dim();
  parallel_for(state.group_count(), [&](std::ptrdiff_t tt) {
    const int t = static_cast<int>(tt);
    auto& g = state.groups[static_cast<std::size_t>(t)];
    for (int v = 0; v < d; ++v) {
      Mat lam = Mat::Identity(d, d) / hyper.c_a_sq(v);
      Vec eta = Vec::Zero(d);
      for (int k = 0; k < kn; ++k) {
        const auto& st = suff.at(t, k);
        const Mat& p = prec[static_cast<std::size_t>(t * kn + k)];
        const Vec c = g.mu_mean + state.noise[static_cast<std::size_t>(t)][static_cast<std::size_t>(k)].u_mean;
        const double yvv = st.syy(v, v);
        lam.noalias() += yvv * p;
        Vec r = st.sxm.col(v) - c * st.sm(v);
        r.noalias() -= g.A_mean * st.syy.col(v);
        r += g.A_mean.col(v) * yvv;
        eta.noalias() += p * r;
      }
      const SpdFactor f(lam);
      g.A_col_cov[static_cast<std::size_t>(v)] = f.inverse();
      g.A_mean.col(v) = f.solve(eta);
    }
  });
}

void noise_means(VariationalState& state, const Sufficients& suff, const Hyperparameters& hyper,
                 const std::vector<Mat>& prec, bool recenter) {
  const int kn = state.component_count();
  const SpdFactor prior(hyper.Omega0);
  const Mat prior_prec = prior.inverse();
  const Vec prior_eta = prior.solve(hyper.eps0);
  parallel_for(static_cast<std::ptrdiff_t>(kn) * state.group_count(), [&](std::ptrdiff_t j) {
    const auto t = static_cast<std::size_t>(j / kn);
    const auto k = static_cast<std::size_t>(j % kn);
    const auto& st = suff.stats[static_cast<std::size_t>(j)];
    const auto& g = state.groups[t];
    const Mat& p = prec[static_cast<std::size_t>(j)];
    const Mat lam = prior_prec + st.mass * p;
    const Vec eta = prior_eta + p * (st.sx - st.mass * g.mu_mean - g.A_mean * st.sm);
    const SpdFactor f(lam);
    auto& c = state.noise[t][k];
    c.u_cov = f.inverse();
    c.u_mean = f.solve(eta);
  });
  if (recenter) recenter_noise_means(state);
}

// Fills scatter (when given) with the per-component scatter used, which the
// ELBO of the updated state needs again.
void noise_covariances(VariationalState& state, const Sufficients& suff, const Hyperparameters& hyper,
                       bool literal_scatter, std::vector<Mat>* scatter = nullptr) {
  const int kn = state.component_count();
  const double factor = literal_scatter ? 0.5 : 1.0;
  if (scatter) scatter->assign(suff.stats.size(), Mat());
  parallel_for(static_cast<std::ptrdiff_t>(kn) * state.group_count(), [&](std::ptrdiff_t j) {
    const int t = static_cast<int>(j / kn);
    const int k = static_cast<int>(j % kn);
    const auto& st = suff.stats[static_cast<std::size_t>(j)];
    Mat sc = component_scatter(state, st, t, k);
    Mat b = hyper.B0 + factor * sc;
    if (scatter) (*scatter)[static_cast<std::size_t>(j)] = std::move(sc);
    b = (0.5 * (b + b.transpose())).eval();
    (void)SpdFactor(b);
    auto& iw = state.noise[static_cast<std::size_t>(t)][static_cast<std::size_t>(k)].iw;
    iw.dof = hyper.nu0 + st.mass;
    iw.scale = std::move(b);
  });
}

// KL(N(m, C) || N(0, s I)).
double kl_isotropic(const Vec& m, const Mat& c, double s) {
  const auto d = static_cast<double>(m.size());
  const SpdFactor f(c);
  return 0.5 * (c.trace() / s + m.squaredNorm() / s - d + d * std::log(s) - f.logdet());
}

void check_term(double v, const std::string& name) {
  if (!std::isfinite(v)) throw NumericalError("elbo: non-finite term " + name);
}

template <class F>
void step(int sweep, const char* name, F&& f) {
  try {
    f();
  } catch (const NumericalError& e) {
    throw NumericalError("sweep " + std::to_string(sweep) + ", " + name + ": " + e.what());
  } catch (const DomainError& e) {
    throw NumericalError("sweep " + std::to_string(sweep) + ", " + name + ": " + e.what());
  }
}

void check_shapes(const Mat& x, const Hyperparameters& hyper, const VariationalState& s) {
  if (s.group_count() != hyper.T_max || s.component_count() != hyper.K_max || s.dim() != hyper.dim() ||
      x.cols() != hyper.dim() || s.patch_count() != x.rows()) {
    throw DimensionError("run_vb: state shape does not match hyperparameters and patches");
  }
  for (const auto& row : s.noise)
    if (static_cast<int>(row.size()) != hyper.K_max) throw DimensionError("run_vb: ragged noise components");
}

}  // namespace

std::vector<double> expected_log_weights(std::span<const BetaParams> sticks, bool literal) {
  std::vector<double> out(sticks.size());
  if (literal) {
    for (std::size_t i = 0; i < sticks.size(); ++i) out[i] = digamma(sticks[i].a) - digamma(sticks[i].b);
    return out;
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < sticks.size(); ++i) {
    if (i + 1 == sticks.size()) {
      out[i] = acc;
      break;
    }
    const auto e = expected_log_beta_terms(sticks[i]);
    out[i] = acc + e.log_v;
    acc += e.log_1mv;
  }
  return out;
}

Mat component_scatter(const VariationalState& state, const ComponentStats& st, int t, int k) {
  const auto& g = state.groups[static_cast<std::size_t>(t)];
  const auto& c = state.noise[static_cast<std::size_t>(t)][static_cast<std::size_t>(k)];
  const Vec off = g.mu_mean + c.u_mean;
  Mat s = st.sxx;
  s.noalias() -= st.sx * off.transpose();
  s.noalias() -= off * st.sx.transpose();
  s.noalias() += st.mass * off * off.transpose();
  Mat r = st.sxm;
  r.noalias() -= off * st.sm.transpose();
  const Mat ra = r * g.A_mean.transpose();
  s -= ra + ra.transpose();
  const Mat ay = g.A_mean * st.syy;
  s.noalias() += ay * g.A_mean.transpose();
  for (Eigen::Index v = 0; v < st.syy.rows(); ++v) s += st.syy(v, v) * g.A_col_cov[static_cast<std::size_t>(v)];
  s += st.mass * (g.mu_cov + c.u_cov);
  return 0.5 * (s + s.transpose());
}

ProjectionPosterior update_projections(const Mat& x, const VariationalState& state, double threshold) {
  return compute_projections(x, state, compute_moments(state), threshold);
}

void update_group_responsibilities(VariationalState& state, const ProjectionPosterior& proj,
                                   const std::vector<Mat>& loglik, bool literal_sticks) {
  const int tn = state.group_count();
  const int kn = state.component_count();
  const int d = state.dim();
  const auto top = expected_log_weights(state.top_sticks, literal_sticks);
  const auto low = noise_log_weights(state, literal_sticks);
  parallel_for(state.patch_count(), [&](std::ptrdiff_t ii) {
    const auto i = static_cast<Eigen::Index>(ii);
    std::vector<double> r(static_cast<std::size_t>(tn));
    for (int t = 0; t < tn; ++t) {
      const auto ts = static_cast<std::size_t>(t);
      double v = top[ts];
      if (const auto* e = proj.find(i, t)) v -= 0.5 * (e->second_moment.trace() - d - e->logdet_cov);
      const auto& q = state.resp_noise[ts];
      const auto& l = loglik[ts];
      for (int k = 0; k < kn; ++k) {
        const double w = q(i, k);
        if (w > 0.0) v += w * (low[ts][static_cast<std::size_t>(k)] + l(i, k) - std::log(w));
      }
      r[ts] = v;
    }
    softmax_row(r, "group responsibilities", i);
    for (int t = 0; t < tn; ++t) state.resp_group(i, t) = r[static_cast<std::size_t>(t)];
  });
}

void update_group_responsibilities(const Mat& x, VariationalState& state,
                                   const ProjectionPosterior& proj, bool literal_sticks) {
  const auto ll = loglik_table(x, compute_moments(state), proj);
  update_group_responsibilities(state, proj, ll, literal_sticks);
}

void update_noise_responsibilities(VariationalState& state, const std::vector<Mat>& loglik,
                                   bool literal_sticks) {
  const int tn = state.group_count();
  const int kn = state.component_count();
  const auto low = noise_log_weights(state, literal_sticks);
  parallel_for(state.patch_count(), [&](std::ptrdiff_t ii) {
    const auto i = static_cast<Eigen::Index>(ii);
    std::vector<double> r(static_cast<std::size_t>(kn));
    for (int t = 0; t < tn; ++t) {
      const auto ts = static_cast<std::size_t>(t);
      for (int k = 0; k < kn; ++k) r[static_cast<std::size_t>(k)] = low[ts][static_cast<std::size_t>(k)] + loglik[ts](i, k);
      softmax_row(r, "noise responsibilities", i);
      for (int k = 0; k < kn; ++k) state.resp_noise[ts](i, k) = r[static_cast<std::size_t>(k)];
    }
  });
}

void update_noise_responsibilities(const Mat& x, VariationalState& state,
                                   const ProjectionPosterior& proj, bool literal_sticks) {
  const auto ll = loglik_table(x, compute_moments(state), proj);
  update_noise_responsibilities(state, ll, literal_sticks);
}

void update_top_sticks(VariationalState& state, const Sufficients& suff, const Hyperparameters& hyper) {
  const auto tn = state.top_sticks.size();
  double tail = 0.0;
  for (std::size_t t = tn; t-- > 0;) {
    state.top_sticks[t] = {suff.delta[t] + 1.0, hyper.alpha + tail};
    tail += suff.delta[t];
  }
}

void update_noise_sticks(VariationalState& state, const Sufficients& suff, const Hyperparameters& hyper) {
  const int kn = state.component_count();
  for (int t = 0; t < state.group_count(); ++t) {
    double tail = 0.0;
    for (int k = kn; k-- > 0;) {
      const double lam = suff.lambda(t, k);
      state.noise_sticks[static_cast<std::size_t>(t)][static_cast<std::size_t>(k)] = {lam + 1.0, hyper.beta + tail};
      tail += lam;
    }
  }
}

void update_group_means(VariationalState& state, const Sufficients& suff, const Hyperparameters& hyper) {
  group_means(state, suff, hyper, precisions(state));
}

void update_group_means(const Mat& x, VariationalState& state, const ProjectionPosterior& proj,
                        const Hyperparameters& hyper) {
  update_group_means(state, accumulate_statistics(x, state, proj), hyper);
}

void update_dictionaries(VariationalState& state, const Sufficients& suff, const Hyperparameters& hyper) {
  dictionaries(state, suff, hyper, precisions(state));
}

void update_dictionaries(const Mat& x, VariationalState& state, const ProjectionPosterior& proj,
                         const Hyperparameters& hyper) {
  update_dictionaries(state, accumulate_statistics(x, state, proj), hyper);
}

void update_noise_means(VariationalState& state, const Sufficients& suff, const Hyperparameters& hyper,
                        bool recenter) {
  noise_means(state, suff, hyper, precisions(state), recenter);
}

void update_noise_means(const Mat& x, VariationalState& state, const ProjectionPosterior& proj,
                        const Hyperparameters& hyper, bool recenter) {
  update_noise_means(state, accumulate_statistics(x, state, proj), hyper, recenter);
}

void update_noise_covariances(VariationalState& state, const Sufficients& suff,
                              const Hyperparameters& hyper, bool literal_scatter) {
  noise_covariances(state, suff, hyper, literal_scatter);
}

void update_noise_covariances(const Mat& x, VariationalState& state, const ProjectionPosterior& proj,
                              const Hyperparameters& hyper, bool literal_scatter) {
  update_noise_covariances(state, accumulate_statistics(x, state, proj), hyper, literal_scatter);
}

namespace {

double elbo_impl(const Hyperparameters& hyper, const VariationalState& state,
                 const ProjectionPosterior& proj, const Sufficients& suff,
                 const std::vector<Mat>* scatter) {
  const int tn = state.group_count();
  const int kn = state.component_count();
  const int d = state.dim();
  const auto n = state.patch_count();
  const auto top = expected_log_weights(state.top_sticks);
  const auto low = noise_log_weights(state, false);

  // Assignment and latent-code terms, per patch then summed in order.
  std::vector<double> per_patch(static_cast<std::size_t>(n), 0.0);
  parallel_for(n, [&](std::ptrdiff_t ii) {
    const auto i = static_cast<Eigen::Index>(ii);
    double acc = 0.0;
    for (int t = 0; t < tn; ++t) {
      const auto ts = static_cast<std::size_t>(t);
      const double qt = state.resp_group(i, t);
      if (qt <= 0.0) continue;
      double v = top[ts] - std::log(qt);
      if (const auto* e = proj.find(i, t)) v -= 0.5 * (e->second_moment.trace() - d - e->logdet_cov);
      const auto& q = state.resp_noise[ts];
      for (int k = 0; k < kn; ++k) {
        const double w = q(i, k);
        if (w > 0.0) v += w * (low[ts][static_cast<std::size_t>(k)] - std::log(w));
      }
      acc += qt * v;
    }
    per_patch[static_cast<std::size_t>(ii)] = acc;
  });
  double assign = 0.0;
  for (double v : per_patch) assign += v;
  check_term(assign, "assignments");

  // Expected data log-likelihood per component.
  std::vector<double> data(static_cast<std::size_t>(tn * kn), 0.0);
  parallel_for(static_cast<std::ptrdiff_t>(data.size()), [&](std::ptrdiff_t j) {
    const int t = static_cast<int>(j / kn);
    const int k = static_cast<int>(j % kn);
    const auto& st = suff.stats[static_cast<std::size_t>(j)];
    const auto e = iw_expectations(state.noise[static_cast<std::size_t>(t)][static_cast<std::size_t>(k)].iw);
    const Mat s = scatter ? (*scatter)[static_cast<std::size_t>(j)] : component_scatter(state, st, t, k);
    data[static_cast<std::size_t>(j)] =
        -st.mass * (0.5 * d * std::log(2.0 * std::numbers::pi) + 0.5 * e.logdet) -
        0.5 * e.precision.cwiseProduct(s).sum();
  });
  double like = 0.0;
  for (double v : data) like += v;
  check_term(like, "likelihood");

  // Prior KL penalties per group.
  std::vector<double> kl(static_cast<std::size_t>(tn), 0.0);
  const InverseWishartParams iw0{hyper.nu0, hyper.B0};
  parallel_for(tn, [&](std::ptrdiff_t tt) {
    const auto t = static_cast<std::size_t>(tt);
    const auto& g = state.groups[t];
    double v = 0.0;
    if (t + 1 < static_cast<std::size_t>(tn)) v += kl_beta(state.top_sticks[t], {1.0, hyper.alpha});
    v += kl_gaussian(g.mu_mean, g.mu_cov, hyper.mu0, hyper.Sigma0);
    for (int c = 0; c < d; ++c) {
      v += kl_isotropic(g.A_mean.col(c), g.A_col_cov[static_cast<std::size_t>(c)], hyper.c_a_sq(c));
    }
    for (int k = 0; k < kn; ++k) {
      const auto& comp = state.noise[t][static_cast<std::size_t>(k)];
      if (k + 1 < kn) v += kl_beta(state.noise_sticks[t][static_cast<std::size_t>(k)], {1.0, hyper.beta});
      v += kl_gaussian(comp.u_mean, comp.u_cov, hyper.eps0, hyper.Omega0);
      v += kl_inverse_wishart(comp.iw, iw0);
    }
    kl[t] = v;
  });
  double penalty = 0.0;
  for (double v : kl) penalty += v;
  check_term(penalty, "prior KL");

  const double total = assign + like - penalty;
  check_term(total, "total");
  return total;
}

}  // namespace

double elbo(const Hyperparameters& hyper, const VariationalState& state,
            const ProjectionPosterior& proj, const Sufficients& suff) {
  return elbo_impl(hyper, state, proj, suff, nullptr);
}

double elbo(const Mat& x, const Hyperparameters& hyper, const VariationalState& state,
            const ProjectionPosterior& proj) {
  return elbo(hyper, state, proj, accumulate_statistics(x, state, proj));
}

VbResult run_vb(const Mat& x, const Hyperparameters& hyper, VariationalState init,
                const InferenceOptions& options) {
  hyper.validate();
  check_shapes(x, hyper, init);
  const auto start = std::chrono::steady_clock::now();
  auto elapsed = [&] {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  };
  VbResult r;
  r.state = std::move(init);
  auto& s = r.state;
  const double thr = options.projection_threshold;

  ModelMoments mom;
  ProjectionPosterior proj;
  Sufficients suff;
  double prev = 0.0;
  step(0, "initial elbo", [&] {
    mom = compute_moments(s);
    proj = compute_projections(x, s, mom, thr);
    suff = accumulate_statistics(x, s, proj);
    prev = elbo(hyper, s, proj, suff);
  });
  r.trace.push_back({0, prev, elapsed()});
  if (options.on_sweep) options.on_sweep(0, prev);

  const bool literal = options.paper_literal_sticks;
  for (int sweep = 1; sweep <= options.max_sweeps; ++sweep) {
    std::vector<Mat> ll;
    step(sweep, "update_projections", [&] {
      mom = compute_moments(s);
      proj = compute_projections(x, s, mom, thr);
      ll = loglik_table(x, mom, proj);
    });
    step(sweep, "update_group_responsibilities", [&] { update_group_responsibilities(s, proj, ll, literal); });
    // Pairs that just crossed the threshold were scored with the prior code;
    // give them their optimal q(y) before anything accumulates over them.
    step(sweep, "update_projections", [&] {
      if (extend_projections(x, s, mom, thr, proj) > 0) ll = loglik_table(x, mom, proj);
    });
    step(sweep, "update_noise_responsibilities", [&] { update_noise_responsibilities(s, ll, literal); });
    ll.clear();
    suff = accumulate_statistics(x, s, proj);
    step(sweep, "update_top_sticks", [&] { update_top_sticks(s, suff, hyper); });
    step(sweep, "update_noise_sticks", [&] { update_noise_sticks(s, suff, hyper); });
    const auto prec = precisions(mom);
    step(sweep, "update_group_means", [&] { group_means(s, suff, hyper, prec); });
    step(sweep, "update_dictionaries", [&] { dictionaries(s, suff, hyper, prec); });
    step(sweep, "update_noise_means", [&] {
      noise_means(s, suff, hyper, prec, options.recenter == RecenterMode::every_sweep);
    });
    std::vector<Mat> scatter;
    step(sweep, "update_noise_covariances", [&] {
      noise_covariances(s, suff, hyper, options.paper_literal_scatter, &scatter);
    });
    double e = 0.0;
    step(sweep, "elbo", [&] { e = elbo_impl(hyper, s, proj, suff, &scatter); });
    r.trace.push_back({sweep, e, elapsed()});
    r.sweeps = sweep;
    if (options.on_sweep) options.on_sweep(sweep, e);
    const bool done = std::abs(e - prev) <= options.tol * std::abs(prev);
    prev = e;
    if (done) {
      r.converged = true;
      break;
    }
  }
  if (r.sweeps > 0 && options.recenter == RecenterMode::on_output) recenter_noise_means(s);
  step(r.sweeps, "final projections", [&] { r.projections = update_projections(x, s, thr); });
  return r;
}

RecoveredPatch recover_patch(Eigen::Index i, const VariationalState& state,
                             const ProjectionPosterior& proj) {
  int best = 0;
  for (int t = 1; t < state.group_count(); ++t)
    if (state.resp_group(i, t) > state.resp_group(i, best)) best = t;
  const auto& g = state.groups[static_cast<std::size_t>(best)];
  RecoveredPatch out;
  out.group = best;
  out.clean = g.mu_mean;
  if (const auto* e = proj.find(i, best)) out.clean.noalias() += g.A_mean * e->mean;
  return out;
}

void write_elbo_trace(std::ostream& out, const std::vector<TraceRow>& trace) {
  char buf[96];
  for (const auto& row : trace) {
    std::snprintf(buf, sizeof buf, "%d\t%.17g\t%.3f\n", row.sweep, row.elbo, row.wall_ms);
    out << buf;
  }
}

}  // namespace ddpt
