#include "ddpt/kernels.hpp"

#include "ddpt/errors.hpp"

#include <omp.h>

#if defined(__SSE__) || defined(_M_X64)
#include <xmmintrin.h>
#define DDPT_HAS_MXCSR 1
#endif

#include <cmath>
#include <exception>
#include <numbers>

namespace ddpt {

namespace {

int g_threads = 0;

// Responsibilities are floored at 1e-300, so products of weights routinely
// land in the subnormal range where arithmetic is two orders of magnitude
// slower. Workers flush them to zero for the duration of a loop.
class FlushSubnormals {
 public:
  FlushSubnormals() {
#ifdef DDPT_HAS_MXCSR
    saved_ = _mm_getcsr();
    _mm_setcsr(saved_ | 0x8040u);
#endif
  }
  ~FlushSubnormals() {
#ifdef DDPT_HAS_MXCSR
    _mm_setcsr(saved_);
#endif
  }
  FlushSubnormals(const FlushSubnormals&) = delete;
  FlushSubnormals& operator=(const FlushSubnormals&) = delete;

 private:
  unsigned saved_ = 0;
};

}  // namespace

void set_thread_count(int n) {
  g_threads = n > 0 ? n : 0;
  omp_set_num_threads(g_threads > 0 ? g_threads : omp_get_num_procs());
}

int thread_count() { return g_threads > 0 ? g_threads : omp_get_max_threads(); }

void parallel_for(std::ptrdiff_t n, const std::function<void(std::ptrdiff_t)>& body) {
  if (n <= 0) return;
  std::exception_ptr error;
  const int threads = thread_count();
#pragma omp parallel num_threads(threads)
  {
    const FlushSubnormals ftz;
#pragma omp for schedule(dynamic, 1)
    for (std::ptrdiff_t j = 0; j < n; ++j) {
      try {
        body(j);
      } catch (...) {
#pragma omp critical(ddpt_parallel_error)
        if (!error) error = std::current_exception();
      }
    }
  }
  if (error) std::rethrow_exception(error);
}

ModelMoments compute_moments(const VariationalState& state) {
  ModelMoments mom;
  mom.groups = state.group_count();
  mom.components = state.component_count();
  mom.dim = state.dim();
  mom.items.resize(static_cast<std::size_t>(mom.groups * mom.components));
  parallel_for(static_cast<std::ptrdiff_t>(mom.items.size()), [&](std::ptrdiff_t j) {
    const auto t = static_cast<std::size_t>(j / mom.components);
    const auto k = static_cast<std::size_t>(j % mom.components);
    const auto& g = state.groups[t];
    const auto& c = state.noise[t][k];
    const auto e = iw_expectations(c.iw);
    auto& m = mom.items[static_cast<std::size_t>(j)];
    m.precision = e.precision;
    m.logdet = e.logdet;
    m.offset = g.mu_mean + c.u_mean;
    m.gram = g.weighted_gram(e.precision);
    m.proj = g.A_mean.transpose() * e.precision;
    m.trace_cov = e.precision.cwiseProduct(g.mu_cov + c.u_cov).sum();
    m.trace_gram = m.gram.trace();
  });
  return mom;
}

namespace {

struct Pair {
  int t;
  Eigen::Index i;
};

std::vector<Pair> active_pairs(const VariationalState& state, double threshold) {
  std::vector<Pair> pairs;
  const auto n = state.patch_count();
  for (int t = 0; t < state.group_count(); ++t)
    for (Eigen::Index i = 0; i < n; ++i)
      if (state.resp_group(i, t) > threshold) pairs.push_back({t, i});
  return pairs;
}

double log_norm_const(int d, double logdet) {
  return -0.5 * d * std::log(2.0 * std::numbers::pi) - 0.5 * logdet;
}

}  // namespace

namespace {

ProjectionEntry project_pair(const Mat& x, const VariationalState& state, const ModelMoments& mom, int t,
                             Eigen::Index i) {
  const int d = mom.dim;
  const int kn = mom.components;
  const auto& q = state.resp_noise[static_cast<std::size_t>(t)];
  Mat prec = Mat::Identity(d, d);
  Vec rhs = Vec::Zero(d);
  for (int k = 0; k < kn; ++k) {
    const double w = q(i, k);
    if (w == 0.0) continue;
    const auto& m = mom.at(t, k);
    prec.noalias() += w * m.gram;
    rhs.noalias() += w * (m.proj * (x.row(i).transpose() - m.offset));
  }
  const SpdFactor f(prec);
  ProjectionEntry e;
  e.patch = i;
  e.mean = f.solve(rhs);
  e.second_moment = f.inverse();
  e.second_moment.noalias() += e.mean * e.mean.transpose();
  e.logdet_cov = -f.logdet();
  return e;
}

}  // namespace

ProjectionPosterior compute_projections(const Mat& x, const VariationalState& state,
                                        const ModelMoments& mom, double threshold) {
  const auto pairs = active_pairs(state, threshold);
  std::vector<ProjectionEntry> entries(pairs.size());
  parallel_for(static_cast<std::ptrdiff_t>(pairs.size()), [&](std::ptrdiff_t j) {
    const auto [t, i] = pairs[static_cast<std::size_t>(j)];
    entries[static_cast<std::size_t>(j)] = project_pair(x, state, mom, t, i);
  });
  ProjectionPosterior out(state.patch_count(), state.group_count(), mom.dim);
  for (std::size_t j = 0; j < pairs.size(); ++j) out.append(pairs[j].t, std::move(entries[j]));
  return out;
}

std::size_t extend_projections(const Mat& x, const VariationalState& state, const ModelMoments& mom,
                               double threshold, ProjectionPosterior& proj) {
  std::vector<Pair> pairs;
  for (const auto& p : active_pairs(state, threshold))
    if (!proj.find(p.i, p.t)) pairs.push_back(p);
  if (pairs.empty()) return 0;
  std::vector<ProjectionEntry> added(pairs.size());
  parallel_for(static_cast<std::ptrdiff_t>(pairs.size()), [&](std::ptrdiff_t j) {
    const auto [t, i] = pairs[static_cast<std::size_t>(j)];
    added[static_cast<std::size_t>(j)] = project_pair(x, state, mom, t, i);
  });
  // Merge per group in patch order; pairs are grouped by t, then i.
  ProjectionPosterior out(proj.patch_count(), proj.group_count(), proj.dim());
  std::size_t next = 0;
  for (int t = 0; t < proj.group_count(); ++t) {
    for (const auto& e : proj.group_entries(t)) {
      while (next < pairs.size() && pairs[next].t == t && pairs[next].i < e.patch) out.append(t, std::move(added[next++]));
      out.append(t, e);
    }
    while (next < pairs.size() && pairs[next].t == t) out.append(t, std::move(added[next++]));
  }
  proj = std::move(out);
  return pairs.size();
}

std::vector<Mat> loglik_table(const Mat& x, const ModelMoments& mom,
                              const ProjectionPosterior& proj) {
  const auto n = x.rows();
  const int kn = mom.components;
  std::vector<Mat> table(static_cast<std::size_t>(mom.groups), Mat(n, kn));
  parallel_for(static_cast<std::ptrdiff_t>(mom.items.size()), [&](std::ptrdiff_t j) {
    const int t = static_cast<int>(j / kn);
    const int k = static_cast<int>(j % kn);
    const auto& m = mom.at(t, k);
    const Mat theta = x.rowwise() - m.offset.transpose();
    const Vec quad = (theta * m.precision).cwiseProduct(theta).rowwise().sum();
    const double base = log_norm_const(mom.dim, m.logdet) - 0.5 * m.trace_cov;
    auto col = table[static_cast<std::size_t>(t)].col(k);
    col = (base - 0.5 * (quad.array() + m.trace_gram)).matrix();
    for (const auto& e : proj.group_entries(t)) {
      const double cross = e.mean.dot(m.proj * theta.row(e.patch).transpose());
      const double tr = m.gram.cwiseProduct(e.second_moment).sum();
      col(e.patch) = base - 0.5 * (quad(e.patch) - 2.0 * cross + tr);
    }
  });
  return table;
}

Sufficients accumulate_statistics(const Mat& x, const VariationalState& state,
                                  const ProjectionPosterior& proj) {
  const auto n = x.rows();
  const auto d = x.cols();
  Sufficients s;
  s.groups = state.group_count();
  s.components = state.component_count();
  s.delta.resize(static_cast<std::size_t>(s.groups));
  s.stats.resize(static_cast<std::size_t>(s.groups * s.components));
  parallel_for(static_cast<std::ptrdiff_t>(s.stats.size()), [&](std::ptrdiff_t j) {
    const int t = static_cast<int>(j / s.components);
    const int k = static_cast<int>(j % s.components);
    const auto& qn = state.resp_noise[static_cast<std::size_t>(t)];
    Vec w(n);
    for (Eigen::Index i = 0; i < n; ++i) w(i) = state.resp_group(i, t) * qn(i, k);
    auto& st = s.stats[static_cast<std::size_t>(j)];
    st.mass = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) st.mass += w(i);
    st.sx = x.transpose() * w;
    const double wmax = n > 0 ? w.maxCoeff() : 0.0;
    std::vector<Eigen::Index> rows;
    for (Eigen::Index i = 0; i < n; ++i)
      if (w(i) > 0.0 && w(i) >= 1e-18 * wmax) rows.push_back(i);
    Mat xs(static_cast<Eigen::Index>(rows.size()), d);
    Mat xw(static_cast<Eigen::Index>(rows.size()), d);
    for (std::size_t r = 0; r < rows.size(); ++r) {
      xs.row(static_cast<Eigen::Index>(r)) = x.row(rows[r]);
      xw.row(static_cast<Eigen::Index>(r)) = w(rows[r]) * x.row(rows[r]);
    }
    st.sxx = xw.transpose() * xs;
    st.sxx = (0.5 * (st.sxx + st.sxx.transpose())).eval();
    st.sm = Vec::Zero(d);
    st.sxm = Mat::Zero(d, d);
    st.syy = Mat::Zero(d, d);
    double active = 0.0;
    for (const auto& e : proj.group_entries(t)) {
      const double wi = w(e.patch);
      if (wi == 0.0) continue;
      active += wi;
      st.sm.noalias() += wi * e.mean;
      st.sxm.noalias() += (wi * x.row(e.patch).transpose()) * e.mean.transpose();
      st.syy.noalias() += wi * e.second_moment;
    }
    st.syy.diagonal().array() += st.mass - active;
    if (k == 0) {
      double delta = 0.0;
      for (Eigen::Index i = 0; i < n; ++i) delta += state.resp_group(i, t);
      s.delta[static_cast<std::size_t>(t)] = delta;
    }
  });
  return s;
}

}  // namespace ddpt
