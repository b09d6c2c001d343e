#include "ddpt/initkit.hpp"

#include "ddpt/errors.hpp"
#include "ddpt/kernels.hpp"
#include "ddpt/rng.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>

namespace ddpt {

namespace {

constexpr std::ptrdiff_t kChunk = 256;

double sq_dist(const Mat& a, Eigen::Index i, const Mat& b, Eigen::Index j) {
  return (a.row(i) - b.row(j)).squaredNorm();
}

// Nearest centroid per point, lowest index on ties.
void assign(const Mat& data, const Mat& cent, std::vector<int>& label, Vec& dist) {
  const auto n = data.rows();
  const auto k = cent.rows();
  parallel_for((n + kChunk - 1) / kChunk, [&](std::ptrdiff_t c) {
    const auto lo = c * kChunk;
    const auto hi = std::min<Eigen::Index>(n, lo + kChunk);
    for (auto i = lo; i < hi; ++i) {
      int best = 0;
      double bd = sq_dist(data, i, cent, 0);
      for (Eigen::Index j = 1; j < k; ++j) {
        const double dj = sq_dist(data, i, cent, j);
        if (dj < bd) {
          bd = dj;
          best = static_cast<int>(j);
        }
      }
      label[static_cast<std::size_t>(i)] = best;
      dist(i) = bd;
    }
  });
}

// Centroids as member means; empty clusters take the farthest remaining
// point unless every point already sits on its centroid.
void update_centroids(const Mat& data, Mat& cent, std::vector<int>& label, Vec& dist) {
  const auto k = cent.rows();
  const auto n = data.rows();
  Mat sum = Mat::Zero(k, data.cols());
  std::vector<Eigen::Index> count(static_cast<std::size_t>(k), 0);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto l = static_cast<std::size_t>(label[static_cast<std::size_t>(i)]);
    sum.row(static_cast<Eigen::Index>(l)) += data.row(i);
    ++count[l];
  }
  for (Eigen::Index j = 0; j < k; ++j) {
    const auto c = count[static_cast<std::size_t>(j)];
    if (c > 0) {
      cent.row(j) = sum.row(j) / static_cast<double>(c);
      continue;
    }
    Eigen::Index far = -1;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (count[static_cast<std::size_t>(label[static_cast<std::size_t>(i)])] < 2) continue;
      if (dist(i) > 0.0 && (far < 0 || dist(i) > dist(far))) far = i;
    }
    if (far < 0) continue;
    --count[static_cast<std::size_t>(label[static_cast<std::size_t>(far)])];
    label[static_cast<std::size_t>(far)] = static_cast<int>(j);
    count[static_cast<std::size_t>(j)] = 1;
    cent.row(j) = data.row(far);
    dist(far) = 0.0;
  }
}

Mat seed_centroids(const Mat& data, int k, std::uint64_t seed) {
  const auto n = data.rows();
  CounterRng rng(seed, 11);
  Mat cent(k, data.cols());
  std::vector<bool> chosen(static_cast<std::size_t>(n), false);
  auto first = static_cast<Eigen::Index>(rng.uniform() * static_cast<double>(n));
  first = std::min(first, n - 1);
  cent.row(0) = data.row(first);
  chosen[static_cast<std::size_t>(first)] = true;
  Vec d2(n);
  for (Eigen::Index i = 0; i < n; ++i) d2(i) = sq_dist(data, i, cent, 0);
  for (int j = 1; j < k; ++j) {
    double total = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) total += d2(i);
    Eigen::Index pick = -1;
    if (total > 0.0) {
      const double u = rng.uniform() * total;
      double acc = 0.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        acc += d2(i);
        if (d2(i) > 0.0 && u < acc) {
          pick = i;
          break;
        }
      }
      if (pick < 0) {
        for (Eigen::Index i = n; i-- > 0;)
          if (d2(i) > 0.0) {
            pick = i;
            break;
          }
      }
    } else {
      for (Eigen::Index i = 0; i < n; ++i)
        if (!chosen[static_cast<std::size_t>(i)]) {
          pick = i;
          break;
        }
    }
    chosen[static_cast<std::size_t>(pick)] = true;
    cent.row(j) = data.row(pick);
    for (Eigen::Index i = 0; i < n; ++i) d2(i) = std::min(d2(i), sq_dist(data, i, cent, j));
  }
  return cent;
}

struct NoiseInit {
  std::vector<NoiseComponentPosterior> comps;
  std::vector<int> label;  // 0-based component per residual row
};

// extra, when given, is added to every component's residual covariance.
NoiseInit init_noise(const Mat& res, const Hyperparameters& hyper, std::uint64_t seed,
                     const Mat* extra = nullptr) {
  const int d = hyper.dim();
  const auto n = res.rows();
  const int k = static_cast<int>(std::min<Eigen::Index>(hyper.K_max, n));
  const auto km = kmeanspp(res, k, 100, seed);
  NoiseInit out;
  NoiseComponentPosterior prior;
  prior.u_mean = hyper.eps0;
  prior.u_cov = hyper.Omega0;
  prior.iw = {hyper.nu0, hyper.B0};
  out.comps.assign(static_cast<std::size_t>(hyper.K_max), prior);
  out.label.resize(static_cast<std::size_t>(n));
  std::vector<std::vector<Eigen::Index>> members(static_cast<std::size_t>(k));
  for (Eigen::Index i = 0; i < n; ++i) {
    const int l = km.labels[static_cast<std::size_t>(i)] - 1;
    out.label[static_cast<std::size_t>(i)] = l;
    members[static_cast<std::size_t>(l)].push_back(i);
  }
  for (int j = 0; j < k; ++j) {
    const auto& m = members[static_cast<std::size_t>(j)];
    if (m.empty()) continue;
    const auto cnt = static_cast<double>(m.size());
    Vec mean = Vec::Zero(d);
    for (auto i : m) mean += res.row(i).transpose();
    mean /= cnt;
    Mat cov = Mat::Zero(d, d);
    for (auto i : m) {
      const Vec r = res.row(i).transpose() - mean;
      cov.noalias() += r * r.transpose();
    }
    cov /= cnt;
    if (extra) cov += *extra;
    auto& c = out.comps[static_cast<std::size_t>(j)];
    c.u_mean = mean;
    c.u_cov = hyper.Omega0 / (1.0 + cnt);
    c.iw.dof = hyper.nu0 + cnt;
    c.iw.scale = c.iw.dof * cov + hyper.B0;
    c.iw.scale = (0.5 * (c.iw.scale + c.iw.scale.transpose())).eval();
  }
  return out;
}

}  // namespace

KMeansResult kmeanspp(const Mat& data, int k, int max_iters, std::uint64_t seed) {
  const auto n = data.rows();
  if (k < 1 || k > n) throw DimensionError("kmeanspp: need 1 <= k <= N");
  if (max_iters < 0) throw DomainError("kmeanspp: max_iters must be >= 0");
  KMeansResult r;
  r.centroids = seed_centroids(data, k, seed);
  std::vector<int> label(static_cast<std::size_t>(n), 0);
  Vec dist(n);
  assign(data, r.centroids, label, dist);
  r.history.push_back(dist.sum());
  for (int it = 0; it < max_iters; ++it) {
    update_centroids(data, r.centroids, label, dist);
    const auto before = label;
    assign(data, r.centroids, label, dist);
    r.history.push_back(dist.sum());
    r.iterations = it + 1;
    if (label == before) break;
  }
  // Centroids consistent with the final labels.
  Mat sum = Mat::Zero(k, data.cols());
  std::vector<Eigen::Index> count(static_cast<std::size_t>(k), 0);
  for (Eigen::Index i = 0; i < n; ++i) {
    sum.row(label[static_cast<std::size_t>(i)]) += data.row(i);
    ++count[static_cast<std::size_t>(label[static_cast<std::size_t>(i)])];
  }
  for (int j = 0; j < k; ++j)
    if (count[static_cast<std::size_t>(j)] > 0) r.centroids.row(j) = sum.row(j) / static_cast<double>(count[static_cast<std::size_t>(j)]);
  r.distortion = 0.0;
  r.labels.resize(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    const int l = label[static_cast<std::size_t>(i)];
    r.distortion += sq_dist(data, i, r.centroids, l);
    r.labels[static_cast<std::size_t>(i)] = l + 1;
  }
  return r;
}

VariationalState init_state(const Mat& patches, const Hyperparameters& hyper, std::uint64_t seed) {
  hyper.validate();
  const auto n = patches.rows();
  const int d = hyper.dim();
  const int tn = hyper.T_max;
  const int kn = hyper.K_max;
  if (patches.cols() != d) throw DimensionError("init_state: patch dimension does not match hyperparameters");
  if (n < tn) throw DimensionError("init_state: need at least T_max patches");

  VariationalState s = prior_state(hyper, n);
  const auto km = kmeanspp(patches, tn, 100, seed);
  std::vector<std::vector<Eigen::Index>> members(static_cast<std::size_t>(tn));
  for (Eigen::Index i = 0; i < n; ++i) members[static_cast<std::size_t>(km.labels[static_cast<std::size_t>(i)] - 1)].push_back(i);

  const Mat p0 = hyper.nu0 * SpdFactor(hyper.B0).inverse();
  Mat residual(n, d);
  std::vector<double> noise_floor(static_cast<std::size_t>(tn), 0.0);
  std::vector<Mat> code_cov(static_cast<std::size_t>(tn));
  for (int t = 0; t < tn; ++t) {
    const auto& m = members[static_cast<std::size_t>(t)];
    auto& g = s.groups[static_cast<std::size_t>(t)];
    const auto cnt = static_cast<double>(m.size());
    if (m.empty()) continue;
    Vec mean = Vec::Zero(d);
    for (auto i : m) mean += patches.row(i).transpose();
    mean /= cnt;
    g.mu_mean = mean;
    g.mu_cov = hyper.Sigma0 / (1.0 + cnt);
    for (int v = 0; v < d; ++v) g.A_col_cov[static_cast<std::size_t>(v)] = hyper.c_a_sq(v) * Mat::Identity(d, d) / (1.0 + cnt);
    if (m.size() >= 2) {
      Mat centered(d, static_cast<Eigen::Index>(m.size()));
      for (std::size_t j = 0; j < m.size(); ++j) centered.col(static_cast<Eigen::Index>(j)) = patches.row(m[j]).transpose() - mean;
      const Eigen::BDCSVD<Mat> svd(centered, Eigen::ComputeThinU);
      const auto r = svd.singularValues().size();
      // Noise floor: the median of all d eigenvalues of the group covariance.
      Vec lam = Vec::Zero(d);
      lam.head(r) = svd.singularValues().array().square() / cnt;
      std::vector<double> sorted(lam.data(), lam.data() + d);
      std::nth_element(sorted.begin(), sorted.begin() + d / 2, sorted.end());
      double floor = sorted[static_cast<std::size_t>(d / 2)];
      if (d % 2 == 0) floor = 0.5 * (floor + *std::max_element(sorted.begin(), sorted.begin() + d / 2));
      const Vec scale = lam.head(r).array().sqrt();
      g.A_mean.setZero();
      g.A_mean.leftCols(r) = svd.matrixU() * scale.asDiagonal();
      noise_floor[static_cast<std::size_t>(t)] = floor;
    }
    // Residuals under the floor as noise level keep the noise in every
    // direction; the part absorbed by the codes, A Cov(y) A^T, is added back.
    const double fl = noise_floor[static_cast<std::size_t>(t)];
    const Mat p = fl > 0.0 ? Mat(Mat::Identity(d, d) / fl) : p0;
    const Mat at_p = g.A_mean.transpose() * p;
    const Mat prec_y = Mat::Identity(d, d) + at_p * g.A_mean;
    const Mat w = spd_solve(prec_y, at_p);
    if (fl > 0.0) code_cov[static_cast<std::size_t>(t)] = g.A_mean * spd_solve(prec_y, g.A_mean.transpose());
    for (auto i : m) {
      const Vec c = patches.row(i).transpose() - mean;
      residual.row(i) = (c - g.A_mean * (w * c)).transpose();
    }
  }

  std::optional<NoiseInit> pool;
  s.resp_group.setZero();
  for (int t = 0; t < tn; ++t) {
    const auto& m = members[static_cast<std::size_t>(t)];
    const auto ts = static_cast<std::size_t>(t);
    const NoiseInit* ni = nullptr;
    NoiseInit local;
    if (m.size() >= 2) {
      Mat res(static_cast<Eigen::Index>(m.size()), d);
      for (std::size_t j = 0; j < m.size(); ++j) res.row(static_cast<Eigen::Index>(j)) = residual.row(m[j]);
      const Mat* extra = code_cov[ts].size() > 0 ? &code_cov[ts] : nullptr;
      local = init_noise(res, hyper, mix64(seed) ^ mix64(0x5eed0000ULL + static_cast<std::uint64_t>(t)), extra);
      ni = &local;
    } else if (!m.empty()) {
      if (!pool) pool = init_noise(residual, hyper, mix64(seed) ^ mix64(0x900100ULL));
      ni = &*pool;
    }
    if (ni) s.noise[ts] = ni->comps;
    auto& q = s.resp_noise[ts];
    for (std::size_t j = 0; j < m.size(); ++j) {
      const auto i = m[j];
      s.resp_group(i, t) = 1.0;
      const int k = (ni == &local) ? local.label[j] : pool->label[static_cast<std::size_t>(i)];
      q.row(i).setZero();
      q(i, k) = 1.0;
    }
  }

  double tail = 0.0;
  for (int t = tn; t-- > 0;) {
    const auto cnt = static_cast<double>(members[static_cast<std::size_t>(t)].size());
    s.top_sticks[static_cast<std::size_t>(t)] = {cnt + 1.0, hyper.alpha + tail};
    tail += cnt;
  }
  for (int t = 0; t < tn; ++t) {
    std::vector<double> lam(static_cast<std::size_t>(kn), 0.0);
    for (auto i : members[static_cast<std::size_t>(t)]) {
      for (int k = 0; k < kn; ++k) lam[static_cast<std::size_t>(k)] += s.resp_noise[static_cast<std::size_t>(t)](i, k);
    }
    double ktail = 0.0;
    for (int k = kn; k-- > 0;) {
      s.noise_sticks[static_cast<std::size_t>(t)][static_cast<std::size_t>(k)] = {lam[static_cast<std::size_t>(k)] + 1.0, hyper.beta + ktail};
      ktail += lam[static_cast<std::size_t>(k)];
    }
  }
  return s;
}

double adjusted_rand_index(std::span<const int> a, std::span<const int> b) {
  if (a.size() != b.size()) throw DimensionError("adjusted_rand_index: labelings differ in length");
  const auto n = static_cast<double>(a.size());
  if (a.size() < 2) return 1.0;
  std::map<std::pair<int, int>, double> joint;
  std::map<int, double> ra;
  std::map<int, double> rb;
  for (std::size_t i = 0; i < a.size(); ++i) {
    joint[{a[i], b[i]}] += 1.0;
    ra[a[i]] += 1.0;
    rb[b[i]] += 1.0;
  }
  auto c2 = [](double x) { return 0.5 * x * (x - 1.0); };
  double sj = 0.0;
  double sa = 0.0;
  double sb = 0.0;
  for (const auto& [_, v] : joint) sj += c2(v);
  for (const auto& [_, v] : ra) sa += c2(v);
  for (const auto& [_, v] : rb) sb += c2(v);
  const double expected = sa * sb / c2(n);
  const double top = 0.5 * (sa + sb);
  if (top == expected) return 1.0;
  return (sj - expected) / (top - expected);
}

}  // namespace ddpt
