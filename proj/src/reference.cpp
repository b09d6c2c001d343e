#include "ddpt/kernels.hpp"

#include <cmath>
#include <numbers>

namespace ddpt::reference {

ProjectionPosterior compute_projections(const Mat& x, const VariationalState& state,
                                        const ModelMoments& mom, double threshold) {
  const int d = mom.dim;
  ProjectionPosterior out(state.patch_count(), state.group_count(), d);
  for (int t = 0; t < state.group_count(); ++t) {
    const auto& q = state.resp_noise[static_cast<std::size_t>(t)];
    for (Eigen::Index i = 0; i < state.patch_count(); ++i) {
      if (!(state.resp_group(i, t) > threshold)) continue;
      Mat prec = Mat::Identity(d, d);
      Vec rhs = Vec::Zero(d);
      for (int k = 0; k < mom.components; ++k) {
        const auto& m = mom.at(t, k);
        prec += q(i, k) * m.gram;
        const Vec theta = x.row(i).transpose() - m.offset;
        rhs += q(i, k) * (m.proj * theta);
      }
      const Eigen::PartialPivLU<Mat> lu(prec);
      const Mat cov = lu.inverse();
      ProjectionEntry e;
      e.patch = i;
      e.mean = cov * rhs;
      e.second_moment = cov + e.mean * e.mean.transpose();
      e.logdet_cov = -std::log(lu.determinant());
      out.append(t, std::move(e));
    }
  }
  return out;
}

std::vector<Mat> loglik_table(const Mat& x, const ModelMoments& mom,
                              const ProjectionPosterior& proj) {
  const auto n = x.rows();
  const int d = mom.dim;
  std::vector<Mat> table(static_cast<std::size_t>(mom.groups), Mat(n, mom.components));
  for (int t = 0; t < mom.groups; ++t) {
    for (int k = 0; k < mom.components; ++k) {
      const auto& m = mom.at(t, k);
      for (Eigen::Index i = 0; i < n; ++i) {
        const Vec theta = x.row(i).transpose() - m.offset;
        const Vec y = proj.mean(i, t);
        const Mat yy = proj.second_moment(i, t);
        const double quad = theta.dot(m.precision * theta) - 2.0 * y.dot(m.proj * theta) +
                            (m.gram * yy).trace() + m.trace_cov;
        table[static_cast<std::size_t>(t)](i, k) =
            -0.5 * d * std::log(2.0 * std::numbers::pi) - 0.5 * m.logdet - 0.5 * quad;
      }
    }
  }
  return table;
}

Sufficients accumulate_statistics(const Mat& x, const VariationalState& state,
                                  const ProjectionPosterior& proj) {
  const auto n = x.rows();
  const auto d = x.cols();
  Sufficients s;
  s.groups = state.group_count();
  s.components = state.component_count();
  s.delta.assign(static_cast<std::size_t>(s.groups), 0.0);
  for (int t = 0; t < s.groups; ++t) {
    for (Eigen::Index i = 0; i < n; ++i) s.delta[static_cast<std::size_t>(t)] += state.resp_group(i, t);
    for (int k = 0; k < s.components; ++k) {
      ComponentStats st;
      st.sx = Vec::Zero(d);
      st.sxx = Mat::Zero(d, d);
      st.sm = Vec::Zero(d);
      st.sxm = Mat::Zero(d, d);
      st.syy = Mat::Zero(d, d);
      for (Eigen::Index i = 0; i < n; ++i) {
        const double w = state.resp_group(i, t) * state.resp_noise[static_cast<std::size_t>(t)](i, k);
        const Vec xi = x.row(i).transpose();
        const Vec y = proj.mean(i, t);
        st.mass += w;
        st.sx += w * xi;
        st.sxx += w * xi * xi.transpose();
        st.sm += w * y;
        st.sxm += w * xi * y.transpose();
        st.syy += w * proj.second_moment(i, t);
      }
      s.stats.push_back(std::move(st));
    }
  }
  return s;
}

}  // namespace ddpt::reference
