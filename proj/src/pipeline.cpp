#include "ddpt/pipeline.hpp"

#include "ddpt/errors.hpp"
#include "ddpt/initkit.hpp"

namespace ddpt {

Hyperparameters hyperparameters_for(const DenoiseConfig& config) {
  auto h = default_hyperparameters(config.patch_size * config.patch_size);
  h.alpha = config.alpha;
  h.beta = config.beta;
  h.T_max = config.T_max;
  h.K_max = config.K_max;
  h.validate();
  return h;
}

DenoiseResult denoise_image(const Image& noisy, const DenoiseConfig& config) {
  if (!(config.intensity_scale > 0.0)) throw DomainError("intensity scale must be positive");
  const auto ps = extract_patches(noisy, config.patch_size, config.stride);
  const Mat x = ps.data * config.intensity_scale;
  DenoiseResult r;
  VariationalState init;
  if (config.warm_start) {
    r.hyper = config.warm_start->hyper;
    if (r.hyper.dim() != ps.dim()) throw DimensionError("saved model patch dimension does not match patch size");
    init = config.warm_start->state;
    attach_patches(init, ps.count());
  } else {
    r.hyper = hyperparameters_for(config);
    init = init_state(x, r.hyper, config.seed);
  }
  r.vb = run_vb(x, r.hyper, std::move(init), config.inference);
  Mat est(ps.count(), ps.dim());
  for (Eigen::Index i = 0; i < ps.count(); ++i) {
    est.row(i) = recover_patch(i, r.vb.state, r.vb.projections).clean.transpose() / config.intensity_scale;
  }
  r.image = aggregate_patches(est, ps.anchors, ps.patch_size, noisy.height, noisy.width, config.clip);
  return r;
}

}  // namespace ddpt
