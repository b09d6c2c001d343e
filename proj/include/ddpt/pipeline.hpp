#pragma once

#include "ddpt/inference.hpp"
#include "ddpt/model.hpp"
#include "ddpt/patchio.hpp"

#include <cstdint>
#include <optional>

namespace ddpt {

struct DenoiseConfig {
  int patch_size = 8;
  int stride = 3;
  int T_max = 30;
  int K_max = 10;
  double alpha = 3.0;
  double beta = 1e-3;
  std::uint64_t seed = 0;
  bool clip = true;
  /// Patches are modeled at intensity * scale; 1/255 maps [0, 255] to
  /// [0, 1], the range the unit prior scales are set for.
  double intensity_scale = 1.0 / 255.0;
  InferenceOptions inference;
  /// Start from a saved posterior instead of the k-means initialization.
  std::optional<ModelFile> warm_start;
};

struct DenoiseResult {
  Image image;
  Hyperparameters hyper;
  VbResult vb;
};

Hyperparameters hyperparameters_for(const DenoiseConfig& config);

/// Extract patches, initialize, run variational inference, recover every
/// patch and aggregate the estimates.
DenoiseResult denoise_image(const Image& noisy, const DenoiseConfig& config);

}  // namespace ddpt
