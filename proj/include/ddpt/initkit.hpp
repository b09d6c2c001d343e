#pragma once

#include "ddpt/linalg.hpp"
#include "ddpt/model.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace ddpt {

struct KMeansResult {
  Mat centroids;              // k x d
  std::vector<int> labels;    // 1-based cluster of each row
  double distortion = 0.0;    // sum of squared distances to assigned centroids
  int iterations = 0;         // Lloyd passes performed
  /// Distortion after each assignment pass, first entry from the seeds.
  std::vector<double> history;
};

/// D^2 seeding followed by Lloyd iterations until labels stop changing or
/// max_iters passes. Empty clusters are reseeded to the point farthest from
/// its centroid. Ties go to the lowest index.
KMeansResult kmeanspp(const Mat& data, int k, int max_iters, std::uint64_t seed);

/// k-means++ grouping into T_max clusters, per-group SVD dictionaries and
/// residual k-means++ into at most K_max noise components.
VariationalState init_state(const Mat& patches, const Hyperparameters& hyper, std::uint64_t seed);

/// Adjusted Rand index between two labelings of the same items.
double adjusted_rand_index(std::span<const int> a, std::span<const int> b);

}  // namespace ddpt
