#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace ddpt {

/// CRP seating outcome. Table numbers are 1-based and assigned in order of
/// first occupancy, so they always form {1, ..., table_count()}.
struct Partition {
  std::vector<int> assignments;

  int table_count() const;
  std::vector<int> table_sizes() const;
};

/// Truncated stick-breaking weights: pi_i = v_i * prod_{j<i} (1 - v_j).
struct StickWeights {
  std::vector<double> v;
  std::vector<double> pi;

  double total_mass() const;
};

/// Per-tourist route; entry l is the node id at layer l. Node ids are
/// 1-based per layer, numbered in order of first occupancy across the layer.
using TreePath = std::vector<int>;

Partition crp_sample(int n, double alpha, std::uint64_t seed);

StickWeights stick_breaking(double alpha, int truncation, std::uint64_t seed);

/// Weights from given breaking proportions.
StickWeights stick_weights_from(std::span<const double> v);

/// Chinese restaurant tourism process: layer 1 is one CRP over all tourists,
/// and every table at layer l runs its own CRP (concentration alphas[l]) over
/// the tourists it routes to the next layer.
std::vector<TreePath> crtp_sample(int n, int layers, std::span<const double> alphas,
                                  std::uint64_t seed);

/// Node of a multi-layer stick-breaking tree. The root carries mass 1; each
/// node's children break the node's own mass.
struct StickNode {
  double mass = 1.0;
  StickWeights breaks;  // relative weights of the children (empty at leaves)
  std::vector<StickNode> children;

  /// Leaf masses in depth-first order.
  std::vector<double> leaf_masses() const;
};

StickNode ddpt_stick_tree(std::span<const double> alphas, std::span<const int> truncations,
                          std::uint64_t seed);

/// Same construction with breaking proportions supplied by draw(layer),
/// layer counted from 0 for the root's children.
StickNode ddpt_stick_tree_from(std::span<const int> truncations,
                               const std::function<double(std::size_t)>& draw);

}  // namespace ddpt
