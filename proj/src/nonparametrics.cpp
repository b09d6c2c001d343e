#include "ddpt/nonparametrics.hpp"

#include "ddpt/errors.hpp"
#include "ddpt/rng.hpp"

#include <algorithm>
#include <map>
#include <numeric>

namespace ddpt {

int Partition::table_count() const {
  if (assignments.empty()) return 0;
  return *std::max_element(assignments.begin(), assignments.end());
}

std::vector<int> Partition::table_sizes() const {
  std::vector<int> sizes(static_cast<std::size_t>(table_count()), 0);
  for (int a : assignments) ++sizes[static_cast<std::size_t>(a - 1)];
  return sizes;
}

double StickWeights::total_mass() const { return std::accumulate(pi.begin(), pi.end(), 0.0); }

namespace {

// Seat customers sequentially; sizes is updated in place and the chosen
// 0-based table index is returned.
int seat(CounterRng& rng, std::vector<int>& sizes, int seated, double alpha) {
  const double u = rng.uniform() * (seated + alpha);
  double acc = 0.0;
  for (std::size_t t = 0; t < sizes.size(); ++t) {
    acc += sizes[t];
    if (u < acc) {
      ++sizes[t];
      return static_cast<int>(t);
    }
  }
  sizes.push_back(1);
  return static_cast<int>(sizes.size()) - 1;
}

}  // namespace

Partition crp_sample(int n, double alpha, std::uint64_t seed) {
  if (n < 1) throw DomainError("crp_sample: n must be >= 1");
  if (!(alpha > 0.0)) throw DomainError("crp_sample: alpha must be positive");
  CounterRng rng(seed);
  Partition out;
  out.assignments.reserve(static_cast<std::size_t>(n));
  std::vector<int> sizes;
  for (int m = 0; m < n; ++m) out.assignments.push_back(seat(rng, sizes, m, alpha) + 1);
  return out;
}

StickWeights stick_weights_from(std::span<const double> v) {
  StickWeights out;
  out.v.assign(v.begin(), v.end());
  out.pi.resize(v.size());
  double remaining = 1.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    out.pi[i] = v[i] * remaining;
    remaining *= 1.0 - v[i];
  }
  return out;
}

StickWeights stick_breaking(double alpha, int truncation, std::uint64_t seed) {
  if (truncation < 1) throw DomainError("stick_breaking: truncation must be >= 1");
  if (!(alpha > 0.0)) throw DomainError("stick_breaking: alpha must be positive");
  CounterRng rng(seed);
  std::vector<double> v(static_cast<std::size_t>(truncation));
  for (auto& x : v) x = rng.beta(1.0, alpha);
  return stick_weights_from(v);
}

std::vector<TreePath> crtp_sample(int n, int layers, std::span<const double> alphas,
                                  std::uint64_t seed) {
  if (n < 1) throw DomainError("crtp_sample: n must be >= 1");
  if (layers < 1) throw DomainError("crtp_sample: layers must be >= 1");
  if (alphas.size() < static_cast<std::size_t>(layers)) {
    throw DimensionError("crtp_sample: need one concentration per layer");
  }
  for (int l = 0; l < layers; ++l) {
    if (!(alphas[static_cast<std::size_t>(l)] > 0.0)) {
      throw DomainError("crtp_sample: concentrations must be positive");
    }
  }
  CounterRng rng(seed);
  std::vector<TreePath> paths(static_cast<std::size_t>(n), TreePath(static_cast<std::size_t>(layers)));
  // Restaurant at layer l is identified by the parent node id (0 = the
  // single restaurant of layer 1). Each restaurant keeps its table sizes
  // and the global node id of every table.
  struct Restaurant {
    std::vector<int> sizes;
    std::vector<int> node_ids;
    int seated = 0;
  };
  std::vector<std::map<int, Restaurant>> restaurants(static_cast<std::size_t>(layers));
  std::vector<int> next_id(static_cast<std::size_t>(layers), 1);
  for (int i = 0; i < n; ++i) {
    int parent = 0;
    for (int l = 0; l < layers; ++l) {
      const auto li = static_cast<std::size_t>(l);
      Restaurant& r = restaurants[li][parent];
      const int table = seat(rng, r.sizes, r.seated, alphas[li]);
      ++r.seated;
      if (static_cast<std::size_t>(table) == r.node_ids.size()) r.node_ids.push_back(next_id[li]++);
      const int node = r.node_ids[static_cast<std::size_t>(table)];
      paths[static_cast<std::size_t>(i)][li] = node;
      parent = node;
    }
  }
  return paths;
}

std::vector<double> StickNode::leaf_masses() const {
  if (children.empty()) return {mass};
  std::vector<double> out;
  for (const auto& c : children) {
    auto sub = c.leaf_masses();
    out.insert(out.end(), sub.begin(), sub.end());
  }
  return out;
}

namespace {

void grow(StickNode& node, std::span<const int> truncations, std::size_t layer,
          const std::function<double(std::size_t)>& draw) {
  if (layer >= truncations.size()) return;
  std::vector<double> v(static_cast<std::size_t>(truncations[layer]));
  for (auto& x : v) x = draw(layer);
  node.breaks = stick_weights_from(v);
  node.children.resize(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    node.children[i].mass = node.mass * node.breaks.pi[i];
    grow(node.children[i], truncations, layer + 1, draw);
  }
}

}  // namespace

StickNode ddpt_stick_tree_from(std::span<const int> truncations,
                               const std::function<double(std::size_t)>& draw) {
  for (int t : truncations) {
    if (t < 1) throw DomainError("ddpt_stick_tree: truncations must be >= 1");
  }
  StickNode root;
  root.mass = 1.0;
  grow(root, truncations, 0, draw);
  return root;
}

StickNode ddpt_stick_tree(std::span<const double> alphas, std::span<const int> truncations,
                          std::uint64_t seed) {
  if (alphas.size() < truncations.size()) {
    throw DimensionError("ddpt_stick_tree: need one concentration per layer");
  }
  CounterRng rng(seed);
  return ddpt_stick_tree_from(truncations, [&](std::size_t layer) {
    return rng.beta(1.0, alphas[layer]);
  });
}

}  // namespace ddpt
