#include "ddpt/errors.hpp"
#include "ddpt/nonparametrics.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>
#include <vector>

using namespace ddpt;

namespace {

struct Moments {
  double sum = 0.0;
  double sq = 0.0;
  int n = 0;
  void add(double x) {
    sum += x;
    sq += x * x;
    ++n;
  }
  double mean() const { return sum / n; }
  double se() const { return std::sqrt(std::max(0.0, sq / n - mean() * mean()) / n); }
};

// Canonical relabeling by first occurrence.
std::vector<int> canonical(const std::vector<int>& labels) {
  std::map<int, int> ids;
  std::vector<int> out;
  for (int l : labels) {
    auto it = ids.find(l);
    if (it == ids.end()) it = ids.emplace(l, static_cast<int>(ids.size())).first;
    out.push_back(it->second);
  }
  return out;
}

// All set partitions of {0..n-1} in canonical form.
void enumerate_partitions(int n, std::vector<int>& cur, int blocks, std::vector<std::vector<int>>& out) {
  if (static_cast<int>(cur.size()) == n) {
    out.push_back(cur);
    return;
  }
  for (int b = 0; b <= blocks; ++b) {
    cur.push_back(b);
    enumerate_partitions(n, cur, std::max(blocks, b + 1), out);
    cur.pop_back();
  }
}

// Ewens sampling formula: probability of a given set partition under a CRP.
double ewens(const std::vector<int>& part, double alpha) {
  std::map<int, int> sizes;
  for (int b : part) ++sizes[b];
  double p = 1.0;
  for (const auto& [_, s] : sizes) {
    p *= alpha;
    for (int j = 1; j < s; ++j) p *= j;
  }
  for (std::size_t i = 0; i < part.size(); ++i) p /= alpha + static_cast<double>(i);
  return p;
}

// Exact leaf-partition distribution of a two-layer tourism process on n
// tourists: a CRP partition refined by an independent CRP inside every block.
std::map<std::vector<int>, double> two_layer_oracle(int n, double a1, double a2) {
  std::vector<std::vector<int>> parts;
  std::vector<int> cur;
  enumerate_partitions(n, cur, 0, parts);
  std::map<std::vector<int>, double> out;
  for (const auto& top : parts) {
    const double p_top = ewens(top, a1);
    // Refinements: any partition that refines top; weight is the product of
    // per-block Ewens probabilities.
    for (const auto& leaf : parts) {
      bool refines = true;
      for (int i = 0; i < n && refines; ++i)
        for (int j = 0; j < n; ++j)
          if (leaf[i] == leaf[j] && top[i] != top[j]) refines = false;
      if (!refines) continue;
      double p = p_top;
      std::map<int, std::vector<int>> blocks;
      for (int i = 0; i < n; ++i) blocks[top[i]].push_back(leaf[i]);
      for (const auto& [_, members] : blocks) p *= ewens(canonical(members), a2);
      out[leaf] += p;
    }
  }
  return out;
}

}  // namespace

TEST_CASE("crp single customer") {
  for (double a : {0.1, 1.0, 50.0}) CHECK(crp_sample(1, a, 3).assignments == std::vector<int>{1});
}

TEST_CASE("crp partitions are canonical and deterministic") {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto p = crp_sample(40, 2.0, seed);
    CHECK(p.assignments == crp_sample(40, 2.0, seed).assignments);
    int seen = 0;
    for (int a : p.assignments) {
      CHECK(a >= 1);
      CHECK(a <= seen + 1);
      seen = std::max(seen, a);
    }
    const auto sizes = p.table_sizes();
    CHECK(static_cast<int>(sizes.size()) == p.table_count());
    CHECK(std::accumulate(sizes.begin(), sizes.end(), 0) == 40);
    for (int s : sizes) CHECK(s > 0);
  }
}

TEST_CASE("crp pair probability and expected table count") {
  const int runs = 100000;
  Moments same;
  Moments tables;
  for (int r = 0; r < runs; ++r) {
    const auto p2 = crp_sample(2, 1.0, static_cast<std::uint64_t>(r));
    same.add(p2.assignments[0] == p2.assignments[1] ? 1.0 : 0.0);
    tables.add(crp_sample(3, 1.0, 1000000 + static_cast<std::uint64_t>(r)).table_count());
  }
  CHECK(std::abs(same.mean() - 0.5) < 3.0 * same.se());
  CHECK(std::abs(tables.mean() - 11.0 / 6.0) < 3.0 * tables.se());
}

TEST_CASE("crp new-table probability per step") {
  const double alpha = 1.5;
  const int n = 8;
  const int runs = 40000;
  std::vector<Moments> fresh(n);
  for (int r = 0; r < runs; ++r) {
    const auto p = crp_sample(n, alpha, 77 + static_cast<std::uint64_t>(r));
    int seen = 0;
    for (int m = 0; m < n; ++m) {
      const int a = p.assignments[static_cast<std::size_t>(m)];
      fresh[static_cast<std::size_t>(m)].add(a > seen ? 1.0 : 0.0);
      seen = std::max(seen, a);
    }
  }
  for (int m = 1; m < n; ++m) {
    const double expect = alpha / (m + alpha);
    const auto& f = fresh[static_cast<std::size_t>(m)];
    CHECK(std::abs(f.mean() - expect) < 3.0 * f.se() + 1e-12);
  }
}

TEST_CASE("stick weights from forced proportions") {
  const std::vector<double> half{0.5, 0.5, 0.5};
  const auto w = stick_weights_from(half);
  CHECK(w.pi == std::vector<double>{0.5, 0.25, 0.125});
  const std::vector<double> first{1.0, 0.3, 0.9};
  CHECK(stick_weights_from(first).pi == std::vector<double>{1.0, 0.0, 0.0});
}

TEST_CASE("stick breaking residual mass at long truncation") {
  double total = 0.0;
  const int seeds = 10000;
  for (int s = 0; s < seeds; ++s) total += stick_breaking(1.0, 200, static_cast<std::uint64_t>(s)).total_mass();
  CHECK(total / seeds >= 1.0 - std::pow(2.0, -190.0) - 1e-15);
}

TEST_CASE("stick breaking weights follow the geometric law") {
  const double alpha = 2.0;
  const int trunc = 6;
  std::vector<Moments> m(trunc);
  for (int s = 0; s < 10000; ++s) {
    const auto w = stick_breaking(alpha, trunc, 5000 + static_cast<std::uint64_t>(s));
    for (int i = 0; i < trunc; ++i) {
      CHECK(w.pi[static_cast<std::size_t>(i)] > 0.0);
      m[static_cast<std::size_t>(i)].add(w.pi[static_cast<std::size_t>(i)]);
    }
    CHECK(w.total_mass() <= 1.0);
  }
  for (int i = 0; i < trunc; ++i) {
    const double expect = (1.0 / (1.0 + alpha)) * std::pow(alpha / (1.0 + alpha), i);
    CHECK(std::abs(m[static_cast<std::size_t>(i)].mean() - expect) < 3.0 * m[static_cast<std::size_t>(i)].se());
  }
}

TEST_CASE("crtp with one layer is the CRP") {
  const std::vector<double> a{1.3};
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto paths = crtp_sample(30, 1, a, seed);
    const auto p = crp_sample(30, 1.3, seed);
    for (std::size_t i = 0; i < paths.size(); ++i) CHECK(paths[i][0] == p.assignments[i]);
  }
}

TEST_CASE("crtp paths respect the tree") {
  const std::vector<double> a{2.0, 1.0, 0.5};
  const auto paths = crtp_sample(200, 3, a, 9);
  std::map<std::pair<int, int>, int> parent;
  for (const auto& p : paths) {
    REQUIRE(p.size() == 3);
    for (int l = 1; l < 3; ++l) {
      const auto key = std::make_pair(l, p[static_cast<std::size_t>(l)]);
      auto it = parent.find(key);
      if (it == parent.end()) {
        parent[key] = p[static_cast<std::size_t>(l - 1)];
      } else {
        CHECK(it->second == p[static_cast<std::size_t>(l - 1)]);
      }
    }
  }
}

TEST_CASE("crtp vanishing second-layer concentration gives one child per table") {
  const std::vector<double> a{2.0, 1e-12};
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    std::map<int, std::set<int>> children;
    for (const auto& p : crtp_sample(25, 2, a, seed)) children[p[0]].insert(p[1]);
    for (const auto& [_, c] : children) CHECK(c.size() == 1);
  }
}

TEST_CASE("crtp leaf partitions match exact enumeration and are exchangeable") {
  const std::vector<double> a{1.0, 1.0};
  const int runs = 100000;
  std::map<std::vector<int>, double> freq2;
  std::map<std::vector<int>, double> freq3;
  for (int r = 0; r < runs; ++r) {
    for (int n : {2, 3}) {
      const auto paths = crtp_sample(n, 2, a, static_cast<std::uint64_t>(r) * 2 + (n == 3));
      std::vector<int> leaf;
      for (const auto& p : paths) leaf.push_back(p[1]);
      (n == 2 ? freq2 : freq3)[canonical(leaf)] += 1.0 / runs;
    }
  }
  const auto oracle2 = two_layer_oracle(2, 1.0, 1.0);
  CHECK(oracle2.at({0, 0}) == doctest::Approx(0.25));
  for (const auto& [part, p] : oracle2) {
    const double se = std::sqrt(p * (1 - p) / runs);
    CHECK(std::abs(freq2[part] - p) < 3.0 * se);
  }
  const auto oracle3 = two_layer_oracle(3, 1.0, 1.0);
  double total = 0.0;
  for (const auto& [part, p] : oracle3) {
    total += p;
    const double se = std::sqrt(p * (1 - p) / runs);
    CHECK(std::abs(freq3[part] - p) < 3.0 * se);
  }
  CHECK(total == doctest::Approx(1.0));
  // Relabeling tourists permutes the three partitions of type {2, 1}.
  const double p_a = oracle3.at({0, 0, 1});
  CHECK(oracle3.at({0, 1, 0}) == doctest::Approx(p_a));
  CHECK(oracle3.at({0, 1, 1}) == doctest::Approx(p_a));
  const double se = std::sqrt(2.0 * p_a * (1 - p_a) / runs);
  CHECK(std::abs(freq3[{0, 0, 1}] - freq3[{0, 1, 0}]) < 3.0 * se);
  CHECK(std::abs(freq3[{0, 0, 1}] - freq3[{0, 1, 1}]) < 3.0 * se);
}

TEST_CASE("ddpt stick tree") {
  const std::vector<int> trunc{2, 2};
  const auto tree = ddpt_stick_tree_from(trunc, [](std::size_t) { return 0.5; });
  CHECK(tree.mass == 1.0);
  CHECK(tree.leaf_masses() == std::vector<double>{0.25, 0.125, 0.125, 0.0625});

  const std::vector<double> a1{1.7};
  const std::vector<int> t1{12};
  const auto one = ddpt_stick_tree(a1, t1, 42);
  CHECK(one.breaks.pi == stick_breaking(1.7, 12, 42).pi);

  const std::vector<double> a3{3.0, 1.0, 0.5};
  const std::vector<int> t3{5, 4, 3};
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const auto tree3 = ddpt_stick_tree(a3, t3, seed);
    const auto leaves = tree3.leaf_masses();
    CHECK(leaves.size() == 60);
    const double sum = std::accumulate(leaves.begin(), leaves.end(), 0.0);
    CHECK(sum <= 1.0 + 1e-15);
    for (double l : leaves) CHECK(l >= 0.0);
  }
}
