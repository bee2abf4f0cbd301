#pragma once

// Shallow, wide label tree for the hierarchical softmax output layer. Built
// top-down by recursive K-means over destination representations.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include "flowcast/error.hpp"
#include "flowcast/rng.hpp"
#include "flowcast/sparse.hpp"

namespace flowcast::dlf {

struct HsTree {
  struct Node {
    int parent = -1;
    int depth = 0;
    int destination = -1;  // >= 0 for leaves
    std::vector<int> children;

    bool is_leaf() const noexcept { return destination >= 0; }
  };

  std::vector<Node> nodes;        // nodes[0] is the root; parents precede children
  std::vector<int> leaf_of;       // destination id -> tree node index

  std::size_t n_destinations() const noexcept { return leaf_of.size(); }
  std::size_t size() const noexcept { return nodes.size(); }

  int depth() const {
    int d = 0;
    for (const auto& n : nodes) d = std::max(d, n.depth);
    return d;
  }

  /// Throws unless every destination has exactly one leaf and parent links
  /// are consistent.
  void validate() const {
    if (nodes.empty() || nodes[0].parent != -1) throw Error("hs tree has no root");
    std::vector<int> count(leaf_of.size(), 0);
    for (std::size_t k = 0; k < nodes.size(); ++k) {
      const auto& n = nodes[k];
      if (k > 0 && (n.parent < 0 || n.parent >= static_cast<int>(k)))
        throw Error("hs tree nodes must be stored parents-first");
      if (n.is_leaf()) {
        if (!n.children.empty()) throw Error("hs tree leaf with children");
        if (n.destination >= static_cast<int>(leaf_of.size())) throw Error("hs leaf out of range");
        ++count[static_cast<std::size_t>(n.destination)];
        if (leaf_of[static_cast<std::size_t>(n.destination)] != static_cast<int>(k))
          throw Error("hs leaf index mismatch");
      } else if (n.children.empty()) {
        throw Error("hs internal node without children");
      }
      for (int c : n.children)
        if (nodes.at(static_cast<std::size_t>(c)).parent != static_cast<int>(k))
          throw Error("hs child/parent mismatch");
    }
    for (int c : count)
      if (c != 1) throw Error("every destination must appear at exactly one leaf");
  }
};

/// Depth-1 tree: the root's children are all destinations (flat softmax).
inline HsTree flat_tree(std::size_t n_destinations) {
  HsTree tree;
  tree.nodes.push_back({});
  tree.leaf_of.resize(n_destinations);
  for (std::size_t j = 0; j < n_destinations; ++j) {
    tree.nodes[0].children.push_back(static_cast<int>(tree.nodes.size()));
    tree.leaf_of[j] = static_cast<int>(tree.nodes.size());
    tree.nodes.push_back({0, 1, static_cast<int>(j), {}});
  }
  return tree;
}

namespace detail {

/// Lloyd's algorithm with k-means++ seeding. `members` index rows of `reps`;
/// returns the cluster of each member. Ties go to the lowest cluster index.
inline std::vector<std::size_t> kmeans(const Eigen::MatrixXd& reps, const std::vector<NodeId>& members,
                                       std::size_t k, Rng& rng, int max_iter = 100) {
  const std::size_t n = members.size();
  const auto row = [&](std::size_t m) { return reps.row(static_cast<Eigen::Index>(members[m])); };
  std::vector<Eigen::RowVectorXd> centers;
  centers.push_back(row(static_cast<std::size_t>(rng.below(n))));
  std::vector<double> d2(n);
  while (centers.size() < k) {
    double total = 0.0;
    for (std::size_t m = 0; m < n; ++m) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& c : centers) best = std::min(best, (row(m) - c).squaredNorm());
      d2[m] = best;
      total += best;
    }
    if (!(total > 0.0)) break;  // all remaining points coincide with a center
    double target = rng.uniform() * total;
    std::size_t pick = n - 1;
    for (std::size_t m = 0; m < n; ++m) {
      target -= d2[m];
      if (target < 0.0) {
        pick = m;
        break;
      }
    }
    centers.push_back(row(pick));
  }

  std::vector<std::size_t> assign(n, 0);
  for (int iter = 0; iter < max_iter; ++iter) {
    bool changed = false;
    for (std::size_t m = 0; m < n; ++m) {
      std::size_t best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < centers.size(); ++c) {
        const double d = (row(m) - centers[c]).squaredNorm();
        if (d < best_d) {
          best_d = d;
          best = c;
        }
      }
      if (iter == 0 || assign[m] != best) changed = true;
      assign[m] = best;
    }
    if (!changed) break;
    for (std::size_t c = 0; c < centers.size(); ++c) {
      Eigen::RowVectorXd sum = Eigen::RowVectorXd::Zero(reps.cols());
      std::size_t count = 0;
      for (std::size_t m = 0; m < n; ++m)
        if (assign[m] == c) {
          sum += row(m);
          ++count;
        }
      if (count > 0) centers[c] = sum / static_cast<double>(count);
    }
  }
  return assign;
}

/// Best of `restarts` k-means runs by within-cluster sum of squares.
inline std::vector<std::size_t> kmeans_best(const Eigen::MatrixXd& reps, const std::vector<NodeId>& members,
                                            std::size_t k, Rng& rng, int restarts = 8) {
  std::vector<std::size_t> best;
  double best_inertia = std::numeric_limits<double>::infinity();
  for (int r = 0; r < restarts; ++r) {
    auto assign = kmeans(reps, members, k, rng);
    std::vector<Eigen::RowVectorXd> sum(k, Eigen::RowVectorXd::Zero(reps.cols()));
    std::vector<double> count(k, 0.0);
    for (std::size_t m = 0; m < members.size(); ++m) {
      sum[assign[m]] += reps.row(static_cast<Eigen::Index>(members[m]));
      count[assign[m]] += 1.0;
    }
    double inertia = 0.0;
    for (std::size_t m = 0; m < members.size(); ++m)
      inertia += (reps.row(static_cast<Eigen::Index>(members[m])) - sum[assign[m]] / count[assign[m]]).squaredNorm();
    if (inertia < best_inertia) {
      best_inertia = inertia;
      best = std::move(assign);
    }
  }
  return best;
}

inline int build_subtree(HsTree& tree, const Eigen::MatrixXd& reps, std::vector<NodeId> members, int parent,
                         int level, int max_depth, std::size_t branching, Rng& rng) {
  const int index = static_cast<int>(tree.nodes.size());
  tree.nodes.push_back({parent, level, -1, {}});
  auto add_leaf = [&](NodeId j) {
    const int leaf = static_cast<int>(tree.nodes.size());
    tree.nodes.push_back({index, level + 1, static_cast<int>(j), {}});
    tree.nodes[static_cast<std::size_t>(index)].children.push_back(leaf);
    tree.leaf_of[j] = leaf;
  };
  if (level + 1 >= max_depth || members.size() <= branching) {
    for (NodeId j : members) add_leaf(j);
    return index;
  }
  const auto assign = kmeans_best(reps, members, branching, rng);
  std::vector<std::vector<NodeId>> groups(branching);
  for (std::size_t m = 0; m < members.size(); ++m) groups[assign[m]].push_back(members[m]);
  std::erase_if(groups, [](const auto& g) { return g.empty(); });
  if (groups.size() < 2) {
    // Degenerate (all representations equal): split contiguously by id.
    groups.assign(branching, {});
    for (std::size_t m = 0; m < members.size(); ++m) groups[m * branching / members.size()].push_back(members[m]);
    std::erase_if(groups, [](const auto& g) { return g.empty(); });
  }
  for (auto& g : groups) std::sort(g.begin(), g.end());
  std::sort(groups.begin(), groups.end(), [](const auto& a, const auto& b) { return a.front() < b.front(); });
  for (auto& g : groups) {
    if (g.size() == 1) {
      add_leaf(g.front());
    } else {
      const int child = build_subtree(tree, reps, std::move(g), index, level + 1, max_depth, branching, rng);
      tree.nodes[static_cast<std::size_t>(index)].children.push_back(child);
    }
  }
  return index;
}

}  // namespace detail

/// Default branching factor ceil(N^(1/3)), so three levels cover N leaves.
inline std::size_t default_branching(std::size_t n_destinations) {
  auto b = static_cast<std::size_t>(std::ceil(std::cbrt(static_cast<double>(n_destinations)) - 1e-9));
  return std::max<std::size_t>(b, 2);
}

/// Recursive top-down K-means tree. `reps` has one row per destination.
inline HsTree build_hs_tree(const Eigen::MatrixXd& reps, int depth, std::size_t branching, std::uint64_t seed) {
  if (branching < 2) throw Error("hs tree branching factor must be >= 2");
  if (depth < 1 || depth > 3) throw Error("hs tree depth must be in [1, 3]");
  const auto n = static_cast<std::size_t>(reps.rows());
  if (n == 0) throw Error("hs tree needs at least one destination");
  if (depth == 1) return flat_tree(n);
  HsTree tree;
  tree.leaf_of.assign(n, -1);
  std::vector<NodeId> all(n);
  std::iota(all.begin(), all.end(), NodeId{0});
  Rng rng = Rng::stream(seed, "tree");
  detail::build_subtree(tree, reps, std::move(all), -1, 0, depth, branching, rng);
  tree.validate();
  return tree;
}

}  // namespace flowcast::dlf
