#pragma once

// Next-month outflow forecasting: three-month transactional features and a
// squared-error gradient-boosted regression tree ensemble.

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <span>
#include <vector>

#include "flowcast/error.hpp"
#include "flowcast/graph_core.hpp"

namespace flowcast::volume {

inline constexpr std::size_t kVolumeFeatureDim = 13;
inline constexpr std::size_t kVolumeWindow = 3;

/// On the log(1+x) scale, months t-3..t-1:
///   [0,3)  sent totals          [3,6)  received totals
///   [6,9)  sent - received      [9,11) month-over-month change in sent
///   [11,13) month-over-month change in received
using VolumeFeatures = std::array<double, kVolumeFeatureDim>;

/// Per-node monthly sent and received totals.
struct MonthlyTotals {
  std::vector<std::vector<double>> sent;      // [t][node]
  std::vector<std::vector<double>> received;  // [t][node]

  explicit MonthlyTotals(const SnapshotSeries& series) {
    const std::size_t n = series.n_nodes();
    for (const auto& snap : series.snapshots) {
      std::vector<double> out(n, 0.0), in(n, 0.0);
      for (NodeId i = 0; i < n; ++i)
        for (const auto& e : snap.adjacency.row(i)) {
          out[i] += e.value;
          in[e.col] += e.value;
        }
      sent.push_back(std::move(out));
      received.push_back(std::move(in));
    }
  }

  std::size_t size() const noexcept { return sent.size(); }
};

inline VolumeFeatures build_volume_features(const MonthlyTotals& totals, NodeId i, std::size_t t) {
  if (t < kVolumeWindow) throw Error("volume features need t >= 3");
  if (t > totals.size()) throw Error("volume features requested beyond the series end");
  VolumeFeatures f{};
  std::array<double, 3> s{}, r{};
  for (std::size_t k = 0; k < kVolumeWindow; ++k) {
    const std::size_t m = t - kVolumeWindow + k;
    s[k] = std::log1p(totals.sent[m].at(i));
    r[k] = std::log1p(totals.received[m].at(i));
  }
  for (std::size_t k = 0; k < 3; ++k) {
    f[k] = s[k];
    f[3 + k] = r[k];
    f[6 + k] = s[k] - r[k];
  }
  f[9] = s[1] - s[0];
  f[10] = s[2] - s[1];
  f[11] = r[1] - r[0];
  f[12] = r[2] - r[1];
  return f;
}

inline VolumeFeatures build_volume_features(const SnapshotSeries& series, NodeId i, std::size_t t) {
  return build_volume_features(MonthlyTotals(series.prefix(t)), i, t);
}

// ---------------------------------------------------------------------------
// Gradient boosting

struct RegressionTree {
  struct Node {
    int feature = -1;  // -1 for leaves
    double threshold = 0.0;  // x[feature] <= threshold goes left
    int left = -1;
    int right = -1;
    double value = 0.0;
    int depth = 0;
  };

  std::vector<Node> nodes;  // nodes[0] is the root

  double predict(std::span<const double> x) const {
    int k = 0;
    while (nodes[static_cast<std::size_t>(k)].feature >= 0) {
      const auto& n = nodes[static_cast<std::size_t>(k)];
      k = x[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left : n.right;
    }
    return nodes[static_cast<std::size_t>(k)].value;
  }

  int depth() const {
    int d = 0;
    for (const auto& n : nodes) d = std::max(d, n.depth);
    return d;
  }
};

struct GbdtConfig {
  double learning_rate = 1e-4;
  std::size_t n_estimators = 20000;
  std::size_t max_depth = 4;
  std::uint64_t seed = 0;  // recorded only; fitting is deterministic
};

struct GbdtModel {
  double base = 0.0;
  double learning_rate = 0.0;
  std::size_t max_depth = 0;
  std::size_t n_features = 0;
  std::vector<RegressionTree> trees;

  /// Prediction using only the first `n_trees` trees.
  double predict(std::span<const double> x, std::size_t n_trees) const {
    double sum = 0.0;
    for (std::size_t k = 0; k < std::min(n_trees, trees.size()); ++k) sum += trees[k].predict(x);
    return base + learning_rate * sum;
  }

  double predict(std::span<const double> x) const { return predict(x, trees.size()); }
};

namespace detail {

struct SplitCandidate {
  double gain = 0.0;
  int feature = -1;
  double threshold = 0.0;
};

}  // namespace detail

/// Squared-error boosting. Each tree is grown level by level with an
/// exhaustive search over midpoints between sorted distinct feature values;
/// ties go to the lowest feature index, then the lowest threshold.
inline GbdtModel gbdt_fit(const Eigen::MatrixXd& x, std::span<const double> y, const GbdtConfig& config) {
  const auto n = static_cast<std::size_t>(x.rows());
  const auto n_features = static_cast<std::size_t>(x.cols());
  if (n == 0 || n != y.size()) throw DimensionError("gbdt_fit: need |X| = |y| >= 1");
  for (double v : y)
    if (!std::isfinite(v)) throw Error("gbdt_fit: non-finite target");

  GbdtModel model;
  model.learning_rate = config.learning_rate;
  model.max_depth = config.max_depth;
  model.n_features = n_features;
  // Running mean: exact for constant targets.
  double mean = 0.0;
  for (std::size_t k = 0; k < n; ++k) mean += (y[k] - mean) / static_cast<double>(k + 1);
  model.base = mean;

  std::vector<std::vector<std::size_t>> sorted(n_features);
  for (std::size_t f = 0; f < n_features; ++f) {
    sorted[f].resize(n);
    std::iota(sorted[f].begin(), sorted[f].end(), std::size_t{0});
    std::stable_sort(sorted[f].begin(), sorted[f].end(), [&](std::size_t a, std::size_t b) {
      return x(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(f)) <
             x(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(f));
    });
  }

  std::vector<double> residual(n);
  for (std::size_t k = 0; k < n; ++k) residual[k] = y[k] - mean;
  std::vector<int> node_of(n);
  for (std::size_t round = 0; round < config.n_estimators; ++round) {
    RegressionTree tree;
    tree.nodes.push_back({});
    std::fill(node_of.begin(), node_of.end(), 0);
    std::vector<int> frontier{0};
    for (std::size_t level = 0; level < config.max_depth && !frontier.empty(); ++level) {
      const std::size_t m = tree.nodes.size();
      std::vector<double> count(m, 0.0), sum(m, 0.0), sq(m, 0.0);
      for (std::size_t k = 0; k < n; ++k) {
        count[static_cast<std::size_t>(node_of[k])] += 1.0;
        sum[static_cast<std::size_t>(node_of[k])] += residual[k];
        sq[static_cast<std::size_t>(node_of[k])] += residual[k] * residual[k];
      }
      std::vector<char> active(m, 0);
      for (int v : frontier) active[static_cast<std::size_t>(v)] = 1;
      std::vector<detail::SplitCandidate> best(m);
      std::vector<double> lc(m), ls(m), last(m);
      std::vector<char> started(m);
      for (std::size_t f = 0; f < n_features; ++f) {
        std::fill(lc.begin(), lc.end(), 0.0);
        std::fill(ls.begin(), ls.end(), 0.0);
        std::fill(started.begin(), started.end(), 0);
        for (std::size_t k : sorted[f]) {
          const auto v = static_cast<std::size_t>(node_of[k]);
          if (!active[v]) continue;
          const double xv = x(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(f));
          if (started[v] && xv > last[v]) {
            const double nl = lc[v], nr = count[v] - lc[v];
            const double sl = ls[v], sr = sum[v] - ls[v];
            const double gain = sl * sl / nl + sr * sr / nr - sum[v] * sum[v] / count[v];
            if (gain > best[v].gain) {
              double thr = last[v] + (xv - last[v]) / 2.0;
              if (thr >= xv) thr = last[v];
              best[v] = {gain, static_cast<int>(f), thr};
            }
          }
          started[v] = 1;
          last[v] = xv;
          lc[v] += 1.0;
          ls[v] += residual[k];
        }
      }
      std::vector<int> next;
      for (int v : frontier) {
        const auto& b = best[static_cast<std::size_t>(v)];
        // Relative floor keeps rounding noise from producing no-op splits.
        if (b.feature < 0 || !(b.gain > 1e-12 * sq[static_cast<std::size_t>(v)])) continue;
        const int depth = tree.nodes[static_cast<std::size_t>(v)].depth + 1;
        const int left = static_cast<int>(tree.nodes.size());
        tree.nodes.push_back({-1, 0.0, -1, -1, 0.0, depth});
        tree.nodes.push_back({-1, 0.0, -1, -1, 0.0, depth});
        auto& node = tree.nodes[static_cast<std::size_t>(v)];
        node.feature = b.feature;
        node.threshold = b.threshold;
        node.left = left;
        node.right = left + 1;
        next.push_back(left);
        next.push_back(left + 1);
      }
      for (std::size_t k = 0; k < n; ++k) {
        const auto& node = tree.nodes[static_cast<std::size_t>(node_of[k])];
        if (node.feature < 0) continue;
        node_of[k] = x(static_cast<Eigen::Index>(k), node.feature) <= node.threshold ? node.left : node.right;
      }
      frontier = std::move(next);
    }
    // Leaf values: mean residual of the samples that reach them.
    std::vector<double> count(tree.nodes.size(), 0.0), sum(tree.nodes.size(), 0.0);
    for (std::size_t k = 0; k < n; ++k) {
      count[static_cast<std::size_t>(node_of[k])] += 1.0;
      sum[static_cast<std::size_t>(node_of[k])] += residual[k];
    }
    for (std::size_t v = 0; v < tree.nodes.size(); ++v)
      if (tree.nodes[v].feature < 0 && count[v] > 0.0) tree.nodes[v].value = sum[v] / count[v];
    for (std::size_t k = 0; k < n; ++k)
      residual[k] -= config.learning_rate * tree.nodes[static_cast<std::size_t>(node_of[k])].value;
    model.trees.push_back(std::move(tree));
  }
  return model;
}

/// Training-set MSE after 0, 1, ..., n_trees trees.
inline std::vector<double> staged_mse(const GbdtModel& model, const Eigen::MatrixXd& x, std::span<const double> y) {
  const auto n = static_cast<std::size_t>(x.rows());
  std::vector<double> pred(n, model.base);
  std::vector<double> out;
  auto mse = [&] {
    double s = 0.0;
    for (std::size_t k = 0; k < n; ++k) s += (y[k] - pred[k]) * (y[k] - pred[k]);
    return s / static_cast<double>(n);
  };
  out.push_back(mse());
  std::vector<double> row(static_cast<std::size_t>(x.cols()));
  for (const auto& tree : model.trees) {
    for (std::size_t k = 0; k < n; ++k) {
      for (std::size_t f = 0; f < row.size(); ++f)
        row[f] = x(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(f));
      pred[k] += model.learning_rate * tree.predict(row);
    }
    out.push_back(mse());
  }
  return out;
}

// ---------------------------------------------------------------------------
// Dataset assembly and forecasting

struct VolumeDataset {
  Eigen::MatrixXd x;
  std::vector<double> y;  // log(1 + w_i(t))
  std::vector<std::pair<NodeId, std::size_t>> keys;
};

/// Rows for every (node, t), t in [t_begin, t_end), with any activity in the
/// feature window or the target month.
inline VolumeDataset build_volume_dataset(const SnapshotSeries& series, std::size_t t_begin, std::size_t t_end) {
  t_begin = std::max(t_begin, kVolumeWindow);
  t_end = std::min(t_end, series.size());
  const MonthlyTotals totals(series);
  std::vector<VolumeFeatures> rows;
  VolumeDataset ds;
  for (std::size_t t = t_begin; t < t_end; ++t) {
    for (NodeId i = 0; i < series.n_nodes(); ++i) {
      const auto f = build_volume_features(totals, i, t);
      const double target = std::log1p(totals.sent[t][i]);
      const bool any = target > 0.0 || std::any_of(f.begin(), f.begin() + 6, [](double v) { return v > 0.0; });
      if (!any) continue;
      rows.push_back(f);
      ds.y.push_back(target);
      ds.keys.emplace_back(i, t);
    }
  }
  ds.x.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(kVolumeFeatureDim));
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < kVolumeFeatureDim; ++c)
      ds.x(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
  return ds;
}

inline double gbdt_predict(const GbdtModel& model, std::span<const double> x) { return model.predict(x); }

/// Raw-unit forecast of every node's outflow in snapshot t (expm1 of the
/// log-scale prediction, clamped at 0). Reads only snapshots [t-3, t).
inline std::vector<double> predict_volumes(const GbdtModel& model, const SnapshotSeries& series, std::size_t t) {
  if (t < kVolumeWindow) throw Error("predict_volumes needs t >= 3");
  if (t > series.size()) throw Error("predict_volumes: t beyond the series end");
  const MonthlyTotals totals(series.prefix(t));
  std::vector<double> out(series.n_nodes());
  for (NodeId i = 0; i < series.n_nodes(); ++i) {
    const auto f = build_volume_features(totals, i, t);
    out[i] = std::max(0.0, std::expm1(model.predict(f)));
  }
  return out;
}

}  // namespace flowcast::volume
