#pragma once

// Descriptive statistics of a snapshot series: counts, sparsity, edge
// persistence, CCDFs and a continuous power-law tail fit.

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "flowcast/error.hpp"
#include "flowcast/graph_core.hpp"

namespace flowcast::netstats {

struct NetworkSummary {
  std::size_t n_snapshots = 0;
  std::size_t n_nodes = 0;
  std::size_t n_edges = 0;  // (pair, snapshot) entries after monthly aggregation
  double avg_sparsity = 0.0;
  double avg_edge_persistence = 0.0;
};

inline NetworkSummary summarize(const SnapshotSeries& series) {
  if (series.size() == 0) throw EmptyDatasetError("cannot summarize an empty series");
  NetworkSummary s;
  s.n_snapshots = series.size();
  s.n_nodes = series.n_nodes();
  const double n = static_cast<double>(s.n_nodes);
  const double possible = n * (n - 1.0);

  std::map<std::pair<NodeId, NodeId>, std::size_t> appearances;
  double sparsity_sum = 0.0;
  for (const auto& snap : series.snapshots) {
    std::size_t off_diagonal = 0;
    for (NodeId i = 0; i < snap.n_nodes(); ++i) {
      for (const auto& e : snap.adjacency.row(i)) {
        ++s.n_edges;
        ++appearances[{i, e.col}];
        if (e.col != i) ++off_diagonal;
      }
    }
    sparsity_sum += possible > 0.0 ? static_cast<double>(off_diagonal) / possible : 0.0;
  }
  s.avg_sparsity = sparsity_sum / static_cast<double>(s.n_snapshots);
  if (!appearances.empty()) {
    double persistence = 0.0;
    for (const auto& [pair, count] : appearances)
      persistence += static_cast<double>(count) / static_cast<double>(s.n_snapshots);
    s.avg_edge_persistence = persistence / static_cast<double>(appearances.size());
  }
  return s;
}

struct CcdfPoint {
  double x;
  double p;  // P(X >= x)
};

inline std::vector<CcdfPoint> ccdf(std::span<const double> values) {
  if (values.empty()) throw Error("ccdf of an empty sample");
  std::vector<double> v(values.begin(), values.end());
  std::sort(v.begin(), v.end());
  const double n = static_cast<double>(v.size());
  std::vector<CcdfPoint> out;
  for (std::size_t k = 0; k < v.size();) {
    const double x = v[k];
    out.push_back({x, static_cast<double>(v.size() - k) / n});
    while (k < v.size() && v[k] == x) ++k;
  }
  return out;
}

/// Degree and strength sequences of the time-aggregated network.
struct AggregateDistributions {
  std::vector<double> in_degree, out_degree, in_weight, out_weight;
};

inline AggregateDistributions aggregate_distributions(const SnapshotSeries& series) {
  const std::size_t n = series.n_nodes();
  std::vector<std::map<NodeId, double>> agg(n);
  for (const auto& snap : series.snapshots)
    for (NodeId i = 0; i < n; ++i)
      for (const auto& e : snap.adjacency.row(i)) agg[i][e.col] += e.value;
  AggregateDistributions d;
  d.in_degree.assign(n, 0.0);
  d.out_degree.assign(n, 0.0);
  d.in_weight.assign(n, 0.0);
  d.out_weight.assign(n, 0.0);
  for (NodeId i = 0; i < n; ++i) {
    for (const auto& [j, w] : agg[i]) {
      d.out_degree[i] += 1.0;
      d.out_weight[i] += w;
      d.in_degree[j] += 1.0;
      d.in_weight[j] += w;
    }
  }
  return d;
}

/// Drops non-positive entries (isolated nodes) before CCDF/fit.
inline std::vector<double> positive_only(std::span<const double> values) {
  std::vector<double> out;
  for (double v : values)
    if (v > 0.0) out.push_back(v);
  return out;
}

struct PowerLawFit {
  double alpha = 0.0;
  double x_min = 0.0;
  double ks_distance = 0.0;
  std::size_t n_tail = 0;
};

namespace detail {

// `sorted` ascending; tail = sorted[first..], all >= x_min.
inline PowerLawFit fit_tail(std::span<const double> sorted, std::size_t first, double x_min) {
  PowerLawFit fit;
  fit.x_min = x_min;
  fit.n_tail = sorted.size() - first;
  double log_sum = 0.0;
  for (std::size_t k = first; k < sorted.size(); ++k) log_sum += std::log(sorted[k] / fit.x_min);
  const double n = static_cast<double>(fit.n_tail);
  fit.alpha = log_sum > 0.0 ? 1.0 + n / log_sum : std::numeric_limits<double>::infinity();

  // KS distance between the empirical tail CDF and 1 - (x/x_min)^(1-alpha).
  double ks = 0.0;
  for (std::size_t k = first; k < sorted.size(); ++k) {
    const double model = 1.0 - std::pow(sorted[k] / fit.x_min, 1.0 - fit.alpha);
    const double below = static_cast<double>(k - first) / n;
    const double upto = static_cast<double>(k - first + 1) / n;
    ks = std::max({ks, std::abs(model - below), std::abs(upto - model)});
  }
  fit.ks_distance = std::min(ks, 1.0);
  return fit;
}

}  // namespace detail

/// Continuous MLE for a fixed lower cutoff.
inline PowerLawFit fit_power_law_fixed(std::span<const double> values, double x_min) {
  if (!(x_min > 0.0)) throw Error("x_min must be positive");
  std::vector<double> v;
  for (double x : values)
    if (x >= x_min) v.push_back(x);
  std::sort(v.begin(), v.end());
  if (v.size() < 2) throw Error("power-law fit needs at least 2 samples >= x_min");
  auto fit = detail::fit_tail(v, 0, x_min);
  if (!(fit.alpha > 1.0) || !std::isfinite(fit.alpha))
    throw Error("degenerate power-law fit (all tail samples equal x_min)");
  return fit;
}

/// Chooses x_min among distinct observed values up to the 90th percentile,
/// minimising the KS distance of the tail fit.
inline PowerLawFit fit_power_law(std::span<const double> values, std::size_t min_tail = 10) {
  std::vector<double> v;
  for (double x : values) {
    if (!(x > 0.0) || !std::isfinite(x)) throw Error("power-law fit needs positive finite values");
    v.push_back(x);
  }
  std::sort(v.begin(), v.end());
  if (v.size() < min_tail)
    throw Error("power-law fit needs at least " + std::to_string(min_tail) +
                " tail samples, got " + std::to_string(v.size()));
  const double cap = v[static_cast<std::size_t>(0.9 * static_cast<double>(v.size() - 1))];
  std::optional<PowerLawFit> best;
  for (std::size_t k = 0; k < v.size() && v[k] <= cap; ++k) {
    if (k > 0 && v[k] == v[k - 1]) continue;
    if (v.size() - k < min_tail) break;
    auto fit = detail::fit_tail(v, k, v[k]);
    if (!std::isfinite(fit.alpha)) continue;
    if (!best || fit.ks_distance < best->ks_distance) best = fit;
  }
  if (!best)
    throw Error("power-law fit needs at least " + std::to_string(min_tail) +
                " non-degenerate tail samples above a candidate x_min");
  return *best;
}

}  // namespace flowcast::netstats
