#pragma once

// Temporal neighbourhoods: every past transaction touching a node, ranked by
// month (most recent first) and then by amount, truncated to K entries.

#include <algorithm>
#include <tuple>
#include <vector>

#include "flowcast/graph_core.hpp"

namespace flowcast::dlf {

/// Mean Gregorian month length; converts elapsed seconds to months for the
/// time encoding.
inline constexpr double kSecondsPerMonth = 2629746.0;

struct NeighborEvent {
  NodeId neighbor;
  std::size_t snapshot;
  Timestamp time;
  double amount;
  EdgeFeatures features;  // of the aggregated edge in `snapshot`, in transfer direction
};

struct NeighborSample {
  NodeId target = 0;
  std::size_t t = 0;
  Timestamp reference_time = 0;  // start of snapshot t
  std::vector<NeighborEvent> entries;

  bool cold_start() const noexcept { return entries.empty(); }

  /// Elapsed months between event k and the start of snapshot t.
  double delta_months(std::size_t k) const {
    return static_cast<double>(reference_time - entries[k].time) / kSecondsPerMonth;
  }
};

namespace detail {

inline bool ranks_before(const NeighborEvent& a, const NeighborEvent& b) {
  return std::tuple(b.snapshot, b.amount, b.time, a.neighbor) <
         std::tuple(a.snapshot, a.amount, a.time, b.neighbor);
}

}  // namespace detail

/// Per-node event lists with edge features, pre-sorted in sampling order.
class TemporalIndex {
 public:
  explicit TemporalIndex(const SnapshotSeries& series,
                         EdgeFeatureScheme scheme = EdgeFeatureScheme::standard)
      : series_(&series), by_node_(series.n_nodes()) {
    std::vector<EdgeFeatureContext> contexts;
    contexts.reserve(series.size());
    for (const auto& s : series.snapshots) contexts.emplace_back(s.adjacency, scheme);
    for (const auto& e : series.events) {
      const std::size_t s = series.snapshot_of(e.timestamp);
      if (s >= series.size()) continue;
      const EdgeFeatures f = contexts[s](e.src, e.dst);
      by_node_[e.src].push_back({e.dst, s, e.timestamp, e.amount, f});
      if (e.dst != e.src) by_node_[e.dst].push_back({e.src, s, e.timestamp, e.amount, f});
    }
    for (auto& list : by_node_) std::stable_sort(list.begin(), list.end(), detail::ranks_before);
  }

  const SnapshotSeries& series() const noexcept { return *series_; }

  /// Top-K past events of node i strictly before snapshot t.
  NeighborSample sample(NodeId i, std::size_t t, std::size_t k) const {
    NeighborSample out{i, t, series_->start_of(t), {}};
    for (const auto& e : by_node_.at(i)) {
      if (out.entries.size() >= k) break;
      if (e.snapshot < t) out.entries.push_back(e);
    }
    return out;
  }

 private:
  const SnapshotSeries* series_;
  std::vector<std::vector<NeighborEvent>> by_node_;
};

/// Ranks an explicit event history; the free-function form of
/// TemporalIndex::sample for callers that hold raw events.
inline NeighborSample sample_neighbors(std::vector<NeighborEvent> history, NodeId i, std::size_t t,
                                       Timestamp reference_time, std::size_t k) {
  std::erase_if(history, [t](const NeighborEvent& e) { return e.snapshot >= t; });
  std::stable_sort(history.begin(), history.end(), detail::ranks_before);
  if (history.size() > k) history.resize(k);
  return {i, t, reference_time, std::move(history)};
}

}  // namespace flowcast::dlf
