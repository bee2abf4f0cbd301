#pragma once

// EdgeBank memorisation baselines for remittance ratios and volumes. All
// predictions for snapshot t read only snapshots [0, t).

#include <algorithm>
#include <map>
#include <string>
#include <vector>

#include "flowcast/error.hpp"
#include "flowcast/graph_core.hpp"

namespace flowcast::baselines {

struct RatioPrediction {
  SparseMatrix ratios;
  std::vector<bool> cold_start;  // sender had no usable history

  std::size_t n_cold_start() const {
    return static_cast<std::size_t>(std::count(cold_start.begin(), cold_start.end(), true));
  }
};

struct VolumePrediction {
  std::vector<double> volume;
  std::vector<bool> cold_start;

  std::size_t n_cold_start() const {
    return static_cast<std::size_t>(std::count(cold_start.begin(), cold_start.end(), true));
  }
};

enum class RatioAveraging {
  /// Mean of the per-month ratio rows over active months, then renormalised.
  average_then_renormalize,
  /// Sum raw amounts over the window, normalise once.
  pooled_weights,
};

enum class Window {
  all_history,
  last_month,
};

namespace detail {

inline void check_t(const SnapshotSeries& series, std::size_t t) {
  if (t < 1) throw Error("EdgeBank needs t >= 1");
  if (t > series.size())
    throw Error("prediction snapshot " + std::to_string(t) + " is beyond the series end");
}

inline std::size_t window_begin(std::size_t t, Window w) { return w == Window::all_history ? 0 : t - 1; }

}  // namespace detail

inline RatioPrediction edgebank_ratio(const SnapshotSeries& series, std::size_t t,
                                      Window window = Window::all_history,
                                      RatioAveraging averaging = RatioAveraging::average_then_renormalize) {
  detail::check_t(series, t);
  const std::size_t n = series.n_nodes();
  RatioPrediction pred{SparseMatrix(n), std::vector<bool>(n, true)};
  const std::size_t begin = detail::window_begin(t, window);
  std::vector<std::map<NodeId, double>> acc(n);
  std::vector<std::size_t> active(n, 0);
  for (std::size_t s = begin; s < t; ++s) {
    const auto& a = series[s].adjacency;
    for (NodeId i = 0; i < n; ++i) {
      const double w = a.row_sum(i);
      if (!(w > 0.0)) continue;
      ++active[i];
      for (const auto& e : a.row(i))
        acc[i][e.col] += averaging == RatioAveraging::average_then_renormalize ? e.value / w : e.value;
    }
  }
  for (NodeId i = 0; i < n; ++i) {
    if (active[i] == 0) continue;
    double total = 0.0;
    for (const auto& [j, v] : acc[i]) total += v;
    SparseRow row;
    for (const auto& [j, v] : acc[i]) row.push_back({j, v / total});
    pred.ratios.set_row(i, std::move(row));
    pred.cold_start[i] = false;
  }
  return pred;
}

inline RatioPrediction edgebank_tw_ratio(const SnapshotSeries& series, std::size_t t,
                                         RatioAveraging averaging = RatioAveraging::average_then_renormalize) {
  return edgebank_ratio(series, t, Window::last_month, averaging);
}

inline VolumePrediction edgebank_volume(const SnapshotSeries& series, std::size_t t,
                                        Window window = Window::all_history) {
  detail::check_t(series, t);
  const std::size_t n = series.n_nodes();
  VolumePrediction pred{std::vector<double>(n, 0.0), std::vector<bool>(n, true)};
  std::vector<std::size_t> active(n, 0);
  for (std::size_t s = detail::window_begin(t, window); s < t; ++s) {
    for (NodeId i = 0; i < n; ++i) {
      const double w = series[s].adjacency.row_sum(i);
      if (!(w > 0.0)) continue;
      ++active[i];
      pred.volume[i] += w;
    }
  }
  for (NodeId i = 0; i < n; ++i) {
    if (active[i] == 0) continue;
    pred.volume[i] /= static_cast<double>(active[i]);
    pred.cold_start[i] = false;
  }
  return pred;
}

inline VolumePrediction edgebank_tw_volume(const SnapshotSeries& series, std::size_t t) {
  return edgebank_volume(series, t, Window::last_month);
}

}  // namespace flowcast::baselines
