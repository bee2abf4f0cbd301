#pragma once

// Metrics: row cross-entropy, MAE/MAPE, rank AUC, and the link formation /
// dissolution protocol that excludes persistent edges.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "flowcast/baselines.hpp"
#include "flowcast/dlf/model.hpp"
#include "flowcast/error.hpp"
#include "flowcast/graph_core.hpp"

namespace flowcast::evalkit {

struct BceResult {
  double value = 0.0;
  std::size_t n_rows = 0;        // evaluated sender rows
  std::size_t n_cold_start = 0;  // active senders without a predicted row
};

/// Mean row BCE over senders active in `truth` that have a predicted row.
/// With `full_support` every destination contributes; otherwise only the
/// union of the true and predicted supports.
inline BceResult metric_bce(const SparseMatrix& truth, const SparseMatrix& pred, bool full_support = false,
                            double eps = dlf::kProbClamp) {
  if (truth.size() != pred.size()) throw DimensionError("metric_bce: size mismatch");
  BceResult r;
  double total = 0.0;
  const std::size_t n = truth.size();
  for (NodeId i = 0; i < n; ++i) {
    if (truth.row(i).empty()) continue;
    if (pred.row(i).empty()) {
      ++r.n_cold_start;
      continue;
    }
    double loss = dlf::row_bce(truth.row(i), pred.row(i), eps);
    if (full_support) {
      std::set<NodeId> support;
      for (const auto& e : truth.row(i)) support.insert(e.col);
      for (const auto& e : pred.row(i)) support.insert(e.col);
      const double outside = static_cast<double>(n - support.size());
      loss -= outside * std::log1p(-eps);
    }
    total += loss;
    ++r.n_rows;
  }
  if (r.n_rows == 0) throw Error("metric_bce: no sender rows to evaluate");
  r.value = total / static_cast<double>(r.n_rows);
  return r;
}

inline double metric_mae(std::span<const double> y, std::span<const double> y_hat) {
  if (y.size() != y_hat.size()) throw DimensionError("metric_mae: length mismatch");
  if (y.empty()) throw Error("metric_mae: empty input");
  double s = 0.0;
  for (std::size_t k = 0; k < y.size(); ++k) s += std::abs(y[k] - y_hat[k]);
  return s / static_cast<double>(y.size());
}

struct MapeResult {
  double value = 0.0;
  std::size_t n_used = 0;
  std::size_t n_zero_excluded = 0;
};

/// Mean |y - y_hat| / |y| over nonzero targets; zero targets are counted.
inline MapeResult metric_mape(std::span<const double> y, std::span<const double> y_hat) {
  if (y.size() != y_hat.size()) throw DimensionError("metric_mape: length mismatch");
  MapeResult r;
  double s = 0.0;
  for (std::size_t k = 0; k < y.size(); ++k) {
    if (y[k] == 0.0) {
      ++r.n_zero_excluded;
      continue;
    }
    s += std::abs(y[k] - y_hat[k]) / std::abs(y[k]);
    ++r.n_used;
  }
  if (r.n_used == 0) throw Error("metric_mape: every target is zero");
  r.value = s / static_cast<double>(r.n_used);
  return r;
}

/// Mann-Whitney AUC with midranks for ties.
inline double metric_auc(std::span<const int> labels, std::span<const double> scores) {
  if (labels.size() != scores.size()) throw DimensionError("metric_auc: length mismatch");
  std::size_t n_pos = 0;
  for (int l : labels) n_pos += l != 0;
  const std::size_t n_neg = labels.size() - n_pos;
  if (n_pos == 0) throw Error("metric_auc: no positive labels");
  if (n_neg == 0) throw Error("metric_auc: no negative labels");
  std::vector<std::size_t> order(labels.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Ranks are 1-based; a tie group spanning ranks [lo, hi] gets (lo + hi) / 2.
  double rank_sum = 0.0;
  for (std::size_t k = 0; k < order.size();) {
    std::size_t end = k;
    while (end < order.size() && scores[order[end]] == scores[order[k]]) ++end;
    const double mid = (static_cast<double>(k + 1) + static_cast<double>(end)) / 2.0;
    for (std::size_t m = k; m < end; ++m)
      if (labels[order[m]] != 0) rank_sum += mid;
    k = end;
  }
  const double np = static_cast<double>(n_pos);
  const double u = rank_sum - np * (np + 1.0) / 2.0;
  return u / (np * static_cast<double>(n_neg));
}

/// Drops entries below eps and renormalises; nullopt if nothing survives.
inline std::optional<SparseRow> threshold_renormalize(std::span<const Entry> row, double eps) {
  SparseRow out;
  double total = 0.0;
  for (const auto& e : row)
    if (e.value >= eps) {
      out.push_back(e);
      total += e.value;
    }
  if (out.empty() || !(total > 0.0)) return std::nullopt;
  for (auto& e : out) e.value /= total;
  return out;
}

struct LinkTask {
  std::vector<NodeId> src, dst;
  std::vector<int> labels;
  std::vector<double> scores;
  std::size_t n_rows_emptied = 0;  // rows removed entirely by the threshold
  std::size_t n_senders = 0;

  void push(NodeId i, NodeId j, int label, double score) {
    src.push_back(i);
    dst.push_back(j);
    labels.push_back(label);
    scores.push_back(score);
  }
};

namespace detail {

/// Destinations each sender used in snapshots [0, t).
inline std::vector<std::set<NodeId>> edge_memory(const SnapshotSeries& series, std::size_t t) {
  std::vector<std::set<NodeId>> memory(series.n_nodes());
  for (std::size_t s = 0; s < std::min(t, series.size()); ++s)
    for (NodeId i = 0; i < series.n_nodes(); ++i)
      for (const auto& e : series[s].adjacency.row(i)) memory[i].insert(e.col);
  return memory;
}

}  // namespace detail

/// Link formation on pairs outside the edge memory: candidates are the
/// thresholded predicted entries of senders active at t whose destination
/// the sender never used before t. Label: the pair appears at t.
inline LinkTask eval_formation(const SnapshotSeries& series, const SparseMatrix& pred, std::size_t t, double eps) {
  if (t >= series.size()) throw Error("eval_formation: t must index an observed snapshot");
  const auto memory = detail::edge_memory(series, t);
  const auto& actual = series[t].adjacency;
  LinkTask task;
  for (NodeId i = 0; i < series.n_nodes(); ++i) {
    if (actual.row(i).empty() || pred.row(i).empty()) continue;
    ++task.n_senders;
    auto row = threshold_renormalize(pred.row(i), eps);
    if (!row) {
      ++task.n_rows_emptied;
      continue;
    }
    for (const auto& e : *row) {
      if (memory[i].contains(e.col)) continue;
      task.push(i, e.col, actual.contains(i, e.col) ? 1 : 0, e.value);
    }
  }
  if (task.labels.empty())
    throw Error("eval_formation: empty candidate set at t=" + std::to_string(t) + " (" +
                std::to_string(task.n_senders) + " senders, " + std::to_string(task.n_rows_emptied) +
                " rows emptied by the threshold)");
  return task;
}

/// Link dissolution on pairs inside the edge memory, for senders active at t
/// that have a predicted row. Label: the pair is absent at t. Score: one
/// minus the (optionally thresholded) predicted probability.
inline LinkTask eval_dissolution(const SnapshotSeries& series, const SparseMatrix& pred, std::size_t t,
                                 double eps = 0.0) {
  if (t >= series.size()) throw Error("eval_dissolution: t must index an observed snapshot");
  const auto memory = detail::edge_memory(series, t);
  const auto& actual = series[t].adjacency;
  LinkTask task;
  for (NodeId i = 0; i < series.n_nodes(); ++i) {
    if (actual.row(i).empty() || pred.row(i).empty()) continue;
    ++task.n_senders;
    SparseRow row;
    if (eps > 0.0) {
      auto r = threshold_renormalize(pred.row(i), eps);
      if (!r) ++task.n_rows_emptied;
      else row = std::move(*r);
    } else {
      auto r = pred.row(i);
      row.assign(r.begin(), r.end());
    }
    for (NodeId j : memory[i]) {
      auto it = std::lower_bound(row.begin(), row.end(), j, [](const Entry& e, NodeId c) { return e.col < c; });
      const double q = (it != row.end() && it->col == j) ? it->value : 0.0;
      task.push(i, j, actual.contains(i, j) ? 0 : 1, 1.0 - q);
    }
  }
  if (task.labels.empty()) throw Error("eval_dissolution: empty candidate set at t=" + std::to_string(t));
  return task;
}

inline void append(LinkTask& into, const LinkTask& from) {
  into.src.insert(into.src.end(), from.src.begin(), from.src.end());
  into.dst.insert(into.dst.end(), from.dst.begin(), from.dst.end());
  into.labels.insert(into.labels.end(), from.labels.begin(), from.labels.end());
  into.scores.insert(into.scores.end(), from.scores.begin(), from.scores.end());
  into.n_rows_emptied += from.n_rows_emptied;
  into.n_senders += from.n_senders;
}

/// AUC of a task, or nullopt when one class is missing.
inline std::optional<double> task_auc(const LinkTask& task) {
  const auto pos = std::count(task.labels.begin(), task.labels.end(), 1);
  if (pos == 0 || pos == static_cast<long>(task.labels.size())) return std::nullopt;
  return metric_auc(task.labels, task.scores);
}

inline void write_task_csv(std::ostream& out, const LinkTask& task) {
  out << "src,dst,label,score\n";
  for (std::size_t k = 0; k < task.labels.size(); ++k)
    out << task.src[k] << ',' << task.dst[k] << ',' << task.labels[k] << ',' << csv::format_double(task.scores[k])
        << '\n';
}

struct EvalReport {
  std::optional<double> bce;
  std::optional<double> mae, mape;
  std::optional<double> mae_log, mape_log;
  std::optional<double> auc_formation, auc_dissolution;
  std::size_t evaluated_rows = 0;
  std::size_t cold_start_rows = 0;
  std::size_t volume_rows = 0;
  std::size_t mape_zero_excluded = 0;
  std::size_t formation_positives = 0, formation_negatives = 0;
  std::size_t dissolution_positives = 0, dissolution_negatives = 0;
  std::size_t rows_emptied_by_threshold = 0;
  double threshold = 0.0;
};

inline nlohmann::ordered_json to_json(const EvalReport& r) {
  auto opt = [](const std::optional<double>& v) { return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(); };
  nlohmann::ordered_json j;
  j["bce"] = opt(r.bce);
  j["mae"] = opt(r.mae);
  j["mape"] = opt(r.mape);
  j["mae_log"] = opt(r.mae_log);
  j["mape_log"] = opt(r.mape_log);
  j["auc_formation"] = opt(r.auc_formation);
  j["auc_dissolution"] = opt(r.auc_dissolution);
  j["threshold"] = r.threshold;
  j["counts"] = {
      {"evaluated_rows", r.evaluated_rows},
      {"cold_start_rows", r.cold_start_rows},
      {"volume_rows", r.volume_rows},
      {"mape_zero_excluded", r.mape_zero_excluded},
      {"formation_positives", r.formation_positives},
      {"formation_negatives", r.formation_negatives},
      {"dissolution_positives", r.dissolution_positives},
      {"dissolution_negatives", r.dissolution_negatives},
      {"rows_emptied_by_threshold", r.rows_emptied_by_threshold},
  };
  return j;
}

}  // namespace flowcast::evalkit
