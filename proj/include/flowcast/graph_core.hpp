#pragma once

// Temporal transfer data: ingestion, monthly snapshots, and the split of a
// weighted adjacency matrix into per-node volumes and remittance ratios.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "flowcast/csv.hpp"
#include "flowcast/error.hpp"
#include "flowcast/sparse.hpp"

namespace flowcast {

using Timestamp = std::int64_t;  // seconds since epoch, UTC

/// Months since year 0: year * 12 + (month - 1).
using MonthIndex = std::int64_t;

inline MonthIndex month_of(Timestamp ts) {
  using namespace std::chrono;
  const sys_seconds tp{seconds{ts}};
  const year_month_day ymd{floor<days>(tp)};
  return static_cast<MonthIndex>(static_cast<int>(ymd.year())) * 12 +
         static_cast<MonthIndex>(static_cast<unsigned>(ymd.month())) - 1;
}

inline Timestamp month_start(MonthIndex m) {
  using namespace std::chrono;
  const auto y = static_cast<int>(m >= 0 ? m / 12 : (m - 11) / 12);
  const auto mo = static_cast<unsigned>(m - static_cast<MonthIndex>(y) * 12 + 1);
  const sys_days d = year{y} / month{mo} / day{1};
  return duration_cast<seconds>(d.time_since_epoch()).count();
}

inline std::string month_label(MonthIndex m) {
  const auto y = m / 12;
  const auto mo = m % 12 + 1;
  std::string s = std::to_string(y) + "-";
  if (mo < 10) s += "0";
  return s + std::to_string(mo);
}

/// Integer epoch seconds, or a YYYY-MM-DD calendar date at 00:00 UTC.
inline std::optional<Timestamp> parse_timestamp(std::string_view s) {
  s = csv::trim(s);
  if (auto v = csv::parse_int<Timestamp>(s)) return v;
  if (s.size() != 10 || s[4] != '-' || s[7] != '-') return std::nullopt;
  auto y = csv::parse_int<int>(s.substr(0, 4));
  auto m = csv::parse_int<unsigned>(s.substr(5, 2));
  auto d = csv::parse_int<unsigned>(s.substr(8, 2));
  if (!y || !m || !d) return std::nullopt;
  using namespace std::chrono;
  const year_month_day ymd{year{*y}, month{*m}, day{*d}};
  if (!ymd.ok()) return std::nullopt;
  return duration_cast<seconds>(sys_days{ymd}.time_since_epoch()).count();
}

struct TemporalEdge {
  NodeId src;
  NodeId dst;
  Timestamp timestamp;
  double amount;

  friend bool operator==(const TemporalEdge&, const TemporalEdge&) = default;
};

/// Bijection between dense ids and the original labels.
class NodeUniverse {
 public:
  NodeUniverse() = default;

  explicit NodeUniverse(std::vector<std::string> labels) : labels_(std::move(labels)) {
    for (std::size_t i = 0; i < labels_.size(); ++i) {
      if (!index_.emplace(labels_[i], static_cast<NodeId>(i)).second)
        throw Error("duplicate node label '" + labels_[i] + "'");
    }
  }

  /// Labels "0".."n-1"; handy for synthetic and test data.
  static NodeUniverse identity(std::size_t n) {
    std::vector<std::string> labels;
    labels.reserve(n);
    for (std::size_t i = 0; i < n; ++i) labels.push_back(std::to_string(i));
    return NodeUniverse(std::move(labels));
  }

  std::size_t size() const noexcept { return labels_.size(); }
  const std::string& label(NodeId id) const { return labels_.at(id); }
  const std::vector<std::string>& labels() const noexcept { return labels_; }

  std::optional<NodeId> find(std::string_view label) const {
    auto it = index_.find(std::string(label));
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  friend bool operator==(const NodeUniverse& a, const NodeUniverse& b) {
    return a.labels_ == b.labels_;
  }

 private:
  std::vector<std::string> labels_;
  std::unordered_map<std::string, NodeId> index_;
};

// ---------------------------------------------------------------------------
// Ingestion

struct IngestConfig {
  /// Nodes taking part in fewer transactions than this (as sender or
  /// receiver, counted within the date range) are removed with their edges.
  std::size_t min_activity = 0;
  std::optional<Timestamp> from;  // inclusive
  std::optional<Timestamp> to;    // exclusive
  bool allow_self_loops = false;
};

struct RejectedRow {
  std::size_t line;
  std::string reason;
};

struct DropSummary {
  std::size_t rows_read = 0;
  std::size_t non_positive_amount = 0;
  std::size_t self_loops = 0;
  std::size_t out_of_range = 0;
  std::size_t below_activity = 0;
  std::vector<RejectedRow> rejected;

  std::size_t total_dropped() const {
    return non_positive_amount + self_loops + out_of_range + below_activity;
  }
};

struct IngestResult {
  std::vector<TemporalEdge> edges;  // sorted by timestamp, stable w.r.t. input order
  NodeUniverse universe;
  DropSummary drops;
};

inline constexpr std::string_view kEdgeCsvHeader = "src,dst,timestamp,amount";

/// Reads the edge CSV format. Node ids are assigned in sorted label order so
/// the result does not depend on row order.
inline IngestResult ingest_edges(std::istream& in, const IngestConfig& config = {}) {
  struct Raw {
    std::string src, dst;
    Timestamp ts;
    double amount;
  };
  IngestResult result;
  auto& drops = result.drops;
  std::vector<Raw> rows;
  std::string line;
  std::size_t line_no = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (csv::trim(line).empty()) continue;
    if (!header_seen) {
      auto fields = csv::split(line);
      std::string joined;
      if (fields) {
        for (std::size_t k = 0; k < fields->size(); ++k)
          joined += (k ? "," : "") + (*fields)[k];
      }
      if (joined != kEdgeCsvHeader)
        throw ParseError(line_no, "expected header '" + std::string(kEdgeCsvHeader) + "'");
      header_seen = true;
      continue;
    }
    ++drops.rows_read;
    auto fields = csv::split(line);
    if (!fields) throw ParseError(line_no, "unterminated quoted field");
    if (fields->size() != 4)
      throw ParseError(line_no, "expected 4 fields, found " + std::to_string(fields->size()));
    auto& f = *fields;
    if (f[0].empty() || f[1].empty()) throw ParseError(line_no, "empty node label");
    auto ts = parse_timestamp(f[2]);
    if (!ts) throw ParseError(line_no, "bad timestamp '" + f[2] + "'");
    auto amount = csv::parse_double(f[3]);
    if (!amount) throw ParseError(line_no, "bad amount '" + f[3] + "'");
    if (!(*amount > 0.0) || !std::isfinite(*amount)) {
      ++drops.non_positive_amount;
      drops.rejected.push_back({line_no, "non-positive amount " + f[3]});
      continue;
    }
    if (!config.allow_self_loops && f[0] == f[1]) {
      ++drops.self_loops;
      drops.rejected.push_back({line_no, "self-loop on '" + f[0] + "'"});
      continue;
    }
    if ((config.from && *ts < *config.from) || (config.to && *ts >= *config.to)) {
      ++drops.out_of_range;
      continue;
    }
    rows.push_back({std::move(f[0]), std::move(f[1]), *ts, *amount});
  }
  if (!header_seen) throw EmptyDatasetError("edge stream is empty (no header)");

  std::unordered_map<std::string, std::size_t> activity;
  for (const auto& r : rows) {
    ++activity[r.src];
    if (r.dst != r.src) ++activity[r.dst];
  }
  std::vector<const Raw*> kept;
  for (const auto& r : rows) {
    if (activity[r.src] < config.min_activity || activity[r.dst] < config.min_activity) {
      ++drops.below_activity;
      continue;
    }
    kept.push_back(&r);
  }
  if (kept.empty()) throw EmptyDatasetError("no edges left after filtering");

  std::vector<std::string> labels;
  for (const auto* r : kept) {
    labels.push_back(r->src);
    labels.push_back(r->dst);
  }
  std::sort(labels.begin(), labels.end());
  labels.erase(std::unique(labels.begin(), labels.end()), labels.end());
  result.universe = NodeUniverse(std::move(labels));

  result.edges.reserve(kept.size());
  for (const auto* r : kept) {
    result.edges.push_back({*result.universe.find(r->src), *result.universe.find(r->dst), r->ts,
                            r->amount});
  }
  std::stable_sort(result.edges.begin(), result.edges.end(),
                   [](const TemporalEdge& a, const TemporalEdge& b) {
                     return a.timestamp < b.timestamp;
                   });
  return result;
}

// ---------------------------------------------------------------------------
// Snapshots

struct SnapshotNetwork {
  std::size_t index = 0;
  SparseMatrix adjacency;  // (src, dst) -> summed amount, strictly positive

  std::size_t n_nodes() const noexcept { return adjacency.size(); }
  std::size_t n_edges() const { return adjacency.nnz(); }
};

/// Calendar-month snapshots plus the raw, time-ordered event list.
struct SnapshotSeries {
  std::vector<SnapshotNetwork> snapshots;
  NodeUniverse universe;
  std::vector<TemporalEdge> events;
  MonthIndex first_month = 0;

  std::size_t size() const noexcept { return snapshots.size(); }
  std::size_t n_nodes() const noexcept { return universe.size(); }
  const SnapshotNetwork& operator[](std::size_t t) const { return snapshots.at(t); }

  Timestamp start_of(std::size_t t) const {
    return month_start(first_month + static_cast<MonthIndex>(t));
  }

  std::size_t snapshot_of(Timestamp ts) const {
    return static_cast<std::size_t>(month_of(ts) - first_month);
  }

  /// Copy restricted to snapshots [0, t) and the events before them.
  SnapshotSeries prefix(std::size_t t) const {
    SnapshotSeries out;
    out.universe = universe;
    out.first_month = first_month;
    t = std::min(t, snapshots.size());
    out.snapshots.assign(snapshots.begin(), snapshots.begin() + static_cast<std::ptrdiff_t>(t));
    const Timestamp cutoff = start_of(t);
    for (const auto& e : events)
      if (e.timestamp < cutoff) out.events.push_back(e);
    return out;
  }
};

inline SparseMatrix aggregate(std::size_t n, std::vector<TemporalEdge> edges) {
  std::stable_sort(edges.begin(), edges.end(), [](const auto& a, const auto& b) {
    return std::pair{a.src, a.dst} < std::pair{b.src, b.dst};
  });
  SparseMatrix m(n);
  std::size_t k = 0;
  while (k < edges.size()) {
    const NodeId src = edges[k].src;
    SparseRow row;
    while (k < edges.size() && edges[k].src == src) {
      const NodeId dst = edges[k].dst;
      double sum = 0.0;
      for (; k < edges.size() && edges[k].src == src && edges[k].dst == dst; ++k)
        sum += edges[k].amount;
      row.push_back({dst, sum});
    }
    if (src >= n) throw DimensionError("edge endpoint outside node universe");
    m.set_row(src, std::move(row));
  }
  return m;
}

/// One snapshot per UTC calendar month from the first to the last edge,
/// inclusive; months without edges are empty snapshots.
inline SnapshotSeries build_snapshots(std::vector<TemporalEdge> edges, NodeUniverse universe) {
  if (edges.empty()) throw EmptyDatasetError("cannot build snapshots from an empty edge list");
  if (!std::is_sorted(edges.begin(), edges.end(),
                      [](const auto& a, const auto& b) { return a.timestamp < b.timestamp; }))
    throw Error("edges must be sorted by timestamp");
  const std::size_t n = universe.size();
  for (const auto& e : edges)
    if (e.src >= n || e.dst >= n) throw DimensionError("edge endpoint outside node universe");

  SnapshotSeries series;
  series.first_month = month_of(edges.front().timestamp);
  const auto n_months =
      static_cast<std::size_t>(month_of(edges.back().timestamp) - series.first_month + 1);
  std::vector<std::vector<TemporalEdge>> buckets(n_months);
  for (const auto& e : edges)
    buckets[static_cast<std::size_t>(month_of(e.timestamp) - series.first_month)].push_back(e);
  series.snapshots.reserve(n_months);
  for (std::size_t t = 0; t < n_months; ++t)
    series.snapshots.push_back({t, aggregate(n, std::move(buckets[t]))});
  series.universe = std::move(universe);
  series.events = std::move(edges);
  return series;
}

// ---------------------------------------------------------------------------
// Volume / ratio decomposition

struct FlowDecomposition {
  std::vector<double> volume;  // w_i: total outflow of node i
  SparseMatrix ratios;         // R_ij = A_ij / w_i; empty rows where w_i = 0

  std::size_t size() const noexcept { return volume.size(); }
};

inline FlowDecomposition decompose(const SparseMatrix& adjacency) {
  const std::size_t n = adjacency.size();
  FlowDecomposition d{std::vector<double>(n, 0.0), SparseMatrix(n)};
  for (NodeId i = 0; i < n; ++i) {
    const double w = adjacency.row_sum(i);
    d.volume[i] = w;
    if (w <= 0.0) continue;
    SparseRow row;
    for (const auto& e : adjacency.row(i)) row.push_back({e.col, e.value / w});
    d.ratios.set_row(i, std::move(row));
  }
  return d;
}

inline FlowDecomposition decompose(const SnapshotNetwork& snapshot) {
  return decompose(snapshot.adjacency);
}

/// Predicted adjacency from a volume forecast and ratio rows: A_ij = w_i R_ij.
inline SnapshotNetwork recompose(std::span<const double> volume, const SparseMatrix& ratios,
                                 std::size_t index = 0) {
  if (volume.size() != ratios.size())
    throw DimensionError("volume length " + std::to_string(volume.size()) +
                         " does not match ratio matrix size " + std::to_string(ratios.size()));
  SparseMatrix a(ratios.size());
  for (NodeId i = 0; i < ratios.size(); ++i) {
    if (!(volume[i] > 0.0)) continue;
    SparseRow row;
    for (const auto& e : ratios.row(i)) {
      const double v = volume[i] * e.value;
      if (v > 0.0) row.push_back({e.col, v});
    }
    a.set_row(i, std::move(row));
  }
  return {index, std::move(a)};
}

// ---------------------------------------------------------------------------
// Edge features

inline constexpr std::size_t kEdgeFeatureDim = 5;
using EdgeFeatures = std::array<double, kEdgeFeatureDim>;

enum class EdgeFeatureScheme {
  /// [log(1+A_ij), A_ij/w_i, w_i/total, A_ij/inflow_j, A_ij/total]
  standard,
  /// Same ratios, but the first component is log(A_ij).
  log_amount,
};

/// Per-snapshot totals needed to build edge feature vectors.
class EdgeFeatureContext {
 public:
  explicit EdgeFeatureContext(const SparseMatrix& adjacency,
                              EdgeFeatureScheme scheme = EdgeFeatureScheme::standard)
      : adjacency_(&adjacency),
        decomposition_(decompose(adjacency)),
        inflow_(adjacency.size(), 0.0),
        scheme_(scheme) {
    for (NodeId i = 0; i < adjacency.size(); ++i) {
      for (const auto& e : adjacency.row(i)) {
        inflow_[e.col] += e.value;
        total_ += e.value;
      }
    }
  }

  const FlowDecomposition& decomposition() const noexcept { return decomposition_; }
  const std::vector<double>& inflow() const noexcept { return inflow_; }
  double total_volume() const noexcept { return total_; }

  EdgeFeatures operator()(NodeId i, NodeId j) const {
    const double a = adjacency_->at(i, j);
    if (!(a > 0.0))
      throw Error("edge features requested for absent edge (" + std::to_string(i) + ", " +
                  std::to_string(j) + ")");
    const double w = decomposition_.volume[i];
    return {scheme_ == EdgeFeatureScheme::standard ? std::log1p(a) : std::log(a),
            decomposition_.ratios.at(i, j), w / total_, a / inflow_[j], a / total_};
  }

 private:
  const SparseMatrix* adjacency_;
  FlowDecomposition decomposition_;
  std::vector<double> inflow_;
  double total_ = 0.0;
  EdgeFeatureScheme scheme_;
};

// ---------------------------------------------------------------------------
// CSV exports

inline void write_node_universe(std::ostream& out, const NodeUniverse& universe) {
  out << "id,label\n";
  for (NodeId i = 0; i < universe.size(); ++i) out << i << ',' << csv::quote(universe.label(i)) << '\n';
}

inline void write_snapshot_rows(std::ostream& out, std::size_t t, const SparseMatrix& m) {
  for (NodeId i = 0; i < m.size(); ++i)
    for (const auto& e : m.row(i))
      out << t << ',' << i << ',' << e.col << ',' << csv::format_double(e.value) << '\n';
}

inline void write_snapshots(std::ostream& out, const SnapshotSeries& series) {
  out << "t,src,dst,amount\n";
  for (const auto& s : series.snapshots) write_snapshot_rows(out, s.index, s.adjacency);
}

/// Parses the `t,src,dst,amount` format into one matrix per snapshot index.
inline std::map<std::size_t, SparseMatrix> read_snapshot_csv(std::istream& in, std::size_t n_nodes) {
  std::map<std::size_t, std::map<NodeId, std::map<NodeId, double>>> cells;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (csv::trim(line).empty()) continue;
    if (line_no == 1) {
      if (csv::trim(line) != "t,src,dst,amount")
        throw ParseError(line_no, "expected header 't,src,dst,amount'");
      continue;
    }
    auto f = csv::split(line);
    if (!f || f->size() != 4) throw ParseError(line_no, "expected 4 fields");
    auto t = csv::parse_int<std::size_t>((*f)[0]);
    auto s = csv::parse_int<NodeId>((*f)[1]);
    auto d = csv::parse_int<NodeId>((*f)[2]);
    auto v = csv::parse_double((*f)[3]);
    if (!t || !s || !d || !v) throw ParseError(line_no, "malformed snapshot row");
    if (*s >= n_nodes || *d >= n_nodes) throw ParseError(line_no, "node id out of range");
    cells[*t][*s][*d] += *v;
  }
  std::map<std::size_t, SparseMatrix> out;
  for (auto& [t, rows] : cells) {
    SparseMatrix m(n_nodes);
    for (auto& [i, row] : rows) {
      SparseRow r;
      for (auto& [j, v] : row)
        if (v != 0.0) r.push_back({j, v});
      m.set_row(i, std::move(r));
    }
    out.emplace(t, std::move(m));
  }
  return out;
}

}  // namespace flowcast
