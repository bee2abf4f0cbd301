#pragma once

// Structural node features from directed heat diffusion on the warm-up
// window, and the cosine time encoding Phi(dt) = cos(dt * w + b).

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include "flowcast/csv.hpp"
#include "flowcast/error.hpp"
#include "flowcast/graph_core.hpp"
#include "flowcast/parallel.hpp"

namespace flowcast::embeddings {

struct EmbedConfig {
  std::size_t dim = 32;
  std::vector<double> taus = {0.25, 0.5, 1.0};
  int taylor_order = 20;
  std::size_t top_m = 8;
  std::size_t warmup_months = 3;
};

struct StructuralEmbedding {
  Eigen::MatrixXd features;  // n_nodes x dim
  std::size_t warmup_months = 0;
  std::string method;
  std::vector<bool> isolated;  // no edges in the warm-up window

  std::size_t dim() const { return static_cast<std::size_t>(features.cols()); }
  std::size_t n_nodes() const { return static_cast<std::size_t>(features.rows()); }
};

/// Sum of snapshots [0, k): the only data structural embeddings may see.
inline SparseMatrix warmup_graph(const SnapshotSeries& series, std::size_t k) {
  k = std::min(k, series.size());
  std::vector<TemporalEdge> edges;
  for (std::size_t s = 0; s < k; ++s) {
    const auto& a = series[s].adjacency;
    for (NodeId i = 0; i < a.size(); ++i)
      for (const auto& e : a.row(i)) edges.push_back({i, e.col, 0, e.value});
  }
  return aggregate(series.n_nodes(), std::move(edges));
}

/// Row-normalised transition matrix D^{-1} A; rows of sinks stay empty.
inline SparseMatrix transition_matrix(const SparseMatrix& a) {
  SparseMatrix p(a.size());
  for (NodeId i = 0; i < a.size(); ++i) {
    const double w = a.row_sum(i);
    if (!(w > 0.0)) continue;
    SparseRow row;
    for (const auto& e : a.row(i)) row.push_back({e.col, e.value / w});
    p.set_row(i, std::move(row));
  }
  return p;
}

/// exp(-tau L) e_node with L = I - P, by a Taylor series truncated at `order`.
inline std::vector<double> heat_diffusion(const SparseMatrix& transition, NodeId node, double tau,
                                          int order) {
  const std::size_t n = transition.size();
  std::vector<double> term(n, 0.0), next(n, 0.0), result(n, 0.0);
  term[node] = 1.0;
  result[node] = 1.0;
  for (int k = 1; k <= order; ++k) {
    // next = -tau/k * (term - P term)
    const double scale = -tau / static_cast<double>(k);
    for (NodeId i = 0; i < n; ++i) {
      double pv = 0.0;
      for (const auto& e : transition.row(i)) pv += e.value * term[e.col];
      next[i] = scale * (term[i] - pv);
    }
    std::swap(term, next);
    for (std::size_t i = 0; i < n; ++i) result[i] += term[i];
  }
  return result;
}

namespace detail {

struct DiffusionStats {
  std::array<double, 3> moments;  // mean, variance, third central moment
  std::vector<double> top;        // largest coefficients, descending, zero-padded
};

inline DiffusionStats summarize_diffusion(std::vector<double> psi, std::size_t top_m) {
  std::sort(psi.begin(), psi.end(), std::greater<>());
  const double n = static_cast<double>(psi.size());
  double mean = 0.0;
  for (double v : psi) mean += v;
  mean /= n;
  double m2 = 0.0, m3 = 0.0;
  for (double v : psi) {
    const double d = v - mean;
    m2 += d * d;
    m3 += d * d * d;
  }
  DiffusionStats s{{mean, m2 / n, m3 / n}, std::vector<double>(top_m, 0.0)};
  for (std::size_t k = 0; k < std::min(top_m, psi.size()); ++k) s.top[k] = psi[k];
  return s;
}

}  // namespace detail

/// Heat-kernel diffusion statistics on the warm-up graph and its transpose.
///
/// Feature order: first the three moments for every (direction, tau) pair
/// (out-direction first, taus in the given order), then the r-th largest
/// coefficient for r = 0..top_m-1, again over every (direction, tau). The
/// vector is truncated or zero-padded to `dim`.
///
/// A node without warm-up edges diffuses only into itself, giving the
/// constant pattern psi = exp(-tau) e_node; such rows are flagged in
/// `isolated`.
inline StructuralEmbedding structural_embed(const SparseMatrix& warmup, const EmbedConfig& config) {
  if (warmup.nnz() == 0) throw Error("warm-up graph has no edges");
  if (config.taylor_order < 4) throw Error("taylor_order must be >= 4");
  if (config.taus.empty()) throw Error("at least one diffusion scale is required");
  const std::size_t n = warmup.size();
  const SparseMatrix forward = transition_matrix(warmup);
  const SparseMatrix backward = transition_matrix(warmup.transposed());
  const std::size_t n_taus = config.taus.size();

  StructuralEmbedding emb;
  emb.features = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(config.dim));
  emb.warmup_months = config.warmup_months;
  emb.method = "directed-heat-kernel";
  emb.isolated.assign(n, false);
  const SparseMatrix warmup_t = warmup.transposed();
  for (NodeId i = 0; i < n; ++i) emb.isolated[i] = warmup.row(i).empty() && warmup_t.row(i).empty();

  flowcast::detail::parallel_chunks(n, 16, [&](std::size_t, std::size_t begin, std::size_t end) {
    for (std::size_t node = begin; node < end; ++node) {
      std::vector<double> feats;
      std::vector<detail::DiffusionStats> stats;
      for (const SparseMatrix* p : {&forward, &backward})
        for (double tau : config.taus)
          stats.push_back(detail::summarize_diffusion(
              heat_diffusion(*p, static_cast<NodeId>(node), tau, config.taylor_order), config.top_m));
      for (const auto& s : stats) feats.insert(feats.end(), s.moments.begin(), s.moments.end());
      for (std::size_t r = 0; r < config.top_m; ++r)
        for (std::size_t k = 0; k < 2 * n_taus; ++k) feats.push_back(stats[k].top[r]);
      for (std::size_t c = 0; c < std::min(config.dim, feats.size()); ++c)
        emb.features(static_cast<Eigen::Index>(node), static_cast<Eigen::Index>(c)) = feats[c];
    }
  });
  return emb;
}

inline StructuralEmbedding structural_embed(const SnapshotSeries& series, const EmbedConfig& config) {
  return structural_embed(warmup_graph(series, config.warmup_months), config);
}

inline void save_embeddings(std::ostream& out, const StructuralEmbedding& emb) {
  out << "node_id";
  for (std::size_t c = 0; c < emb.dim(); ++c) out << ",f" << c;
  out << '\n';
  for (Eigen::Index i = 0; i < emb.features.rows(); ++i) {
    out << i;
    for (Eigen::Index c = 0; c < emb.features.cols(); ++c) out << ',' << csv::format_double(emb.features(i, c));
    out << '\n';
  }
}

/// Loads `node_id,f0..f{d-1}`; every node in [0, n_nodes) must appear once.
inline StructuralEmbedding load_embeddings(std::istream& in, std::size_t n_nodes) {
  std::string line;
  if (!std::getline(in, line)) throw ParseError(1, "empty embedding file");
  auto header = csv::split(line);
  if (!header || header->size() < 2 || (*header)[0] != "node_id")
    throw ParseError(1, "expected header 'node_id,f0,...'");
  const std::size_t dim = header->size() - 1;
  for (std::size_t c = 0; c < dim; ++c)
    if ((*header)[c + 1] != "f" + std::to_string(c)) throw ParseError(1, "expected column f" + std::to_string(c));

  StructuralEmbedding emb;
  emb.features = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n_nodes), static_cast<Eigen::Index>(dim));
  emb.method = "loaded";
  emb.isolated.assign(n_nodes, false);
  std::vector<bool> seen(n_nodes, false);
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (csv::trim(line).empty()) continue;
    auto f = csv::split(line);
    if (!f || f->size() != dim + 1)
      throw ParseError(line_no, "expected " + std::to_string(dim + 1) + " fields");
    auto id = csv::parse_int<NodeId>((*f)[0]);
    if (!id) throw ParseError(line_no, "bad node id '" + (*f)[0] + "'");
    if (*id >= n_nodes) throw Error("embedding file has unknown node id " + std::to_string(*id));
    if (seen[*id]) throw ParseError(line_no, "duplicate node id " + std::to_string(*id));
    seen[*id] = true;
    for (std::size_t c = 0; c < dim; ++c) {
      auto v = csv::parse_double((*f)[c + 1]);
      if (!v || !std::isfinite(*v)) throw ParseError(line_no, "bad feature value");
      emb.features(static_cast<Eigen::Index>(*id), static_cast<Eigen::Index>(c)) = *v;
    }
  }
  std::string missing;
  std::size_t n_missing = 0;
  for (std::size_t i = 0; i < n_nodes; ++i) {
    if (seen[i]) continue;
    if (n_missing++ < 20) missing += (missing.empty() ? "" : ", ") + std::to_string(i);
  }
  if (n_missing > 0)
    throw Error("embedding file is missing " + std::to_string(n_missing) + " node(s): " + missing +
                (n_missing > 20 ? ", ..." : ""));
  return emb;
}

// ---------------------------------------------------------------------------
// Time encoding

struct TimeEncoder {
  std::vector<double> frequency;  // per month
  std::vector<double> phase;
  bool learnable = true;

  std::size_t dim() const noexcept { return frequency.size(); }

  /// Geometric ladder w_k = 10^(-2k/d), b = 0.
  static TimeEncoder make(std::size_t d, bool learnable = true) {
    TimeEncoder enc;
    enc.learnable = learnable;
    for (std::size_t k = 0; k < d; ++k) {
      enc.frequency.push_back(std::pow(10.0, -2.0 * static_cast<double>(k) / static_cast<double>(d)));
      enc.phase.push_back(0.0);
    }
    return enc;
  }
};

inline std::vector<double> time_encode(const TimeEncoder& enc, double delta_months) {
  std::vector<double> out(enc.dim());
  for (std::size_t k = 0; k < enc.dim(); ++k) out[k] = std::cos(delta_months * enc.frequency[k] + enc.phase[k]);
  return out;
}

}  // namespace flowcast::embeddings
