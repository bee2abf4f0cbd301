#pragma once

// Fixtures and independent reference implementations shared by the unit
// tests and the acceptance runner. The oracles are written against plain
// dense Eigen arithmetic and do not call into the code under test beyond
// reading parameter tensors.

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "flowcast/flowcast.hpp"

namespace fctest {

using namespace flowcast;
using Eigen::MatrixXd;
using Eigen::VectorXd;

inline Timestamp ts(int y, unsigned m, unsigned d = 1) { return *parse_timestamp(
    std::to_string(y) + "-" + (m < 10 ? "0" : "") + std::to_string(m) + "-" + (d < 10 ? "0" : "") + std::to_string(d)); }

/// Series from (month offset, src, dst, amount) tuples; month 0 = 2019-04.
struct MonthEdge {
  std::size_t month;
  NodeId src, dst;
  double amount;
};

inline SnapshotSeries series_from(std::size_t n, const std::vector<MonthEdge>& edges, std::size_t n_months = 0) {
  std::vector<TemporalEdge> list;
  for (const auto& e : edges) {
    const MonthIndex m = 2019 * 12 + 3 + static_cast<MonthIndex>(e.month);
    list.push_back({e.src, e.dst, month_start(m) + 86400 * 3, e.amount});
  }
  std::stable_sort(list.begin(), list.end(), [](auto& a, auto& b) { return a.timestamp < b.timestamp; });
  auto s = build_snapshots(std::move(list), NodeUniverse::identity(n));
  // Pad with empty trailing months so every series has the requested length.
  while (s.size() < n_months) s.snapshots.push_back({s.size(), SparseMatrix(n)});
  return s;
}

/// Random dense-ish series: every month each node sends to a few others.
inline SnapshotSeries random_series(std::size_t n, std::size_t months, std::uint64_t seed, double density = 0.3) {
  Rng rng(seed);
  std::vector<MonthEdge> edges;
  for (std::size_t t = 0; t < months; ++t)
    for (NodeId i = 0; i < n; ++i)
      for (NodeId j = 0; j < n; ++j)
        if (i != j && rng.bernoulli(density)) edges.push_back({t, i, j, rng.lognormal(2.0, 1.0)});
  return series_from(n, edges, months);
}

inline SnapshotSeries synth_series(const synth::SynthConfig& cfg) {
  const auto r = synth::generate(cfg);
  std::ostringstream out;
  synth::write_edges_csv(out, r);
  std::istringstream in(out.str());
  auto ing = ingest_edges(in);
  return build_snapshots(std::move(ing.edges), std::move(ing.universe));
}

// ---------------------------------------------------------------------------
// Dense forward oracle: the attention model computed step by step from the
// written-out equations, with its own neighbour-row assembly.

inline VectorXd dense_forward(const dlf::DlfParams& p, const MatrixXd& x, const dlf::NeighborSample& s) {
  const auto relu = [](const MatrixXd& m) { return m.unaryExpr([](double v) { return v > 0.0 ? v : 0.0; }); };
  const int hd = static_cast<int>(p.shape.hidden_dim);
  const int td = static_cast<int>(p.shape.time_dim);
  const int m = hd + 5 + td;
  const int k = static_cast<int>(s.entries.size());

  // Z1 = relu(X W + b) for the target and each neighbour.
  const MatrixXd z_target = relu(x.row(s.target) * p.w_node + p.b_node.transpose());
  MatrixXd h(k + 1, m);
  h.setZero();
  h.block(0, 0, 1, hd) = z_target;
  for (int c = 0; c < td; ++c) h(0, hd + 5 + c) = std::cos(0.0 * p.time_frequency(c) + p.time_phase(c));
  for (int r = 0; r < k; ++r) {
    const auto& e = s.entries[static_cast<std::size_t>(r)];
    h.block(r + 1, 0, 1, hd) = relu(x.row(e.neighbor) * p.w_node + p.b_node.transpose());
    for (int c = 0; c < 5; ++c) h(r + 1, hd + c) = e.features[static_cast<std::size_t>(c)];
    const double dt = static_cast<double>(s.reference_time - e.time) / 2629746.0;
    for (int c = 0; c < td; ++c) h(r + 1, hd + 5 + c) = std::cos(dt * p.time_frequency(c) + p.time_phase(c));
  }
  const MatrixXd q = h.topRows(1) * p.w_query;
  const MatrixXd kk = h.bottomRows(k) * p.w_key;
  const MatrixXd v = h.bottomRows(k) * p.w_value;
  MatrixXd logits = q * kk.transpose() / std::sqrt(static_cast<double>(p.shape.attn_dim));
  const double mx = logits.maxCoeff();
  MatrixXd a = (logits.array() - mx).exp().matrix();
  a /= a.sum();
  const MatrixXd zbar = a * v;
  MatrixXd cat(1, zbar.cols() + x.cols());
  cat << zbar, x.row(s.target);
  const MatrixXd hidden = relu(cat * p.w_head + p.b_head.transpose());
  return (hidden * p.w_out + p.b_out.transpose()).transpose();
}

/// Leaf probabilities by explicit path products of per-node softmaxes.
inline VectorXd dense_hsoftmax(const dlf::DlfParams& p, const VectorXd& z) {
  const auto& tree = p.tree;
  std::vector<double> cond(tree.size(), 1.0);
  for (const auto& node : tree.nodes) {
    if (node.is_leaf()) continue;
    double denom = 0.0;
    for (int c : node.children) denom += std::exp(p.tree_weight.row(c).dot(z) + p.tree_bias(c));
    for (int c : node.children) cond[static_cast<std::size_t>(c)] = std::exp(p.tree_weight.row(c).dot(z) + p.tree_bias(c)) / denom;
  }
  VectorXd out(static_cast<Eigen::Index>(tree.n_destinations()));
  for (std::size_t j = 0; j < tree.n_destinations(); ++j) {
    double prob = 1.0;
    for (int k = tree.leaf_of[j]; k > 0; k = tree.nodes[static_cast<std::size_t>(k)].parent) prob *= cond[static_cast<std::size_t>(k)];
    out(static_cast<Eigen::Index>(j)) = prob;
  }
  return out;
}

/// Brute-force pairwise AUC: P(score_pos > score_neg) + 0.5 P(tie).
inline double brute_auc(const std::vector<int>& labels, const std::vector<double>& scores) {
  double wins = 0.0, pairs = 0.0;
  for (std::size_t a = 0; a < labels.size(); ++a) {
    if (!labels[a]) continue;
    for (std::size_t b = 0; b < labels.size(); ++b) {
      if (labels[b]) continue;
      pairs += 1.0;
      if (scores[a] > scores[b]) wins += 1.0;
      else if (scores[a] == scores[b]) wins += 0.5;
    }
  }
  return wins / pairs;
}

/// exp(-tau (I - P)) e_node through Eigen's dense matrix exponential.
inline VectorXd dense_heat(const SparseMatrix& transition, NodeId node, double tau) {
  const auto n = static_cast<Eigen::Index>(transition.size());
  MatrixXd l = MatrixXd::Identity(n, n);
  for (NodeId i = 0; i < transition.size(); ++i)
    for (const auto& e : transition.row(i)) l(i, e.col) -= e.value;
  const MatrixXd k = (-tau * l).exp();
  return k.col(node);
}

// ---------------------------------------------------------------------------
// Small random model configurations

struct SmallProblem {
  SnapshotSeries series;
  MatrixXd features;
  dlf::DlfParams params;
  std::vector<dlf::TrainingExample> examples;
};

inline SmallProblem small_problem(std::uint64_t seed, std::size_t n = 6, std::size_t d = 4, std::size_t k = 3,
                                  int tree_depth = 2) {
  SmallProblem sp;
  sp.series = random_series(n, 6, seed, 0.5);
  Rng rng = Rng::stream(seed, "test.features");
  sp.features = MatrixXd(static_cast<Eigen::Index>(n), 3);
  for (Eigen::Index i = 0; i < sp.features.size(); ++i) sp.features.data()[i] = rng.normal();
  dlf::DlfShape shape;
  shape.feature_dim = 3;
  shape.hidden_dim = d;
  shape.time_dim = d;
  shape.attn_dim = d;
  shape.head_dim = d;
  shape.out_dim = d;
  auto tree = tree_depth == 1 ? dlf::flat_tree(n) : dlf::build_hs_tree(sp.features, tree_depth, 2, seed);
  sp.params = dlf::init_params(shape, std::move(tree), seed);
  // Random phases and biases so every gradient path is exercised.
  sp.params.visit([&](const char* name, auto& t) {
    const std::string s(name);
    if (s == "time_phase" || s.rfind("b_", 0) == 0 || s == "tree_bias")
      for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] = rng.normal(0.0, 0.3);
  });
  sp.params.tree_weight.row(0).setZero();
  sp.params.tree_bias(0) = 0.0;
  const dlf::TemporalIndex index(sp.series);
  sp.examples = dlf::collect_examples(index, 3, 6, k);
  return sp;
}

struct GradCheck {
  double worst = 0.0;      // max |g - fd| / max(|g|, |fd|, floor)
  double floor = 0.0;      // gradient magnitude the stencil resolves to 1e-4
  std::size_t n_coords = 0;
  std::size_t n_floored = 0;  // coordinates with |g|, |fd| below the floor
};

/// Central finite-difference check of every parameter coordinate. The
/// stencil's roundoff is about eps * |L| / h, so gradients smaller than
/// 1e4 times that cannot be resolved to a relative 1e-4; that magnitude is
/// the denominator floor.
inline GradCheck gradient_check(const SmallProblem& sp, dlf::Objective objective, double h = 1e-5) {
  std::vector<std::size_t> batch(sp.examples.size());
  std::iota(batch.begin(), batch.end(), std::size_t{0});
  dlf::DlfParams grad;
  const double loss = dlf::batch_gradient(sp.params, sp.features, sp.examples, batch, objective, &grad);
  std::vector<double> analytic;
  grad.visit([&](const char*, const auto& t) {
    for (Eigen::Index i = 0; i < t.size(); ++i) analytic.push_back(t.data()[i]);
  });
  dlf::DlfParams p = sp.params;
  std::vector<double*> coords;
  p.visit([&](const char*, auto& t) {
    for (Eigen::Index i = 0; i < t.size(); ++i) coords.push_back(t.data() + i);
  });
  GradCheck out;
  out.floor = 1e4 * std::numeric_limits<double>::epsilon() * std::max(std::abs(loss), 1.0) / h;
  out.n_coords = coords.size();
  for (std::size_t c = 0; c < coords.size(); ++c) {
    const double orig = *coords[c];
    *coords[c] = orig + h;
    const double up = dlf::batch_gradient(p, sp.features, sp.examples, batch, objective, nullptr);
    *coords[c] = orig - h;
    const double down = dlf::batch_gradient(p, sp.features, sp.examples, batch, objective, nullptr);
    *coords[c] = orig;
    const double fd = (up - down) / (2.0 * h);
    const double scale = std::max(std::abs(fd), std::abs(analytic[c]));
    if (scale < out.floor) ++out.n_floored;
    out.worst = std::max(out.worst, std::abs(fd - analytic[c]) / std::max(scale, out.floor));
  }
  return out;
}

}  // namespace fctest
