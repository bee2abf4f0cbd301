#pragma once

// Ratio model: node transform, temporal self-attention over sampled
// neighbours, a two-layer output head, and the hierarchical softmax over
// destinations. Backward passes are written out by hand.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "flowcast/dlf/hs_tree.hpp"
#include "flowcast/dlf/neighbors.hpp"
#include "flowcast/embeddings.hpp"
#include "flowcast/error.hpp"
#include "flowcast/rng.hpp"

namespace flowcast::dlf {

using Eigen::MatrixXd;
using Eigen::VectorXd;

struct DlfShape {
  std::size_t feature_dim = 32;  // structural embedding width
  std::size_t hidden_dim = 32;   // node transform output
  std::size_t time_dim = 16;
  std::size_t attn_dim = 64;     // key/query/value width
  std::size_t head_dim = 64;     // output head hidden layer
  std::size_t out_dim = 32;      // width of the embedding fed to the softmax tree

  /// Width of one attention row: [node state; edge features; time code].
  std::size_t row_dim() const noexcept { return hidden_dim + kEdgeFeatureDim + time_dim; }

  friend bool operator==(const DlfShape&, const DlfShape&) = default;
};

struct DlfParams {
  DlfShape shape;
  MatrixXd w_node;  // feature_dim x hidden_dim
  VectorXd b_node;
  MatrixXd w_query, w_key, w_value;  // row_dim x attn_dim
  MatrixXd w_head;                   // (attn_dim + feature_dim) x head_dim
  VectorXd b_head;
  MatrixXd w_out;  // head_dim x out_dim
  VectorXd b_out;
  VectorXd time_frequency, time_phase;
  bool time_learnable = true;
  HsTree tree;
  MatrixXd tree_weight;  // one row per tree node (row 0, the root, is unused)
  VectorXd tree_bias;

  /// Same shapes, all zeros; used as a gradient accumulator.
  DlfParams zeros_like() const {
    DlfParams z = *this;
    z.visit([](const char*, auto& t) { t.setZero(); });
    return z;
  }

  /// Calls f(name, tensor) for every learnable tensor in a fixed order.
  template <typename F>
  void visit(F&& f) {
    f("w_node", w_node);
    f("b_node", b_node);
    f("w_query", w_query);
    f("w_key", w_key);
    f("w_value", w_value);
    f("w_head", w_head);
    f("b_head", b_head);
    f("w_out", w_out);
    f("b_out", b_out);
    f("time_frequency", time_frequency);
    f("time_phase", time_phase);
    f("tree_weight", tree_weight);
    f("tree_bias", tree_bias);
  }

  template <typename F>
  void visit(F&& f) const {
    const_cast<DlfParams*>(this)->visit([&](const char* name, auto& t) { f(name, std::as_const(t)); });
  }

  std::size_t n_parameters() const {
    std::size_t n = 0;
    visit([&](const char*, const auto& t) { n += static_cast<std::size_t>(t.size()); });
    return n;
  }

  /// this += scale * other
  void axpy(double scale, const DlfParams& other) {
    std::vector<const double*> src;
    other.visit([&](const char*, const auto& t) { src.push_back(t.data()); });
    std::size_t k = 0;
    visit([&](const char*, auto& t) {
      const double* s = src[k++];
      for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] += scale * s[i];
    });
  }

  bool all_finite() const {
    bool ok = true;
    visit([&](const char*, const auto& t) { ok = ok && t.allFinite(); });
    return ok;
  }
};

/// Glorot-uniform weights, zero biases, geometric time ladder.
inline DlfParams init_params(const DlfShape& shape, HsTree tree, std::uint64_t seed, bool time_learnable = true) {
  Rng rng = Rng::stream(seed, "init");
  auto glorot = [&](std::size_t rows, std::size_t cols) {
    const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
    MatrixXd m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (Eigen::Index c = 0; c < m.cols(); ++c)
      for (Eigen::Index r = 0; r < m.rows(); ++r) m(r, c) = rng.uniform(-limit, limit);
    return m;
  };
  auto zeros = [](std::size_t n) { return VectorXd::Zero(static_cast<Eigen::Index>(n)); };
  DlfParams p;
  p.shape = shape;
  p.w_node = glorot(shape.feature_dim, shape.hidden_dim);
  p.b_node = zeros(shape.hidden_dim);
  p.w_query = glorot(shape.row_dim(), shape.attn_dim);
  p.w_key = glorot(shape.row_dim(), shape.attn_dim);
  p.w_value = glorot(shape.row_dim(), shape.attn_dim);
  p.w_head = glorot(shape.attn_dim + shape.feature_dim, shape.head_dim);
  p.b_head = zeros(shape.head_dim);
  p.w_out = glorot(shape.head_dim, shape.out_dim);
  p.b_out = zeros(shape.out_dim);
  const auto enc = embeddings::TimeEncoder::make(shape.time_dim, time_learnable);
  p.time_frequency = Eigen::Map<const VectorXd>(enc.frequency.data(), static_cast<Eigen::Index>(enc.dim()));
  p.time_phase = Eigen::Map<const VectorXd>(enc.phase.data(), static_cast<Eigen::Index>(enc.dim()));
  p.time_learnable = time_learnable;
  p.tree_weight = glorot(tree.size(), shape.out_dim);
  p.tree_weight.row(0).setZero();
  p.tree_bias = zeros(tree.size());
  p.tree = std::move(tree);
  return p;
}

inline embeddings::TimeEncoder time_encoder(const DlfParams& p) {
  embeddings::TimeEncoder enc;
  enc.frequency.assign(p.time_frequency.data(), p.time_frequency.data() + p.time_frequency.size());
  enc.phase.assign(p.time_phase.data(), p.time_phase.data() + p.time_phase.size());
  enc.learnable = p.time_learnable;
  return enc;
}

// ---------------------------------------------------------------------------
// Forward / backward

/// Intermediates kept for the backward pass.
struct ForwardCache {
  VectorXd x_target;
  VectorXd node_pre, node_state;  // target node transform
  MatrixXd nbr_x, nbr_pre;        // neighbours: raw features and pre-activations
  VectorXd deltas;                // elapsed months per neighbour
  MatrixXd time_arg;              // n x time_dim: delta * w + b
  VectorXd query_row;
  MatrixXd rows;                  // n x row_dim
  VectorXd query;
  MatrixXd keys, values;
  VectorXd attention;
  VectorXd context;  // attention output
  VectorXd head_in, head_pre, head_act;
  VectorXd embedding;  // Z2
};

inline VectorXd relu(const VectorXd& v) { return v.cwiseMax(0.0); }

/// Embedding Z2 of the sample's target node. `features` holds one row per
/// node. The sample must be non-empty.
inline VectorXd forward(const DlfParams& p, const MatrixXd& features, const NeighborSample& sample,
                        ForwardCache* cache = nullptr) {
  if (sample.cold_start()) throw Error("forward needs a non-empty neighbour sample");
  const auto& s = p.shape;
  const auto hd = static_cast<Eigen::Index>(s.hidden_dim);
  const auto td = static_cast<Eigen::Index>(s.time_dim);
  const auto ed = static_cast<Eigen::Index>(kEdgeFeatureDim);
  const auto n = static_cast<Eigen::Index>(sample.entries.size());
  ForwardCache local;
  ForwardCache& c = cache ? *cache : local;

  c.x_target = features.row(sample.target).transpose();
  c.node_pre = p.w_node.transpose() * c.x_target + p.b_node;
  c.node_state = relu(c.node_pre);

  c.nbr_x.resize(n, features.cols());
  c.deltas.resize(n);
  c.rows.resize(n, static_cast<Eigen::Index>(s.row_dim()));
  for (Eigen::Index k = 0; k < n; ++k) {
    const auto& e = sample.entries[static_cast<std::size_t>(k)];
    c.nbr_x.row(k) = features.row(e.neighbor);
    c.deltas(k) = sample.delta_months(static_cast<std::size_t>(k));
    for (Eigen::Index f = 0; f < ed; ++f) c.rows(k, hd + f) = e.features[static_cast<std::size_t>(f)];
  }
  c.nbr_pre = (c.nbr_x * p.w_node).rowwise() + p.b_node.transpose();
  c.rows.leftCols(hd) = c.nbr_pre.cwiseMax(0.0);
  c.time_arg = (c.deltas * p.time_frequency.transpose()).rowwise() + p.time_phase.transpose();
  c.rows.rightCols(td) = c.time_arg.array().cos().matrix();

  c.query_row = VectorXd::Zero(static_cast<Eigen::Index>(s.row_dim()));
  c.query_row.head(hd) = c.node_state;
  c.query_row.tail(td) = p.time_phase.array().cos().matrix();

  c.query = p.w_query.transpose() * c.query_row;
  c.keys = c.rows * p.w_key;
  c.values = c.rows * p.w_value;
  const double scale = 1.0 / std::sqrt(static_cast<double>(s.attn_dim));
  VectorXd scores = (c.keys * c.query) * scale;
  c.attention = (scores.array() - scores.maxCoeff()).exp().matrix();
  c.attention /= c.attention.sum();
  c.context = c.values.transpose() * c.attention;

  c.head_in.resize(static_cast<Eigen::Index>(s.attn_dim + s.feature_dim));
  c.head_in << c.context, c.x_target;
  c.head_pre = p.w_head.transpose() * c.head_in + p.b_head;
  c.head_act = relu(c.head_pre);
  c.embedding = p.w_out.transpose() * c.head_act + p.b_out;
  return c.embedding;
}

/// Accumulates into `grad` the parameter gradient given dL/dZ2.
inline void backward(const DlfParams& p, const ForwardCache& c, const VectorXd& grad_embedding, DlfParams& grad) {
  const auto& s = p.shape;
  const auto hd = static_cast<Eigen::Index>(s.hidden_dim);
  const auto td = static_cast<Eigen::Index>(s.time_dim);
  const auto ad = static_cast<Eigen::Index>(s.attn_dim);

  grad.w_out.noalias() += c.head_act * grad_embedding.transpose();
  grad.b_out += grad_embedding;
  VectorXd g_head = (p.w_out * grad_embedding).cwiseProduct((c.head_pre.array() > 0.0).cast<double>().matrix());
  grad.w_head.noalias() += c.head_in * g_head.transpose();
  grad.b_head += g_head;
  const VectorXd g_context = (p.w_head * g_head).head(ad);

  const MatrixXd g_values = c.attention * g_context.transpose();
  const VectorXd g_attn = c.values * g_context;
  const VectorXd g_scores = c.attention.cwiseProduct((g_attn.array() - c.attention.dot(g_attn)).matrix());
  const double scale = 1.0 / std::sqrt(static_cast<double>(s.attn_dim));
  const MatrixXd g_keys = (g_scores * c.query.transpose()) * scale;
  const VectorXd g_query = (c.keys.transpose() * g_scores) * scale;

  grad.w_query.noalias() += c.query_row * g_query.transpose();
  grad.w_key.noalias() += c.rows.transpose() * g_keys;
  grad.w_value.noalias() += c.rows.transpose() * g_values;
  const VectorXd g_query_row = p.w_query * g_query;
  const MatrixXd g_rows = g_keys * p.w_key.transpose() + g_values * p.w_value.transpose();

  if (p.time_learnable) {
    const VectorXd phase_sin = p.time_phase.array().sin().matrix();
    grad.time_phase -= phase_sin.cwiseProduct(g_query_row.tail(td));
    const MatrixXd g_arg = -(c.time_arg.array().sin() * g_rows.rightCols(td).array()).matrix();
    grad.time_phase += g_arg.colwise().sum().transpose();
    grad.time_frequency += g_arg.transpose() * c.deltas;
  }

  const VectorXd g_node_pre =
      g_query_row.head(hd).cwiseProduct((c.node_pre.array() > 0.0).cast<double>().matrix());
  const MatrixXd g_nbr_pre =
      g_rows.leftCols(hd).cwiseProduct((c.nbr_pre.array() > 0.0).cast<double>().matrix());
  grad.w_node.noalias() += c.x_target * g_node_pre.transpose();
  grad.w_node.noalias() += c.nbr_x.transpose() * g_nbr_pre;
  grad.b_node += g_node_pre + g_nbr_pre.colwise().sum().transpose();
}

// ---------------------------------------------------------------------------
// Hierarchical softmax

/// Conditional log-probabilities log p(node | parent) for every tree node
/// (0 for the root).
inline VectorXd tree_log_conditionals(const DlfParams& p, const VectorXd& embedding) {
  const auto& tree = p.tree;
  VectorXd logc = VectorXd::Zero(static_cast<Eigen::Index>(tree.size()));
  for (const auto& node : tree.nodes) {
    if (node.is_leaf()) continue;
    double mx = -std::numeric_limits<double>::infinity();
    std::vector<double> sc(node.children.size());
    for (std::size_t k = 0; k < node.children.size(); ++k) {
      const int ch = node.children[k];
      sc[k] = p.tree_weight.row(ch).dot(embedding) + p.tree_bias(ch);
      mx = std::max(mx, sc[k]);
    }
    double z = 0.0;
    for (double v : sc) z += std::exp(v - mx);
    const double lse = mx + std::log(z);
    for (std::size_t k = 0; k < node.children.size(); ++k) logc(node.children[k]) = sc[k] - lse;
  }
  return logc;
}

/// Leaf probabilities indexed by destination id.
inline VectorXd hsoftmax_prob(const DlfParams& p, const VectorXd& embedding) {
  const auto& tree = p.tree;
  const VectorXd logc = tree_log_conditionals(p, embedding);
  VectorXd path = logc;
  for (std::size_t k = 1; k < tree.size(); ++k) path(static_cast<Eigen::Index>(k)) += path(tree.nodes[k].parent);
  VectorXd prob(static_cast<Eigen::Index>(tree.n_destinations()));
  for (std::size_t j = 0; j < tree.n_destinations(); ++j) prob(static_cast<Eigen::Index>(j)) = std::exp(path(tree.leaf_of[j]));
  return prob;
}

/// Given dL/d(log p(node | parent)) per tree node, accumulates tree weight
/// gradients and returns dL/dZ2.
inline VectorXd tree_backward(const DlfParams& p, const VectorXd& embedding, const VectorXd& logc,
                              const VectorXd& g_logc, DlfParams& grad) {
  VectorXd g_emb = VectorXd::Zero(embedding.size());
  for (const auto& node : p.tree.nodes) {
    if (node.is_leaf()) continue;
    double total = 0.0;
    for (int ch : node.children) total += g_logc(ch);
    for (int ch : node.children) {
      const double g_score = g_logc(ch) - std::exp(logc(ch)) * total;
      if (g_score == 0.0) continue;
      grad.tree_weight.row(ch) += g_score * embedding.transpose();
      grad.tree_bias(ch) += g_score;
      g_emb += g_score * p.tree_weight.row(ch).transpose();
    }
  }
  return g_emb;
}

// ---------------------------------------------------------------------------
// Losses

inline constexpr double kProbClamp = 1e-12;

/// Per-row binary cross-entropy, summed over the union of the two supports:
/// -sum_j [r_j log q_j + (1 - r_j) log(1 - q_j)], q clamped to [eps, 1-eps].
inline double row_bce(std::span<const Entry> truth, std::span<const Entry> pred, double eps = kProbClamp) {
  auto term = [eps](double r, double q) {
    q = std::clamp(q, eps, 1.0 - eps);
    double v = 0.0;
    if (r > 0.0) v -= r * std::log(q);
    if (r < 1.0) v -= (1.0 - r) * std::log1p(-q);
    return v;
  };
  double loss = 0.0;
  std::size_t a = 0, b = 0;
  while (a < truth.size() || b < pred.size()) {
    if (b == pred.size() || (a < truth.size() && truth[a].col < pred[b].col)) {
      loss += term(truth[a++].value, 0.0);
    } else if (a == truth.size() || pred[b].col < truth[a].col) {
      loss += term(0.0, pred[b++].value);
    } else {
      loss += term(truth[a++].value, pred[b++].value);
    }
  }
  return loss;
}

/// Mean row BCE over paired rows.
inline double loss_bce(std::span<const SparseRow> truth, std::span<const SparseRow> pred, double eps = kProbClamp) {
  if (truth.size() != pred.size()) throw DimensionError("loss_bce: row count mismatch");
  if (truth.empty()) throw Error("loss_bce: empty evaluation set");
  double total = 0.0;
  for (std::size_t k = 0; k < truth.size(); ++k) total += row_bce(truth[k], pred[k], eps);
  return total / static_cast<double>(truth.size());
}

enum class Objective {
  /// Soft-target BCE over every destination.
  bce,
  /// Expected root-to-leaf cross-entropy under the target distribution;
  /// equals softmax cross-entropy on a depth-1 tree.
  path_cross_entropy,
};

/// Loss of one row and dL/d(log p(node | parent)) for every tree node.
inline double tree_loss(const DlfParams& p, const VectorXd& logc, std::span<const Entry> target, Objective objective,
                        VectorXd& g_logc) {
  const auto& tree = p.tree;
  const auto size = static_cast<Eigen::Index>(tree.size());
  g_logc = VectorXd::Zero(size);
  double loss = 0.0;
  if (objective == Objective::path_cross_entropy) {
    for (const auto& e : target) {
      int node = tree.leaf_of.at(e.col);
      while (node > 0) {
        loss -= e.value * logc(node);
        g_logc(node) -= e.value;
        node = tree.nodes[static_cast<std::size_t>(node)].parent;
      }
    }
    return loss;
  }
  VectorXd path = logc;
  for (Eigen::Index k = 1; k < size; ++k) path(k) += path(tree.nodes[static_cast<std::size_t>(k)].parent);
  std::vector<double> r(tree.n_destinations(), 0.0);
  for (const auto& e : target) r.at(e.col) = e.value;
  for (std::size_t j = 0; j < tree.n_destinations(); ++j) {
    const int leaf = tree.leaf_of[j];
    const double q = std::exp(path(leaf));
    const double qc = std::clamp(q, kProbClamp, 1.0 - kProbClamp);
    if (r[j] > 0.0) loss -= r[j] * std::log(qc);
    if (r[j] < 1.0) loss -= (1.0 - r[j]) * std::log1p(-qc);
    if (q > kProbClamp && q < 1.0 - kProbClamp) {
      // dL/dq * q, the derivative w.r.t. the leaf's log-probability
      g_logc(leaf) = -r[j] + (1.0 - r[j]) * q / (1.0 - q);
    }
  }
  // Each node's log-conditional feeds every leaf below it.
  for (Eigen::Index k = size - 1; k > 0; --k) {
    const int parent = tree.nodes[static_cast<std::size_t>(k)].parent;
    if (parent > 0) g_logc(parent) += g_logc(k);
  }
  return loss;
}

/// Loss of one (sample, target row) pair; accumulates the gradient if given.
inline double sample_loss(const DlfParams& p, const MatrixXd& features, const NeighborSample& sample,
                          std::span<const Entry> target, Objective objective, DlfParams* grad) {
  ForwardCache cache;
  const VectorXd z = forward(p, features, sample, &cache);
  const VectorXd logc = tree_log_conditionals(p, z);
  VectorXd g_logc;
  const double loss = tree_loss(p, logc, target, objective, g_logc);
  if (grad) {
    const VectorXd g_z = tree_backward(p, z, logc, g_logc, *grad);
    backward(p, cache, g_z, *grad);
  }
  return loss;
}

}  // namespace flowcast::dlf
