#pragma once

// Versioned JSON containers for trained models.
//
// Ratio model:
//   {"format": "flowcast.dlf", "version": 1,
//    "shape": {...}, "time_learnable": bool,
//    "tensors": {name: {"rows": r, "cols": c, "data": [row-major values]}},
//    "tree": {"parent": [...], "destination": [...]},   // parents first
//    "embedding": {"method": s, "warmup_months": k, "rows": n, "cols": d, "data": [...]},
//    "config": {...}, "training": {...}}
//
// Volume model:
//   {"format": "flowcast.gbdt", "version": 1, "base": b, "learning_rate": eta,
//    "max_depth": d, "n_features": f,
//    "trees": [{"feature": [...], "threshold": [...], "left": [...],
//               "right": [...], "value": [...], "depth": [...]}],
//    "config": {...}}
//
// Doubles are written with enough digits to round-trip exactly.

#include <Eigen/Dense>

#include <string>

#include <json.hpp>

#include "flowcast/dlf/model.hpp"
#include "flowcast/embeddings.hpp"
#include "flowcast/error.hpp"
#include "flowcast/volume.hpp"

namespace flowcast::checkpoint {

using json = nlohmann::ordered_json;

inline constexpr int kVersion = 1;

namespace detail {

inline json matrix_to_json(const Eigen::MatrixXd& m) {
  std::vector<double> data;
  data.reserve(static_cast<std::size_t>(m.size()));
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) data.push_back(m(r, c));
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::move(data)}};
}

inline Eigen::MatrixXd matrix_from_json(const json& j, const std::string& what) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  const auto& data = j.at("data");
  if (rows < 0 || cols < 0 || data.size() != static_cast<std::size_t>(rows * cols))
    throw DimensionError("checkpoint tensor '" + what + "' has inconsistent shape");
  Eigen::MatrixXd m(rows, cols);
  std::size_t k = 0;
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = data[k++].get<double>();
  return m;
}

inline void expect_format(const json& j, const std::string& format) {
  if (!j.contains("format") || j["format"] != format)
    throw Error("not a " + format + " checkpoint");
  if (j.value("version", 0) != kVersion)
    throw Error(format + " checkpoint version " + std::to_string(j.value("version", 0)) + " is not supported");
}

}  // namespace detail

inline json shape_to_json(const dlf::DlfShape& s) {
  return {{"feature_dim", s.feature_dim}, {"hidden_dim", s.hidden_dim}, {"time_dim", s.time_dim},
          {"attn_dim", s.attn_dim},       {"head_dim", s.head_dim},     {"out_dim", s.out_dim}};
}

inline dlf::DlfShape shape_from_json(const json& j) {
  dlf::DlfShape s;
  s.feature_dim = j.at("feature_dim");
  s.hidden_dim = j.at("hidden_dim");
  s.time_dim = j.at("time_dim");
  s.attn_dim = j.at("attn_dim");
  s.head_dim = j.at("head_dim");
  s.out_dim = j.at("out_dim");
  return s;
}

inline json tree_to_json(const dlf::HsTree& tree) {
  std::vector<int> parent, destination;
  for (const auto& n : tree.nodes) {
    parent.push_back(n.parent);
    destination.push_back(n.destination);
  }
  return {{"n_destinations", tree.n_destinations()}, {"parent", parent}, {"destination", destination}};
}

inline dlf::HsTree tree_from_json(const json& j) {
  const auto parent = j.at("parent").get<std::vector<int>>();
  const auto destination = j.at("destination").get<std::vector<int>>();
  if (parent.size() != destination.size() || parent.empty()) throw Error("checkpoint tree arrays disagree");
  dlf::HsTree tree;
  tree.leaf_of.assign(j.at("n_destinations").get<std::size_t>(), -1);
  for (std::size_t k = 0; k < parent.size(); ++k) {
    const int p = parent[k];
    if ((k == 0) != (p < 0) || p >= static_cast<int>(k)) throw Error("checkpoint tree is not stored parents-first");
    dlf::HsTree::Node node;
    node.parent = p;
    node.depth = p < 0 ? 0 : tree.nodes[static_cast<std::size_t>(p)].depth + 1;
    node.destination = destination[k];
    if (p >= 0) tree.nodes[static_cast<std::size_t>(p)].children.push_back(static_cast<int>(k));
    if (node.destination >= 0) {
      if (static_cast<std::size_t>(node.destination) >= tree.leaf_of.size())
        throw Error("checkpoint tree leaf out of range");
      tree.leaf_of[static_cast<std::size_t>(node.destination)] = static_cast<int>(k);
    }
    tree.nodes.push_back(std::move(node));
  }
  tree.validate();
  return tree;
}

inline json params_to_json(const dlf::DlfParams& p) {
  json tensors = json::object();
  p.visit([&](const char* name, const auto& t) {
    Eigen::MatrixXd m = t;
    tensors[name] = detail::matrix_to_json(m);
  });
  return {{"shape", shape_to_json(p.shape)},
          {"time_learnable", p.time_learnable},
          {"tensors", std::move(tensors)},
          {"tree", tree_to_json(p.tree)}};
}

inline dlf::DlfParams params_from_json(const json& j) {
  dlf::DlfParams p;
  p.shape = shape_from_json(j.at("shape"));
  p.time_learnable = j.at("time_learnable");
  p.tree = tree_from_json(j.at("tree"));
  const auto& tensors = j.at("tensors");
  const auto& s = p.shape;
  const auto tree_n = static_cast<Eigen::Index>(p.tree.size());
  const auto dims = [&](const std::string& name) -> std::pair<Eigen::Index, Eigen::Index> {
    auto e = [](std::size_t v) { return static_cast<Eigen::Index>(v); };
    if (name == "w_node") return {e(s.feature_dim), e(s.hidden_dim)};
    if (name == "b_node") return {e(s.hidden_dim), 1};
    if (name == "w_query" || name == "w_key" || name == "w_value") return {e(s.row_dim()), e(s.attn_dim)};
    if (name == "w_head") return {e(s.attn_dim + s.feature_dim), e(s.head_dim)};
    if (name == "b_head") return {e(s.head_dim), 1};
    if (name == "w_out") return {e(s.head_dim), e(s.out_dim)};
    if (name == "b_out") return {e(s.out_dim), 1};
    if (name == "time_frequency" || name == "time_phase") return {e(s.time_dim), 1};
    if (name == "tree_weight") return {tree_n, e(s.out_dim)};
    return {tree_n, 1};  // tree_bias
  };
  p.visit([&](const char* name, auto& t) {
    if (!tensors.contains(name)) throw Error(std::string("checkpoint is missing tensor '") + name + "'");
    const Eigen::MatrixXd m = detail::matrix_from_json(tensors.at(name), name);
    const auto [rows, cols] = dims(name);
    if (m.rows() != rows || m.cols() != cols)
      throw DimensionError(std::string("checkpoint tensor '") + name + "' does not match the declared shape");
    t = m;
  });
  if (!p.all_finite()) throw Error("checkpoint holds non-finite parameters");
  return p;
}

inline json embedding_to_json(const embeddings::StructuralEmbedding& e) {
  json j = detail::matrix_to_json(e.features);
  j["method"] = e.method;
  j["warmup_months"] = e.warmup_months;
  return j;
}

inline embeddings::StructuralEmbedding embedding_from_json(const json& j) {
  embeddings::StructuralEmbedding e;
  e.features = detail::matrix_from_json(j, "embedding");
  e.method = j.value("method", "");
  e.warmup_months = j.value("warmup_months", std::size_t{0});
  e.isolated.assign(static_cast<std::size_t>(e.features.rows()), false);
  return e;
}

struct DlfCheckpoint {
  dlf::DlfParams params;
  embeddings::StructuralEmbedding embedding;
  json config = json::object();
  json training = json::object();
};

inline json to_json(const DlfCheckpoint& c) {
  json j;
  j["format"] = "flowcast.dlf";
  j["version"] = kVersion;
  const json params = params_to_json(c.params);
  for (auto& [k, v] : params.items()) j[k] = v;
  j["embedding"] = embedding_to_json(c.embedding);
  j["config"] = c.config;
  j["training"] = c.training;
  return j;
}

inline DlfCheckpoint dlf_from_json(const json& j) {
  detail::expect_format(j, "flowcast.dlf");
  DlfCheckpoint c;
  c.params = params_from_json(j);
  c.embedding = embedding_from_json(j.at("embedding"));
  if (c.embedding.dim() != c.params.shape.feature_dim)
    throw DimensionError("checkpoint embedding width differs from the model's feature width");
  c.config = j.value("config", json::object());
  c.training = j.value("training", json::object());
  return c;
}

struct GbdtCheckpoint {
  volume::GbdtModel model;
  json config = json::object();
};

inline json to_json(const GbdtCheckpoint& c) {
  json j;
  j["format"] = "flowcast.gbdt";
  j["version"] = kVersion;
  j["base"] = c.model.base;
  j["learning_rate"] = c.model.learning_rate;
  j["max_depth"] = c.model.max_depth;
  j["n_features"] = c.model.n_features;
  json trees = json::array();
  for (const auto& t : c.model.trees) {
    json jt = {{"feature", json::array()}, {"threshold", json::array()}, {"left", json::array()},
               {"right", json::array()},   {"value", json::array()},     {"depth", json::array()}};
    for (const auto& n : t.nodes) {
      jt["feature"].push_back(n.feature);
      jt["threshold"].push_back(n.threshold);
      jt["left"].push_back(n.left);
      jt["right"].push_back(n.right);
      jt["value"].push_back(n.value);
      jt["depth"].push_back(n.depth);
    }
    trees.push_back(std::move(jt));
  }
  j["trees"] = std::move(trees);
  j["config"] = c.config;
  return j;
}

inline GbdtCheckpoint gbdt_from_json(const json& j) {
  detail::expect_format(j, "flowcast.gbdt");
  GbdtCheckpoint c;
  auto& m = c.model;
  m.base = j.at("base");
  m.learning_rate = j.at("learning_rate");
  m.max_depth = j.at("max_depth");
  m.n_features = j.at("n_features");
  for (const auto& jt : j.at("trees")) {
    volume::RegressionTree t;
    const std::size_t n = jt.at("feature").size();
    for (const char* key : {"threshold", "left", "right", "value", "depth"})
      if (jt.at(key).size() != n) throw Error("gbdt checkpoint tree arrays disagree");
    for (std::size_t k = 0; k < n; ++k) {
      volume::RegressionTree::Node node;
      node.feature = jt["feature"][k];
      node.threshold = jt["threshold"][k];
      node.left = jt["left"][k];
      node.right = jt["right"][k];
      node.value = jt["value"][k];
      node.depth = jt["depth"][k];
      const auto limit = static_cast<int>(n);
      if (node.feature >= static_cast<int>(m.n_features) ||
          (node.feature >= 0 && (node.left <= static_cast<int>(k) || node.right <= static_cast<int>(k) ||
                                 node.left >= limit || node.right >= limit)))
        throw Error("gbdt checkpoint tree is malformed");
      t.nodes.push_back(node);
    }
    if (t.nodes.empty()) throw Error("gbdt checkpoint holds an empty tree");
    m.trees.push_back(std::move(t));
  }
  c.config = j.value("config", json::object());
  return c;
}

}  // namespace flowcast::checkpoint
