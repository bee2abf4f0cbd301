#pragma once

// Flat key = value run configuration with dotted keys (`dlf.lr = 0.001`).
// Unknown keys and malformed values are rejected.

#include <algorithm>
#include <istream>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "flowcast/csv.hpp"
#include "flowcast/dlf/train.hpp"
#include "flowcast/embeddings.hpp"
#include "flowcast/error.hpp"
#include "flowcast/graph_core.hpp"
#include "flowcast/synth.hpp"
#include "flowcast/volume.hpp"

namespace flowcast {

enum class KeyType { integer, real, boolean, text, real_list, choice };

struct KeySpec {
  std::string_view key;
  KeyType type;
  std::string_view fallback;
  std::string_view choices = {};  // '|'-separated for KeyType::choice
  std::string_view help = {};
};

namespace detail {

inline std::vector<std::string> split_plain(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    out.emplace_back(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) return out;
    start = pos + 1;
  }
}

}  // namespace detail

// clang-format off
inline const std::vector<KeySpec>& config_keys() {
  static const std::vector<KeySpec> keys = {
      {"seed", KeyType::integer, "0", {}, "root seed for every random stream"},
      {"ingest.min_activity", KeyType::integer, "0", {}, "drop nodes with fewer transactions"},
      {"ingest.from", KeyType::text, "", {}, "first timestamp kept (epoch or YYYY-MM-DD)"},
      {"ingest.to", KeyType::text, "", {}, "first timestamp dropped (epoch or YYYY-MM-DD)"},
      {"ingest.allow_self_loops", KeyType::boolean, "false"},
      {"features.scheme", KeyType::choice, "standard", "standard|log_amount"},
      {"embed.dim", KeyType::integer, "32"},
      {"embed.tau", KeyType::real_list, "0.25,0.5,1"},
      {"embed.order", KeyType::integer, "20"},
      {"embed.top_m", KeyType::integer, "8"},
      {"embed.warmup_months", KeyType::integer, "3"},
      {"embed.path", KeyType::text, "", {}, "load embeddings from CSV instead of computing them"},
      {"time.dim", KeyType::integer, "16"},
      {"time.learnable", KeyType::boolean, "true"},
      {"dlf.lr", KeyType::real, "0.001"},
      {"dlf.epochs", KeyType::integer, "50"},
      {"dlf.batch_size", KeyType::integer, "256"},
      {"dlf.max_neighbors", KeyType::integer, "100"},
      {"dlf.mix", KeyType::real, "0.8"},
      {"dlf.test_fraction", KeyType::real, "0.2"},
      {"dlf.min_test", KeyType::integer, "2"},
      {"dlf.tree_depth", KeyType::integer, "3"},
      {"dlf.branching", KeyType::integer, "0", {}, "0 selects ceil(N^(1/3))"},
      {"dlf.objective", KeyType::choice, "path_cross_entropy", "path_cross_entropy|bce"},
      {"dlf.optimizer", KeyType::choice, "sgd", "sgd|adam"},
      {"dlf.hidden_dim", KeyType::integer, "32"},
      {"dlf.attn_dim", KeyType::integer, "64"},
      {"dlf.head_dim", KeyType::integer, "64"},
      {"dlf.out_dim", KeyType::integer, "32"},
      {"dlf.grad_chunks", KeyType::integer, "8"},
      {"gbdt.lr", KeyType::real, "0.0001"},
      {"gbdt.n_estimators", KeyType::integer, "20000"},
      {"gbdt.max_depth", KeyType::integer, "4"},
      {"baseline.averaging", KeyType::choice, "average_then_renormalize", "average_then_renormalize|pooled_weights"},
      {"eval.threshold", KeyType::real, "0.0001"},
      {"eval.full_support", KeyType::boolean, "false"},
      {"synth.n_nodes", KeyType::integer, "150"},
      {"synth.n_months", KeyType::integer, "24"},
      {"synth.n_communities", KeyType::integer, "3"},
      {"synth.core_size", KeyType::integer, "4"},
      {"synth.churn", KeyType::real, "0.1"},
      {"synth.target_persistence", KeyType::real, "-1", {}, "negative: use synth.churn"},
      {"synth.locality", KeyType::real, "0.9"},
      {"synth.popularity_skew", KeyType::real, "1.5"},
      {"synth.new_edge_rate", KeyType::real, "1"},
      {"synth.dominant_share", KeyType::real, "0.8"},
      {"synth.signal_low", KeyType::real, "0.02"},
      {"synth.signal_high", KeyType::real, "0.25"},
      {"synth.volume_sigma", KeyType::real, "0.3"},
      {"synth.start", KeyType::text, "2019-04-01"},
  };
  return keys;
}
// clang-format on

class Config {
 public:
  Config() {
    for (const auto& k : config_keys()) values_[std::string(k.key)] = std::string(k.fallback);
  }

  static const KeySpec& spec(std::string_view key) {
    for (const auto& k : config_keys())
      if (k.key == key) return k;
    throw ConfigError("unknown config key '" + std::string(key) + "'");
  }

  void set(std::string_view key, std::string_view value) {
    const auto& s = spec(key);
    const std::string v(csv::trim(value));
    check(s, v);
    values_[std::string(key)] = v;
  }

  /// Reads `key = value` lines; '#' starts a comment.
  void load(std::istream& in, const std::string& source = "config") {
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
      const std::string body(csv::trim(line));
      if (body.empty()) continue;
      const auto eq = body.find('=');
      if (eq == std::string::npos)
        throw ConfigError(source + ":" + std::to_string(line_no) + ": expected 'key = value'");
      try {
        set(csv::trim(std::string_view(body).substr(0, eq)), std::string_view(body).substr(eq + 1));
      } catch (const ConfigError& e) {
        throw ConfigError(source + ":" + std::to_string(line_no) + ": " + e.what());
      }
    }
  }

  const std::string& text(std::string_view key) const {
    spec(key);
    return values_.at(std::string(key));
  }

  double real(std::string_view key) const { return *csv::parse_double(text(key)); }

  std::int64_t integer(std::string_view key) const { return *csv::parse_int<std::int64_t>(text(key)); }

  std::size_t count(std::string_view key) const {
    const auto v = integer(key);
    if (v < 0) throw ConfigError(std::string(key) + " must be non-negative");
    return static_cast<std::size_t>(v);
  }

  bool flag(std::string_view key) const { return text(key) == "true" || text(key) == "1"; }

  std::vector<double> reals(std::string_view key) const {
    std::vector<double> out;
    for (const auto& part : detail::split_plain(text(key), ',')) out.push_back(*csv::parse_double(csv::trim(part)));
    return out;
  }

  std::uint64_t seed() const { return static_cast<std::uint64_t>(integer("seed")); }

  /// Every key with its effective value, in registry order.
  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j = nlohmann::ordered_json::object();
    for (const auto& k : config_keys()) j[std::string(k.key)] = values_.at(std::string(k.key));
    return j;
  }

  /// Inverse of to_json; keys missing from `j` keep their defaults.
  static Config from_json(const nlohmann::ordered_json& j) {
    Config c;
    for (const auto& [k, v] : j.items()) c.set(k, v.get<std::string>());
    return c;
  }

 private:
  static void check(const KeySpec& s, const std::string& v) {
    auto bad = [&](const char* what) {
      return ConfigError("config key '" + std::string(s.key) + "': '" + v + "' is not " + what);
    };
    switch (s.type) {
      case KeyType::integer:
        if (!csv::parse_int<std::int64_t>(v)) throw bad("an integer");
        break;
      case KeyType::real:
        if (!csv::parse_double(v)) throw bad("a number");
        break;
      case KeyType::boolean:
        if (v != "true" && v != "false" && v != "1" && v != "0") throw bad("a boolean");
        break;
      case KeyType::real_list: {
        const auto parts = detail::split_plain(v, ',');
        for (const auto& p : parts)
          if (!csv::parse_double(csv::trim(p))) throw bad("a list of numbers");
        break;
      }
      case KeyType::choice: {
        const auto options = detail::split_plain(s.choices, '|');
        if (std::find(options.begin(), options.end(), v) == options.end())
          throw bad(("one of " + std::string(s.choices)).c_str());
        break;
      }
      case KeyType::text:
        break;
    }
  }

  std::map<std::string, std::string> values_;
};

// ---------------------------------------------------------------------------
// Typed views

inline IngestConfig ingest_config(const Config& c) {
  IngestConfig cfg;
  cfg.min_activity = c.count("ingest.min_activity");
  auto bound = [&](const char* key) -> std::optional<Timestamp> {
    const auto& v = c.text(key);
    if (v.empty()) return std::nullopt;
    auto ts = parse_timestamp(v);
    if (!ts) throw ConfigError(std::string(key) + ": cannot parse timestamp '" + v + "'");
    return ts;
  };
  cfg.from = bound("ingest.from");
  cfg.to = bound("ingest.to");
  cfg.allow_self_loops = c.flag("ingest.allow_self_loops");
  return cfg;
}

inline EdgeFeatureScheme feature_scheme(const Config& c) {
  return c.text("features.scheme") == "log_amount" ? EdgeFeatureScheme::log_amount : EdgeFeatureScheme::standard;
}

inline embeddings::EmbedConfig embed_config(const Config& c) {
  embeddings::EmbedConfig cfg;
  cfg.dim = c.count("embed.dim");
  cfg.taus = c.reals("embed.tau");
  cfg.taylor_order = static_cast<int>(c.integer("embed.order"));
  cfg.top_m = c.count("embed.top_m");
  cfg.warmup_months = c.count("embed.warmup_months");
  return cfg;
}

inline dlf::TrainConfig train_config(const Config& c) {
  dlf::TrainConfig cfg;
  cfg.learning_rate = c.real("dlf.lr");
  cfg.epochs = c.count("dlf.epochs");
  cfg.batch_size = c.count("dlf.batch_size");
  cfg.max_neighbors = c.count("dlf.max_neighbors");
  cfg.mix = c.real("dlf.mix");
  cfg.seed = c.seed();
  cfg.test_fraction = c.real("dlf.test_fraction");
  cfg.min_test_snapshots = c.count("dlf.min_test");
  cfg.warmup_months = c.count("embed.warmup_months");
  cfg.tree_depth = static_cast<int>(c.integer("dlf.tree_depth"));
  cfg.branching = c.count("dlf.branching");
  cfg.objective =
      c.text("dlf.objective") == "bce" ? dlf::Objective::bce : dlf::Objective::path_cross_entropy;
  cfg.optimizer = c.text("dlf.optimizer") == "adam" ? dlf::Optimizer::adam : dlf::Optimizer::sgd;
  cfg.shape.hidden_dim = c.count("dlf.hidden_dim");
  cfg.shape.time_dim = c.count("time.dim");
  cfg.shape.attn_dim = c.count("dlf.attn_dim");
  cfg.shape.head_dim = c.count("dlf.head_dim");
  cfg.shape.out_dim = c.count("dlf.out_dim");
  cfg.time_learnable = c.flag("time.learnable");
  cfg.grad_chunks = std::max<std::size_t>(c.count("dlf.grad_chunks"), 1);
  return cfg;
}

inline volume::GbdtConfig gbdt_config(const Config& c) {
  volume::GbdtConfig cfg;
  cfg.learning_rate = c.real("gbdt.lr");
  cfg.n_estimators = c.count("gbdt.n_estimators");
  cfg.max_depth = c.count("gbdt.max_depth");
  cfg.seed = c.seed();
  return cfg;
}

inline synth::SynthConfig synth_config(const Config& c) {
  synth::SynthConfig cfg;
  cfg.n_nodes = c.count("synth.n_nodes");
  cfg.n_months = c.count("synth.n_months");
  cfg.n_communities = c.count("synth.n_communities");
  cfg.core_size = c.count("synth.core_size");
  cfg.churn = c.real("synth.churn");
  cfg.target_persistence = c.real("synth.target_persistence");
  cfg.locality = c.real("synth.locality");
  cfg.popularity_skew = c.real("synth.popularity_skew");
  cfg.new_edge_rate = c.real("synth.new_edge_rate");
  cfg.dominant_share = c.real("synth.dominant_share");
  cfg.signal_low = c.real("synth.signal_low");
  cfg.signal_high = c.real("synth.signal_high");
  cfg.volume_sigma = c.real("synth.volume_sigma");
  auto start = parse_timestamp(c.text("synth.start"));
  if (!start) throw ConfigError("synth.start: cannot parse '" + c.text("synth.start") + "'");
  cfg.start_month = month_of(*start);
  cfg.seed = c.seed();
  return cfg;
}

}  // namespace flowcast
