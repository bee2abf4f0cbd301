#pragma once

// Synthetic transfer networks with planted structure.
//
// Nodes are split into communities of unequal size. Every sender pays a fixed
// set of core partners inside its community plus one signal partner. The
// split across the core partners follows one of two regimes, and the regime
// in force at month t is announced by the amount paid to the signal partner
// at month t-1 (small for regime 0, large for regime 1). A churn knob removes
// core edges at random and adds short-lived edges, mostly inside the
// community. Volumes are log-normal with a per-community scale.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "flowcast/csv.hpp"
#include "flowcast/error.hpp"
#include "flowcast/graph_core.hpp"
#include "flowcast/netstats.hpp"
#include "flowcast/rng.hpp"

namespace flowcast::synth {

struct SynthConfig {
  std::size_t n_nodes = 150;
  std::size_t n_months = 24;
  std::size_t n_communities = 3;
  std::size_t core_size = 4;
  double churn = 0.1;                // probability a core edge is skipped; scales new-edge rate
  double target_persistence = -1.0;  // < 0: use `churn` as given
  double persistence_tolerance = 0.01;
  double locality = 0.9;             // share of new edges that stay in the community
  double popularity_skew = 1.5;      // Zipf exponent over members for new in-community edges
  double new_edge_rate = 1.0;        // expected new edges per sender-month, per unit of churn
  double dominant_share = 0.8;       // core mass on the regime's favourite partner
  double signal_low = 0.02;          // signal partner share announcing regime 0
  double signal_high = 0.25;         // ... and regime 1
  double volume_sigma = 0.3;
  MonthIndex start_month = 2019 * 12 + 3;  // April 2019
  std::uint64_t seed = 0;
};

struct Community {
  std::vector<NodeId> members;
  std::vector<NodeId> core;  // shared core partners
  std::vector<NodeId> by_popularity;  // members, most likely new-edge target first
  std::vector<double> popularity_cdf;
  double log_scale = 0.0;
};

struct GroundTruth {
  SynthConfig config;
  double churn = 0.0;  // effective churn after solving for the persistence target
  std::vector<Community> communities;
  std::vector<std::size_t> community_of;
  std::vector<NodeId> signal_partner;
  std::vector<std::vector<int>> regime;  // [node][month]: regime announced at that month
  double persistence = 0.0;              // measured on the emitted network
};

struct SynthResult {
  std::vector<std::string> labels;
  std::vector<TemporalEdge> edges;  // ids index `labels`
  GroundTruth truth;
};

namespace detail {

inline std::string node_label(std::size_t i, std::size_t n) {
  std::size_t width = 3;
  for (std::size_t m = 1000; m <= n - 1 && n > 1; m *= 10) ++width;
  std::string s = std::to_string(i);
  return "n" + std::string(width > s.size() ? width - s.size() : 0, '0') + s;
}

/// Regime mixture over the community's core partners.
inline std::vector<double> core_shares(std::size_t core_size, int regime, double dominant) {
  std::vector<double> w(core_size, (1.0 - dominant) / static_cast<double>(core_size - 1));
  w[static_cast<std::size_t>(regime) % core_size] = dominant;
  return w;
}

inline SynthResult generate_fixed(const SynthConfig& cfg, double churn) {
  const std::size_t n = cfg.n_nodes;
  SynthResult out;
  auto& truth = out.truth;
  truth.config = cfg;
  truth.churn = churn;
  for (std::size_t i = 0; i < n; ++i) out.labels.push_back(node_label(i, n));

  // Structure draws come from their own stream so the planted layout does not
  // depend on the churn level.
  Rng layout = Rng::stream(cfg.seed, "synth.layout");
  std::vector<NodeId> perm(n);
  for (std::size_t i = 0; i < n; ++i) perm[i] = static_cast<NodeId>(i);
  layout.shuffle(perm);
  // Community c gets a share proportional to c + 1.
  const std::size_t c_count = cfg.n_communities;
  const double weight_total = static_cast<double>(c_count * (c_count + 1)) / 2.0;
  truth.communities.resize(c_count);
  truth.community_of.assign(n, 0);
  std::size_t cursor = 0;
  for (std::size_t c = 0; c < c_count; ++c) {
    std::size_t size = c + 1 == c_count
                           ? n - cursor
                           : static_cast<std::size_t>(std::llround(static_cast<double>(n) *
                                                                   static_cast<double>(c + 1) / weight_total));
    auto& com = truth.communities[c];
    com.members.assign(perm.begin() + static_cast<std::ptrdiff_t>(cursor),
                       perm.begin() + static_cast<std::ptrdiff_t>(cursor + size));
    std::sort(com.members.begin(), com.members.end());
    for (NodeId m : com.members) truth.community_of[m] = c;
    cursor += size;
    com.core.assign(com.members.begin(), com.members.begin() + static_cast<std::ptrdiff_t>(cfg.core_size));
    com.log_scale = 4.0 + 3.0 * static_cast<double>(c);
    com.by_popularity = com.members;
    layout.shuffle(com.by_popularity);
    double acc = 0.0;
    for (std::size_t r = 0; r < size; ++r) {
      acc += std::pow(static_cast<double>(r + 1), -cfg.popularity_skew);
      com.popularity_cdf.push_back(acc);
    }
    for (double& v : com.popularity_cdf) v /= acc;
  }
  truth.signal_partner.resize(n);
  for (NodeId i = 0; i < n; ++i) {
    const auto& com = truth.communities[truth.community_of[i]];
    NodeId s;
    do {
      s = com.members[static_cast<std::size_t>(layout.below(com.members.size()))];
    } while (s == i || std::find(com.core.begin(), com.core.end(), s) != com.core.end());
    truth.signal_partner[i] = s;
  }

  // Monthly activity. Every random draw is consumed whatever the churn level,
  // so networks for different churn values share their randomness.
  Rng rng = Rng::stream(cfg.seed, "synth");
  const std::size_t max_new = 2 * cfg.core_size;
  const double new_rate = std::min(1.0, churn * cfg.new_edge_rate / static_cast<double>(max_new));
  truth.regime.assign(n, std::vector<int>(cfg.n_months, 0));
  for (std::size_t t = 0; t < cfg.n_months; ++t) {
    const Timestamp begin = month_start(cfg.start_month + static_cast<MonthIndex>(t));
    const Timestamp end = month_start(cfg.start_month + static_cast<MonthIndex>(t) + 1);
    auto when = [&] { return begin + static_cast<Timestamp>(rng.below(static_cast<std::uint64_t>(end - begin))); };
    for (NodeId i = 0; i < n; ++i) {
      const auto& com = truth.communities[truth.community_of[i]];
      const int announced = rng.bernoulli(0.5) ? 1 : 0;
      truth.regime[i][t] = announced;
      const int active = t == 0 ? announced : truth.regime[i][t - 1];
      const double volume = rng.lognormal(com.log_scale, cfg.volume_sigma);

      struct Draft {
        NodeId dst;
        double share;
        Timestamp ts;
      };
      std::vector<Draft> drafts;
      const double signal = announced ? cfg.signal_high : cfg.signal_low;
      drafts.push_back({truth.signal_partner[i], signal, when()});
      const auto shares = core_shares(cfg.core_size, active, cfg.dominant_share);
      for (std::size_t k = 0; k < cfg.core_size; ++k) {
        const double u = rng.uniform();
        const Timestamp ts = when();
        if (com.core[k] == i || u < churn) continue;
        drafts.push_back({com.core[k], (1.0 - signal) * shares[k], ts});
      }
      for (std::size_t k = 0; k < max_new; ++k) {
        const double u = rng.uniform();
        const bool local = rng.bernoulli(cfg.locality);
        const double pick = rng.uniform();
        const NodeId dst = local ? com.by_popularity[static_cast<std::size_t>(
                                       std::lower_bound(com.popularity_cdf.begin(), com.popularity_cdf.end() - 1, pick) -
                                       com.popularity_cdf.begin())]
                                 : static_cast<NodeId>(rng.below(n));
        const double share = rng.uniform(0.1, 0.2);
        const Timestamp ts = when();
        if (u >= new_rate || dst == i) continue;
        drafts.push_back({dst, share, ts});
      }
      for (const auto& d : drafts) out.edges.push_back({i, d.dst, d.ts, volume * d.share});
    }
  }
  std::stable_sort(out.edges.begin(), out.edges.end(),
                   [](const TemporalEdge& a, const TemporalEdge& b) { return a.timestamp < b.timestamp; });
  const auto series = build_snapshots(out.edges, NodeUniverse(out.labels));
  truth.persistence = netstats::summarize(series).avg_edge_persistence;
  return out;
}

}  // namespace detail

inline void validate(const SynthConfig& cfg) {
  if (cfg.n_nodes < 10) throw ConfigError("synth: n_nodes must be >= 10");
  if (cfg.n_months < 6) throw ConfigError("synth: n_months must be >= 6");
  if (cfg.n_communities < 1) throw ConfigError("synth: need at least one community");
  if (cfg.core_size < 2) throw ConfigError("synth: core_size must be >= 2");
  const double share = static_cast<double>(cfg.n_nodes) / static_cast<double>(cfg.n_communities * (cfg.n_communities + 1) / 2);
  if (share < static_cast<double>(cfg.core_size + 2))
    throw ConfigError("synth: smallest community is too small for core_size + signal partner");
  if (cfg.churn < 0.0 || cfg.churn > 1.0) throw ConfigError("synth: churn must be in [0, 1]");
  if (cfg.locality < 0.0 || cfg.locality > 1.0) throw ConfigError("synth: locality must be in [0, 1]");
  if (cfg.popularity_skew < 0.0) throw ConfigError("synth: popularity_skew must be >= 0");
  if (cfg.new_edge_rate < 0.0) throw ConfigError("synth: new_edge_rate must be >= 0");
  if (!(cfg.dominant_share > 0.0 && cfg.dominant_share < 1.0)) throw ConfigError("synth: dominant_share must be in (0, 1)");
}

/// Generates a network. With a persistence target the churn level is found
/// by bisection; targets outside the reachable range are rejected.
inline SynthResult generate(const SynthConfig& cfg) {
  validate(cfg);
  if (cfg.target_persistence < 0.0) return detail::generate_fixed(cfg, cfg.churn);
  const double target = cfg.target_persistence;
  const double tol = cfg.persistence_tolerance;
  if (target > 1.0) throw Error("synth: persistence target above 1 is infeasible");
  auto lo = detail::generate_fixed(cfg, 0.0);  // persistence 1
  if (std::abs(lo.truth.persistence - target) <= tol) return lo;
  auto hi = detail::generate_fixed(cfg, 1.0);
  if (target < hi.truth.persistence - tol) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "synth: persistence target %.4f is infeasible (lowest reachable %.4f)", target,
                  hi.truth.persistence);
    throw Error(buf);
  }
  double a = 0.0, b = 1.0;
  SynthResult best = std::move(hi);
  for (int iter = 0; iter < 60; ++iter) {
    const double mid = 0.5 * (a + b);
    auto r = detail::generate_fixed(cfg, mid);
    if (std::abs(r.truth.persistence - target) < std::abs(best.truth.persistence - target)) best = r;
    if (std::abs(r.truth.persistence - target) <= tol) return r;
    if (r.truth.persistence > target) a = mid;
    else b = mid;
  }
  if (std::abs(best.truth.persistence - target) <= tol) return best;
  char buf[160];
  std::snprintf(buf, sizeof buf, "synth: could not reach persistence %.4f (closest %.4f)", target,
                best.truth.persistence);
  throw Error(buf);
}

inline void write_edges_csv(std::ostream& out, const SynthResult& r) {
  out << kEdgeCsvHeader << '\n';
  for (const auto& e : r.edges)
    out << r.labels[e.src] << ',' << r.labels[e.dst] << ',' << e.timestamp << ',' << csv::format_double(e.amount)
        << '\n';
}

inline nlohmann::ordered_json to_json(const GroundTruth& g, const std::vector<std::string>& labels) {
  nlohmann::ordered_json j;
  const auto& c = g.config;
  j["config"] = {{"n_nodes", c.n_nodes},         {"n_months", c.n_months},
                 {"n_communities", c.n_communities}, {"core_size", c.core_size},
                 {"churn", c.churn},             {"target_persistence", c.target_persistence},
                 {"locality", c.locality},       {"popularity_skew", c.popularity_skew},
                 {"new_edge_rate", c.new_edge_rate},
                 {"dominant_share", c.dominant_share},
                 {"signal_low", c.signal_low},   {"signal_high", c.signal_high},
                 {"volume_sigma", c.volume_sigma}, {"start_month", month_label(c.start_month)},
                 {"seed", c.seed}};
  j["effective_churn"] = g.churn;
  j["persistence"] = g.persistence;
  auto names = [&](const std::vector<NodeId>& ids) {
    std::vector<std::string> v;
    for (NodeId i : ids) v.push_back(labels[i]);
    return v;
  };
  j["communities"] = nlohmann::ordered_json::array();
  for (const auto& com : g.communities)
    j["communities"].push_back({{"members", names(com.members)},
                                {"core", names(com.core)},
                                {"by_popularity", names(com.by_popularity)},
                                {"log_scale", com.log_scale}});
  nlohmann::ordered_json nodes = nlohmann::ordered_json::object();
  for (std::size_t i = 0; i < labels.size(); ++i)
    nodes[labels[i]] = {{"community", g.community_of[i]},
                        {"signal_partner", labels[g.signal_partner[i]]},
                        {"regime", g.regime[i]}};
  j["nodes"] = std::move(nodes);
  return j;
}

}  // namespace flowcast::synth
