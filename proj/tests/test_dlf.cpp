#include <gtest/gtest.h>

#include "support.hpp"

using namespace fctest;
using namespace flowcast::dlf;

namespace {

NeighborEvent event(NodeId j, std::size_t snapshot, Timestamp time, double amount) {
  return {j, snapshot, time, amount, {1.0, 0.5, 0.5, 0.5, 0.1}};
}

}  // namespace

TEST(Neighbors, RecencyOrder) {
  const auto s = sample_neighbors({event(1, 0, 10, 1), event(2, 2, 30, 1), event(3, 1, 20, 1)}, 0, 3, 100, 100);
  ASSERT_EQ(s.entries.size(), 3u);
  EXPECT_EQ(s.entries[0].neighbor, 2u);
  EXPECT_EQ(s.entries[1].neighbor, 3u);
  EXPECT_EQ(s.entries[2].neighbor, 1u);
}

TEST(Neighbors, AmountBreaksMonthTies) {
  const auto s = sample_neighbors({event(1, 0, 10, 5), event(2, 0, 5, 9)}, 0, 1, 100, 100);
  EXPECT_EQ(s.entries[0].neighbor, 2u);
}

TEST(Neighbors, TopKOfManyEvents) {
  // 150 events over 15 months, 10 per month with distinct amounts; K = 100
  // keeps the 10 most recent months in full.
  std::vector<NeighborEvent> h;
  for (std::size_t m = 0; m < 15; ++m)
    for (int a = 0; a < 10; ++a) h.push_back(event(static_cast<NodeId>(m * 10 + static_cast<std::size_t>(a)), m, static_cast<Timestamp>(m), a + 1.0));
  const auto s = sample_neighbors(h, 0, 15, 1000, 100);
  ASSERT_EQ(s.entries.size(), 100u);
  for (const auto& e : s.entries) EXPECT_GE(e.snapshot, 5u);
  EXPECT_EQ(s.entries.front().snapshot, 14u);
  EXPECT_EQ(s.entries.front().amount, 10.0);
  EXPECT_EQ(s.entries[9].amount, 1.0);
}

TEST(Neighbors, IndexMatchesFreeFunctionAndRespectsTime) {
  const auto series = random_series(10, 6, 3, 0.3);
  const TemporalIndex index(series);
  for (NodeId i = 0; i < 10; ++i)
    for (std::size_t t = 0; t <= 6; ++t) {
      const auto s = index.sample(i, t, 7);
      EXPECT_LE(s.entries.size(), 7u);
      for (const auto& e : s.entries) {
        EXPECT_LT(e.snapshot, t);
        EXPECT_LT(e.time, series.start_of(t));
      }
      EXPECT_EQ(s.cold_start(), s.entries.empty());
    }
  EXPECT_TRUE(index.sample(0, 0, 10).cold_start());
}

TEST(Forward, SingleNeighbourTakesFullAttention) {
  auto sp = small_problem(1);
  NeighborSample s{0, 5, sp.series.start_of(5), {event(2, 3, sp.series.start_of(3), 4.0)}};
  ForwardCache c;
  forward(sp.params, sp.features, s, &c);
  EXPECT_DOUBLE_EQ(c.attention(0), 1.0);
  for (Eigen::Index k = 0; k < c.context.size(); ++k) EXPECT_DOUBLE_EQ(c.context(k), c.values(0, k));
}

TEST(Forward, IdenticalNeighboursSplitEvenly) {
  auto sp = small_problem(2);
  const auto e = event(2, 3, sp.series.start_of(3), 4.0);
  NeighborSample s{0, 5, sp.series.start_of(5), {e, e}};
  ForwardCache c;
  forward(sp.params, sp.features, s, &c);
  EXPECT_DOUBLE_EQ(c.attention(0), 0.5);
  EXPECT_DOUBLE_EQ(c.attention(1), 0.5);
}

TEST(Forward, MatchesDenseOracle) {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const auto sp = small_problem(seed);
    for (const auto& ex : sp.examples) {
      const VectorXd z = forward(sp.params, sp.features, ex.sample);
      const VectorXd o = dense_forward(sp.params, sp.features, ex.sample);
      EXPECT_LT((z - o).cwiseAbs().maxCoeff(), 1e-10);
    }
  }
  const NeighborSample empty{};
  const auto sp = small_problem(1);
  EXPECT_THROW(forward(sp.params, sp.features, empty), Error);
}

TEST(Forward, NeighbourOrderDoesNotMatter) {
  const auto sp = small_problem(4);
  for (const auto& ex : sp.examples) {
    auto rev = ex.sample;
    std::reverse(rev.entries.begin(), rev.entries.end());
    ForwardCache a, b;
    forward(sp.params, sp.features, ex.sample, &a);
    forward(sp.params, sp.features, rev, &b);
    EXPECT_NEAR(a.attention.sum(), 1.0, 1e-12);
    EXPECT_LT((a.context - b.context).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Tree, FlatTreeDepthOne) {
  const auto t = flat_tree(5);
  EXPECT_EQ(t.depth(), 1);
  EXPECT_EQ(t.nodes[0].children.size(), 5u);
  MatrixXd reps = MatrixXd::Random(5, 2);
  EXPECT_EQ(build_hs_tree(reps, 1, 2, 0).nodes.size(), 6u);
}

TEST(Tree, BinaryDepthThreeOnEightPoints) {
  MatrixXd reps(8, 1);
  for (int i = 0; i < 8; ++i) reps(i, 0) = i * 10.0;
  const auto t = build_hs_tree(reps, 3, 2, 0);
  EXPECT_EQ(t.depth(), 3);
  for (std::size_t j = 0; j < 8; ++j) {
    const auto& leaf = t.nodes[static_cast<std::size_t>(t.leaf_of[j])];
    EXPECT_EQ(leaf.depth, 3);
    EXPECT_EQ(t.nodes[static_cast<std::size_t>(leaf.parent)].children.size(), 2u);
  }
}

TEST(Tree, FirstSplitSeparatesPlantedClusters) {
  Rng rng(3);
  MatrixXd reps(40, 3);
  for (int i = 0; i < 40; ++i)
    for (int c = 0; c < 3; ++c) reps(i, c) = rng.normal() + (i < 20 ? -50.0 : 50.0);
  const auto t = build_hs_tree(reps, 3, 2, 5);
  auto top = [&](int leaf) {
    while (t.nodes[static_cast<std::size_t>(leaf)].parent != 0) leaf = t.nodes[static_cast<std::size_t>(leaf)].parent;
    return leaf;
  };
  for (int i = 1; i < 20; ++i) EXPECT_EQ(top(t.leaf_of[static_cast<std::size_t>(i)]), top(t.leaf_of[0]));
  for (int i = 20; i < 40; ++i) EXPECT_NE(top(t.leaf_of[static_cast<std::size_t>(i)]), top(t.leaf_of[0]));
}

TEST(Tree, InvariantsAndErrors) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    MatrixXd reps = MatrixXd::Random(50, 4);
    reps.row(7) = reps.row(3);  // duplicates are allowed
    const auto t = build_hs_tree(reps, 3, default_branching(50), seed);
    EXPECT_NO_THROW(t.validate());
    EXPECT_LE(t.depth(), 3);
    EXPECT_EQ(t.n_destinations(), 50u);
    EXPECT_EQ(build_hs_tree(reps, 3, 4, seed).nodes.size(), build_hs_tree(reps, 3, 4, seed).nodes.size());
  }
  MatrixXd same = MatrixXd::Ones(9, 2);
  EXPECT_NO_THROW(build_hs_tree(same, 3, 3, 0).validate());
  EXPECT_THROW(build_hs_tree(same, 3, 1, 0), Error);
  EXPECT_THROW(build_hs_tree(same, 4, 2, 0), Error);
  EXPECT_EQ(default_branching(1000), 10u);
  EXPECT_EQ(default_branching(1001), 11u);
}

TEST(HSoftmax, DepthOneEqualsFlatSoftmax) {
  auto sp = small_problem(3, 6, 4, 3, 1);
  Rng rng(1);
  for (int trial = 0; trial < 100; ++trial) {
    VectorXd z(4);
    for (int k = 0; k < 4; ++k) z(k) = rng.normal(0.0, 3.0);
    const VectorXd p = hsoftmax_prob(sp.params, z);
    VectorXd scores(6);
    for (int j = 0; j < 6; ++j) {
      const int leaf = sp.params.tree.leaf_of[static_cast<std::size_t>(j)];
      scores(j) = sp.params.tree_weight.row(leaf).dot(z) + sp.params.tree_bias(leaf);
    }
    const VectorXd flat = (scores.array() - scores.maxCoeff()).exp().matrix();
    EXPECT_LT((p - flat / flat.sum()).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(HSoftmax, EqualScoresGiveEqualMass) {
  DlfShape shape;
  shape.feature_dim = 2;
  shape.out_dim = 3;
  auto p = init_params(shape, flat_tree(2), 0);
  p.tree_weight.setZero();
  const VectorXd prob = hsoftmax_prob(p, VectorXd::Ones(3));
  EXPECT_DOUBLE_EQ(prob(0), 0.5);
  EXPECT_DOUBLE_EQ(prob(1), 0.5);
}

TEST(HSoftmax, DistributionAndPathProducts) {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    MatrixXd reps = MatrixXd::Random(30, 3);
    DlfShape shape;
    shape.out_dim = 5;
    const auto p = init_params(shape, build_hs_tree(reps, 3, 3, seed), seed);
    Rng rng(seed);
    VectorXd z(5);
    for (int k = 0; k < 5; ++k) z(k) = rng.normal();
    const VectorXd q = hsoftmax_prob(p, z);
    EXPECT_NEAR(q.sum(), 1.0, 1e-9);
    EXPECT_GT(q.minCoeff(), 0.0);
    EXPECT_LT(q.maxCoeff(), 1.0);
    EXPECT_LT((q - dense_hsoftmax(p, z)).cwiseAbs().maxCoeff(), 1e-12);
    // Children of every internal node are normalised.
    const VectorXd logc = tree_log_conditionals(p, z);
    for (const auto& node : p.tree.nodes) {
      if (node.is_leaf()) continue;
      double s = 0.0;
      for (int c : node.children) s += std::exp(logc(c));
      EXPECT_NEAR(s, 1.0, 1e-9);
    }
  }
}

TEST(Loss, Examples) {
  const std::vector<SparseRow> hot = {{{1, 1.0}}};
  EXPECT_LT(loss_bce(hot, hot), 1e-10);
  const std::vector<SparseRow> truth = {{{0, 1.0}}};
  const std::vector<SparseRow> half = {{{0, 0.5}, {1, 0.5}}};
  EXPECT_NEAR(loss_bce(truth, half), 2.0 * std::log(2.0), 1e-12);
  EXPECT_NEAR(loss_bce(truth, half), 1.3863, 1e-4);
  const std::vector<SparseRow> two_t = {truth[0], {{1, 1.0}}};
  const std::vector<SparseRow> two_p = {half[0], half[0]};
  EXPECT_NEAR(loss_bce(two_t, two_p), 2.0 * std::log(2.0), 1e-12);
  EXPECT_THROW(loss_bce(std::vector<SparseRow>{}, std::vector<SparseRow>{}), Error);
}

TEST(Gradient, MatchesFiniteDifferences) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto sp = small_problem(seed);
    ASSERT_FALSE(sp.examples.empty());
    EXPECT_LT(gradient_check(sp, Objective::path_cross_entropy).worst, 1e-4) << "seed " << seed;
    EXPECT_LT(gradient_check(sp, Objective::bce).worst, 1e-4) << "seed " << seed;
  }
}

TEST(Gradient, FrozenTimeEncoderHasNoGradient) {
  auto sp = small_problem(2);
  sp.params.time_learnable = false;
  std::vector<std::size_t> batch(sp.examples.size());
  std::iota(batch.begin(), batch.end(), std::size_t{0});
  DlfParams g;
  batch_gradient(sp.params, sp.features, sp.examples, batch, Objective::path_cross_entropy, &g);
  EXPECT_EQ(g.time_frequency.cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(g.time_phase.cwiseAbs().maxCoeff(), 0.0);
}

TEST(Gradient, DuplicatedBatchAndLinearity) {
  const auto sp = small_problem(3);
  std::vector<std::size_t> once(sp.examples.size());
  std::iota(once.begin(), once.end(), std::size_t{0});
  std::vector<std::size_t> twice = once;
  twice.insert(twice.end(), once.begin(), once.end());
  DlfParams g1, g2;
  const double l1 = batch_gradient(sp.params, sp.features, sp.examples, once, Objective::path_cross_entropy, &g1, 1);
  const double l2 = batch_gradient(sp.params, sp.features, sp.examples, twice, Objective::path_cross_entropy, &g2, 1);
  EXPECT_NEAR(l1, l2, 1e-12);
  std::vector<double> a, b;
  g1.visit([&](const char*, const auto& t) { a.insert(a.end(), t.data(), t.data() + t.size()); });
  g2.visit([&](const char*, const auto& t) { b.insert(b.end(), t.data(), t.data() + t.size()); });
  for (std::size_t k = 0; k < a.size(); ++k) EXPECT_NEAR(a[k], b[k], 1e-12 * std::max(1.0, std::abs(a[k])));
}

TEST(Gradient, ZeroStepLeavesLossUnchanged) {
  const auto sp = small_problem(5);
  std::vector<std::size_t> all(sp.examples.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  DlfParams g;
  const double before = batch_gradient(sp.params, sp.features, sp.examples, all, Objective::path_cross_entropy, &g);
  auto p = sp.params;
  p.axpy(-0.0, g);
  EXPECT_EQ(batch_gradient(p, sp.features, sp.examples, all, Objective::path_cross_entropy, nullptr), before);
}

TEST(Gradient, ChunkingIsDeterministic) {
  const auto sp = small_problem(6);
  std::vector<std::size_t> all(sp.examples.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  DlfParams a, b;
  batch_gradient(sp.params, sp.features, sp.examples, all, Objective::path_cross_entropy, &a, 4);
  batch_gradient(sp.params, sp.features, sp.examples, all, Objective::path_cross_entropy, &b, 4);
  EXPECT_EQ(a.w_query, b.w_query);
  EXPECT_EQ(a.tree_weight, b.tree_weight);
}

namespace {

TrainConfig small_train_config() {
  TrainConfig cfg;
  cfg.epochs = 15;
  cfg.batch_size = 16;
  cfg.learning_rate = 0.01;
  cfg.shape.hidden_dim = 8;
  cfg.shape.time_dim = 4;
  cfg.shape.attn_dim = 8;
  cfg.shape.head_dim = 8;
  cfg.shape.out_dim = 8;
  cfg.max_neighbors = 10;
  cfg.seed = 3;
  return cfg;
}

SnapshotSeries static_series() {
  // Every node splits its outflow 0.7 / 0.3 between two fixed partners.
  std::vector<MonthEdge> e;
  for (std::size_t t = 0; t < 10; ++t)
    for (NodeId i = 0; i < 8; ++i) {
      e.push_back({t, i, static_cast<NodeId>((i + 1) % 8), 7.0});
      e.push_back({t, i, static_cast<NodeId>((i + 3) % 8), 3.0});
    }
  return series_from(8, e);
}

}  // namespace

TEST(Training, StaticRatiosAreLearned) {
  const auto s = static_series();
  const auto emb = embeddings::structural_embed(s, embeddings::EmbedConfig{});
  const TemporalIndex index(s);
  const auto r = train(s, index, emb.features, small_train_config());
  EXPECT_LT(r.loss_trace.back(), r.initial_loss);
  EXPECT_EQ(r.loss_trace.size(), 15u);
  EXPECT_EQ(r.split.train_end, 8u);
}

TEST(Training, SameSeedIsBitIdentical) {
  const auto s = random_series(10, 8, 4, 0.3);
  const auto emb = embeddings::structural_embed(s, embeddings::EmbedConfig{});
  const TemporalIndex index(s);
  auto cfg = small_train_config();
  cfg.epochs = 3;
  const auto a = train(s, index, emb.features, cfg);
  const auto b = train(s, index, emb.features, cfg);
  EXPECT_EQ(a.loss_trace, b.loss_trace);
  EXPECT_EQ(a.params.w_key, b.params.w_key);
  EXPECT_EQ(a.params.tree_weight, b.params.tree_weight);
  cfg.optimizer = Optimizer::adam;
  EXPECT_EQ(train(s, index, emb.features, cfg).params.w_head, train(s, index, emb.features, cfg).params.w_head);
}

TEST(Training, Errors) {
  const auto s = random_series(6, 4, 1);
  const auto emb = embeddings::structural_embed(s, embeddings::EmbedConfig{});
  const TemporalIndex index(s);
  auto cfg = small_train_config();
  EXPECT_THROW(train(s, index, emb.features, cfg), Error);  // needs warmup + 2
  cfg.mix = 1.5;
  const auto longer = random_series(6, 8, 1);
  const TemporalIndex index2(longer);
  EXPECT_THROW(train(longer, index2, emb.features, cfg), Error);
  cfg.mix = 0.8;
  cfg.learning_rate = 1e9;
  EXPECT_THROW(train(longer, index2, emb.features, cfg), TrainingDiverged);
}

TEST(Split, Chronological) {
  EXPECT_EQ(chronological_split(24, 0.2, 2).train_end, 19u);
  EXPECT_EQ(chronological_split(5, 0.2, 2).train_end, 3u);
  EXPECT_EQ(chronological_split(25, 0.2, 2).train_end, 20u);
  EXPECT_THROW(chronological_split(2, 0.2, 2), Error);
}

TEST(Predict, RowsAreDistributions) {
  const auto s = random_series(10, 8, 9, 0.3);
  const auto emb = embeddings::structural_embed(s, embeddings::EmbedConfig{});
  const TemporalIndex index(s);
  auto cfg = small_train_config();
  cfg.epochs = 2;
  const auto r = train(s, index, emb.features, cfg);
  for (std::size_t t = 1; t < s.size(); ++t) {
    const auto p = predict_ratios(r.params, emb.features, index, t, cfg.max_neighbors);
    for (NodeId i = 0; i < 10; ++i) {
      if (p.cold_start[i]) EXPECT_TRUE(p.ratios.row(i).empty());
      else EXPECT_NEAR(p.ratios.row_sum(i), 1.0, 1e-9);
    }
  }
}

namespace {

baselines::RatioPrediction one_row(std::size_t n, SparseRow row) {
  baselines::RatioPrediction p{SparseMatrix(n), std::vector<bool>(n, true)};
  if (!row.empty()) {
    p.ratios.set_row(0, std::move(row));
    p.cold_start[0] = false;
  }
  return p;
}

}  // namespace

TEST(Mix, Endpoints) {
  const auto model = one_row(3, {{1, 0.2}, {2, 0.8}});
  const auto hist = one_row(3, {{1, 0.6}, {2, 0.4}});
  EXPECT_EQ(mix_with_history(model, hist, 1.0).prediction.ratios.row(0)[0].value, 0.6);
  EXPECT_EQ(mix_with_history(model, hist, 0.0).prediction.ratios.row(0)[0].value, 0.2);
  EXPECT_NEAR(mix_with_history(model, hist, 0.8).prediction.ratios.at(0, 1), 0.52, 1e-15);
  EXPECT_THROW(mix_with_history(model, hist, -0.1), Error);
}

TEST(Mix, FallbacksAndCounts) {
  const auto model = one_row(3, {{1, 1.0}});
  const auto none = one_row(3, {});
  auto r = mix_with_history(model, none, 0.8);
  EXPECT_EQ(r.n_model_only, 1u);
  EXPECT_EQ(r.prediction.ratios.at(0, 1), 1.0);
  r = mix_with_history(none, model, 0.8);
  EXPECT_EQ(r.n_history_only, 1u);
  r = mix_with_history(none, none, 0.8);
  EXPECT_EQ(r.n_excluded, 3u);
  EXPECT_TRUE(r.prediction.cold_start[0]);
}

TEST(Mix, PreservesDistributions) {
  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    SparseRow a, b;
    double sa = 0, sb = 0;
    for (NodeId j = 0; j < 10; ++j) {
      if (rng.bernoulli(0.5)) a.push_back({j, rng.uniform()});
      if (rng.bernoulli(0.5)) b.push_back({j, rng.uniform()});
    }
    if (a.empty()) a.push_back({3, 1.0});
    if (b.empty()) b.push_back({4, 1.0});
    for (auto& e : a) sa += e.value;
    for (auto& e : b) sb += e.value;
    for (auto& e : a) e.value /= sa;
    for (auto& e : b) e.value /= sb;
    const double lambda = rng.uniform();
    const auto r = mix_with_history(one_row(10, a), one_row(10, b), lambda);
    EXPECT_NEAR(r.prediction.ratios.row_sum(0), 1.0, 1e-9);
  }
}

TEST(Predict, NoLeakage) {
  auto sp = small_problem(12);
  const auto base = sp.series;
  for (std::size_t t = 3; t < 6; ++t) {
    std::vector<MonthEdge> edges;
    for (std::size_t u = 0; u < t; ++u)
      for (NodeId i = 0; i < base.n_nodes(); ++i)
        for (const auto& e : base[u].adjacency.row(i)) edges.push_back({u, i, e.col, e.value});
    auto altered = edges;
    altered.push_back({t, 0, 1, 1e9});
    altered.push_back({5, 2, 3, 7.0});
    const auto a = series_from(base.n_nodes(), edges, 6);
    const auto b = series_from(base.n_nodes(), altered, 6);
    const dlf::TemporalIndex ia(a), ib(b), ifull(base);
    const auto pa = dlf::predict_ratios(sp.params, sp.features, ia, t, 3);
    EXPECT_EQ(pa.ratios, dlf::predict_ratios(sp.params, sp.features, ib, t, 3).ratios);
    EXPECT_EQ(pa.ratios, dlf::predict_ratios(sp.params, sp.features, ifull, t, 3).ratios);
  }
}
