#include <gtest/gtest.h>

#include <sstream>

#include "support.hpp"

using namespace fctest;

namespace {

IngestResult ingest_text(const std::string& text, const IngestConfig& cfg = {}) {
  std::istringstream in(text);
  return ingest_edges(in, cfg);
}

}  // namespace

TEST(Ingest, ThreeValidRowsPassThrough) {
  const auto r = ingest_text("src,dst,timestamp,amount\na,b,2019-04-02,1\nb,c,2019-04-03,2\na,c,2019-04-04,3\n");
  EXPECT_EQ(r.edges.size(), 3u);
  EXPECT_EQ(r.universe.size(), 3u);
  EXPECT_EQ(r.universe.label(0), "a");
  EXPECT_EQ(r.edges[0].src, 0u);
  EXPECT_EQ(r.edges[0].dst, 1u);
  EXPECT_EQ(r.drops.total_dropped(), 0u);
}

TEST(Ingest, NegativeAmountIsReported) {
  const auto r = ingest_text("src,dst,timestamp,amount\na,b,2019-04-02,-5\na,c,2019-04-02,4\n");
  EXPECT_EQ(r.edges.size(), 1u);
  EXPECT_EQ(r.drops.non_positive_amount, 1u);
  ASSERT_EQ(r.drops.rejected.size(), 1u);
  EXPECT_EQ(r.drops.rejected[0].line, 2u);
}

TEST(Ingest, MinActivityRemovesRareNodes) {
  // Activity: a=4, b=3, c=2, d=1 (hand count over 5 rows).
  const std::string text =
      "src,dst,timestamp,amount\n"
      "a,b,2019-04-01,1\n"
      "b,a,2019-04-02,1\n"
      "a,c,2019-04-03,1\n"
      "c,b,2019-04-04,1\n"
      "a,d,2019-04-05,1\n";
  IngestConfig cfg;
  cfg.min_activity = 2;
  const auto r = ingest_text(text, cfg);
  EXPECT_EQ(r.universe.size(), 3u);
  EXPECT_FALSE(r.universe.find("d").has_value());
  EXPECT_EQ(r.edges.size(), 4u);
  EXPECT_EQ(r.drops.below_activity, 1u);
}

TEST(Ingest, TighterActivityFilterNeverGrows) {
  const auto s = random_series(12, 4, 3, 0.15);
  std::ostringstream csv;
  csv << "src,dst,timestamp,amount\n";
  for (const auto& e : s.events) csv << e.src << ',' << e.dst << ',' << e.timestamp << ',' << e.amount << '\n';
  std::size_t prev_nodes = SIZE_MAX, prev_edges = SIZE_MAX;
  for (std::size_t m = 0; m <= 12; ++m) {
    IngestConfig cfg;
    cfg.min_activity = m;
    std::istringstream in(csv.str());
    try {
      const auto r = ingest_edges(in, cfg);
      EXPECT_LE(r.universe.size(), prev_nodes);
      EXPECT_LE(r.edges.size(), prev_edges);
      prev_nodes = r.universe.size();
      prev_edges = r.edges.size();
    } catch (const EmptyDatasetError&) {
      prev_nodes = prev_edges = 0;
    }
  }
}

TEST(Ingest, MalformedRowNamesLine) {
  try {
    ingest_text("src,dst,timestamp,amount\na,b,2019-04-02,1\na,b,notadate,1\n");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3u);
  }
}

TEST(Ingest, EmptyResultIsExplicit) {
  EXPECT_THROW(ingest_text("src,dst,timestamp,amount\na,b,2019-04-02,0\n"), EmptyDatasetError);
  EXPECT_THROW(ingest_text(""), EmptyDatasetError);
}

TEST(Ingest, SelfLoopsAndDateRange) {
  const std::string text = "src,dst,timestamp,amount\na,a,2019-04-02,1\na,b,2019-03-31,1\na,b,2019-04-02,1\n";
  IngestConfig cfg;
  cfg.from = parse_timestamp("2019-04-01");
  const auto r = ingest_text(text, cfg);
  EXPECT_EQ(r.drops.self_loops, 1u);
  EXPECT_EQ(r.drops.out_of_range, 1u);
  EXPECT_EQ(r.edges.size(), 1u);
  cfg.allow_self_loops = true;
  EXPECT_EQ(ingest_text(text, cfg).edges.size(), 2u);
}

TEST(Ingest, QuotedLabelsAndEpochTimestamps) {
  const auto r = ingest_text("src,dst,timestamp,amount\n\"x, y\",z,1554076800,2.5\n");
  EXPECT_EQ(r.universe.label(0), "x, y");
  EXPECT_EQ(r.edges[0].timestamp, 1554076800);
}

TEST(Snapshots, SingleMonth) {
  const auto s = series_from(3, {{0, 0, 1, 1.0}, {0, 1, 2, 1.0}});
  EXPECT_EQ(s.size(), 1u);
}

TEST(Snapshots, GapMonthIsEmpty) {
  const auto s = series_from(3, {{0, 0, 1, 1.0}, {2, 1, 2, 1.0}});
  ASSERT_EQ(s.size(), 3u);
  EXPECT_EQ(s[1].n_edges(), 0u);
  EXPECT_EQ(month_label(s.first_month), "2019-04");
}

TEST(Snapshots, RepeatedPairsAreSummed) {
  const auto s = series_from(2, {{0, 0, 1, 2.0}, {0, 0, 1, 2.0}});
  EXPECT_DOUBLE_EQ(s[0].adjacency.at(0, 1), 4.0);
}

TEST(Snapshots, SplittingAnAmountLeavesSnapshotUnchanged) {
  const auto whole = series_from(3, {{0, 0, 1, 6.0}, {0, 2, 1, 1.0}});
  const auto split = series_from(3, {{0, 0, 1, 1.5}, {0, 2, 1, 1.0}, {0, 0, 1, 1.5}, {0, 0, 1, 3.0}});
  EXPECT_EQ(whole[0].adjacency, split[0].adjacency);
}

TEST(Snapshots, UnsortedOrEmptyInputRejected) {
  EXPECT_THROW(build_snapshots({}, NodeUniverse::identity(2)), EmptyDatasetError);
  std::vector<TemporalEdge> e = {{0, 1, 100, 1.0}, {1, 0, 50, 1.0}};
  EXPECT_THROW(build_snapshots(e, NodeUniverse::identity(2)), Error);
}

TEST(Snapshots, MonthBoundariesAreUtc) {
  EXPECT_EQ(month_of(ts(2019, 4, 30) + 86399), 2019 * 12 + 3);
  EXPECT_EQ(month_of(ts(2019, 5, 1)), 2019 * 12 + 4);
  EXPECT_EQ(month_start(2019 * 12 + 3), ts(2019, 4, 1));
  EXPECT_EQ(month_start(2020 * 12 + 11), ts(2020, 12, 1));
}

TEST(Decompose, HandExample) {
  SparseMatrix a(4);
  a.set_row(0, {{1, 2.0}, {2, 3.0}, {3, 5.0}});
  const auto d = decompose(a);
  EXPECT_DOUBLE_EQ(d.volume[0], 10.0);
  EXPECT_DOUBLE_EQ(d.ratios.at(0, 1), 0.2);
  EXPECT_DOUBLE_EQ(d.ratios.at(0, 2), 0.3);
  EXPECT_DOUBLE_EQ(d.ratios.at(0, 3), 0.5);
  EXPECT_DOUBLE_EQ(d.volume[1], 0.0);
  EXPECT_TRUE(d.ratios.row(1).empty());
}

TEST(Decompose, SingleEdge) {
  SparseMatrix a(2);
  a.set_row(0, {{1, 7.0}});
  const auto d = decompose(a);
  EXPECT_DOUBLE_EQ(d.volume[0], 7.0);
  EXPECT_DOUBLE_EQ(d.ratios.at(0, 1), 1.0);
}

TEST(Recompose, HandExamples) {
  SparseMatrix r(4);
  r.set_row(0, {{1, 0.2}, {2, 0.3}, {3, 0.5}});
  const std::vector<double> w = {10.0, 0.0, 0.0, 0.0};
  const auto a = recompose(w, r);
  EXPECT_DOUBLE_EQ(a.adjacency.at(0, 1), 2.0);
  EXPECT_DOUBLE_EQ(a.adjacency.at(0, 2), 3.0);
  EXPECT_DOUBLE_EQ(a.adjacency.at(0, 3), 5.0);

  SparseMatrix one(2);
  one.set_row(0, {{1, 1.0}});
  const std::vector<double> w4 = {4.0, 0.0};
  EXPECT_DOUBLE_EQ(recompose(w4, one).adjacency.at(0, 1), 4.0);
  const std::vector<double> w0 = {0.0, 0.0};
  EXPECT_TRUE(recompose(w0, one).adjacency.row(0).empty());
  const std::vector<double> bad = {1.0};
  EXPECT_THROW(recompose(bad, one), DimensionError);
}

TEST(Decompose, RowStochasticAndRoundTrip) {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto s = random_series(15, 3, seed);
    for (const auto& snap : s.snapshots) {
      const auto d = decompose(snap);
      for (NodeId i = 0; i < d.size(); ++i) {
        if (d.volume[i] > 0.0) {
          EXPECT_NEAR(d.ratios.row_sum(i), 1.0, 1e-9);
          for (const auto& e : d.ratios.row(i)) {
            EXPECT_GE(e.value, 0.0);
            EXPECT_LE(e.value, 1.0);
          }
        } else {
          EXPECT_TRUE(d.ratios.row(i).empty());
        }
      }
      const auto back = decompose(recompose(d.volume, d.ratios));
      for (NodeId i = 0; i < d.size(); ++i) {
        if (!(d.volume[i] > 0.0)) continue;
        EXPECT_NEAR(back.volume[i], d.volume[i], 1e-9 * d.volume[i]);
        auto x = back.ratios.row(i);
        auto y = d.ratios.row(i);
        ASSERT_EQ(x.size(), y.size());
        for (std::size_t k = 0; k < x.size(); ++k) {
          EXPECT_EQ(x[k].col, y[k].col);
          EXPECT_NEAR(x[k].value, y[k].value, 1e-15);
        }
        // Amount entries round-trip on the stored support.
        for (const auto& e : snap.adjacency.row(i))
          EXPECT_NEAR(recompose(d.volume, d.ratios).adjacency.at(i, e.col), e.value, 1e-12 * e.value);
      }
    }
  }
}

TEST(EdgeFeatures, HandFixture) {
  SparseMatrix a(3);
  a.set_row(0, {{1, 4.0}, {2, 6.0}});
  a.set_row(2, {{1, 10.0}});
  const EdgeFeatureContext ctx(a);
  const auto f01 = ctx(0, 1);
  EXPECT_NEAR(f01[0], std::log(5.0), 1e-12);
  EXPECT_NEAR(f01[0], 1.6094, 1e-4);
  EXPECT_DOUBLE_EQ(f01[1], 0.4);
  EXPECT_DOUBLE_EQ(f01[2], 0.5);
  EXPECT_NEAR(f01[3], 4.0 / 14.0, 1e-15);
  EXPECT_DOUBLE_EQ(f01[4], 0.2);
  const auto f21 = ctx(2, 1);
  EXPECT_NEAR(f21[0], 2.3979, 1e-4);
  EXPECT_DOUBLE_EQ(f21[1], 1.0);
  EXPECT_DOUBLE_EQ(f21[2], 0.5);
  EXPECT_NEAR(f21[3], 10.0 / 14.0, 1e-15);
  EXPECT_DOUBLE_EQ(f21[4], 0.5);
  EXPECT_THROW(ctx(1, 0), Error);
}

TEST(EdgeFeatures, SoleEdgeHasUnitRatios) {
  SparseMatrix a(2);
  a.set_row(0, {{1, 3.0}});
  const auto f = EdgeFeatureContext(a)(0, 1);
  for (std::size_t c = 1; c < 5; ++c) EXPECT_DOUBLE_EQ(f[c], 1.0);
}

TEST(EdgeFeatures, LogAmountScheme) {
  SparseMatrix a(2);
  a.set_row(0, {{1, 0.5}});
  EXPECT_DOUBLE_EQ(EdgeFeatureContext(a, EdgeFeatureScheme::log_amount)(0, 1)[0], std::log(0.5));
}

TEST(Export, SnapshotCsvRoundTrip) {
  const auto s = random_series(8, 3, 11);
  std::ostringstream out;
  write_snapshots(out, s);
  std::istringstream in(out.str());
  const auto back = read_snapshot_csv(in, s.n_nodes());
  for (const auto& snap : s.snapshots) {
    if (snap.n_edges() == 0) continue;
    EXPECT_EQ(back.at(snap.index), snap.adjacency);
  }
  std::ostringstream nodes;
  write_node_universe(nodes, NodeUniverse({"a,b", "c"}));
  EXPECT_EQ(nodes.str(), "id,label\n0,\"a,b\"\n1,c\n");
}
