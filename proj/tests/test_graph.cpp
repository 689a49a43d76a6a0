#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "bolero/error.hpp"
#include "bolero/graph.hpp"
#include "oracles.hpp"

namespace bolero {
namespace {

using oracle::coded_table;

TEST(Anchors, CategoricalCodesPlusOnePerContinuous) {
  const auto d = coded_table({{0, 1, 2, 1}}, {{0.1, 0.2, 0.3, 0.4}, {1, 2, 3, 4}}, {0, 1, 0, 1}, 2);
  const auto anchors = build_anchors(d);
  ASSERT_EQ(anchors.size(), 5u);
  EXPECT_EQ(anchors[0].kind, AnchorKind::CategoricalValue);
  EXPECT_EQ(anchors[0].code, 0u);
  EXPECT_EQ(anchors[2].code, 2u);
  EXPECT_EQ(anchors[3].kind, AnchorKind::ContinuousFeature);
  EXPECT_EQ(anchors[3].column_name, "x0");
  for (std::size_t i = 0; i < anchors.size(); ++i) EXPECT_EQ(anchors[i].index, i);
  EXPECT_EQ(build_anchors(d), anchors);
}

TEST(Anchors, OnlyContinuousColumns) {
  const auto d = coded_table({}, {{1, 2}, {3, 4}, {5, 6}}, {0, 1}, 2);
  const auto anchors = build_anchors(d);
  ASSERT_EQ(anchors.size(), 3u);
  for (const auto& a : anchors) EXPECT_EQ(a.kind, AnchorKind::ContinuousFeature);
}

TEST(InstanceEdges, MinMaxWeightsWithClamping) {
  // Train rows 0..2 fix the range [2, 6]; row 3 (Test) lies above it.
  const auto d = coded_table({{1, 2, 1, 1}}, {{2, 6, 4, 9}}, {0, 1, 0, 1}, 2,
                             {Split::Train, Split::Train, Split::Train, Split::Test});
  const auto anchors = build_anchors(d);
  const auto edges = build_instance_edges(d, anchors);
  ASSERT_EQ(edges.size(), 8u);
  std::vector<double> cont;
  for (const auto& e : edges) {
    if (anchors[e.anchor].kind == AnchorKind::CategoricalValue) {
      EXPECT_EQ(e.weight, 1.0);
      EXPECT_EQ(anchors[e.anchor].code, d.columns()[0].codes[e.instance]);
    } else {
      cont.push_back(e.weight);
    }
  }
  EXPECT_EQ(cont, (std::vector<double>{0.0, 1.0, 0.5, 1.0}));
}

TEST(InstanceEdges, NaNGivesNoEdgeAndConstantGivesHalf) {
  const auto d = coded_table({}, {{NAN, 1, 2}, {3, 3, 3}}, {0, 1, 0}, 2);
  const auto edges = build_instance_edges(d, build_anchors(d));
  ASSERT_EQ(edges.size(), 5u);
  for (const auto& e : edges)
    if (e.anchor == 1) EXPECT_EQ(e.weight, 0.5);
  EXPECT_EQ(minmax_weight(NAN, 0, 1) == minmax_weight(NAN, 0, 1), false);
}

TEST(InstanceEdges, CategoricalEdgeCountPerInstance) {
  std::mt19937_64 rng(3);
  std::vector<std::vector<std::uint32_t>> cats(3, std::vector<std::uint32_t>(25));
  for (auto& c : cats)
    for (auto& v : c) v = static_cast<std::uint32_t>(rng() % 4);
  const auto d = coded_table(cats, {}, std::vector<double>(25, 0), 2);
  const auto anchors = build_anchors(d);
  std::vector<int> per(25, 0);
  for (const auto& e : build_instance_edges(d, anchors)) ++per[e.instance];
  for (int c : per) EXPECT_EQ(c, 3);
}

TEST(InstanceEdges, MonotoneInValue) {
  double prev = -1;
  for (double v = 0.0; v <= 10.0; v += 0.5) {
    const double w = minmax_weight(v, 0.0, 10.0);
    EXPECT_GE(w, prev);
    prev = w;
  }
}

TEST(Cooccurrence, SaturatedAnchors) {
  const auto d = coded_table({std::vector<std::uint32_t>(10, 1), std::vector<std::uint32_t>(10, 2)}, {},
                             std::vector<double>(10, 0), 2);
  const auto s = count_cooccurrence(d, build_anchors(d));
  EXPECT_EQ(s.p(0), 1.0);
  EXPECT_EQ(s.p(1), 1.0);
  EXPECT_EQ(s.p(0, 1), 1.0);
  EXPECT_EQ(ppmi(s, 0, 1), 0.0);
}

TEST(Cooccurrence, ToyTableMatchesEnumeration) {
  // c0: a b a b ; c1: x x y y
  const auto d = coded_table({{1, 2, 1, 2}, {1, 1, 2, 2}}, {}, {0, 0, 0, 0}, 2);
  const auto s = count_cooccurrence(d, build_anchors(d));
  EXPECT_EQ(s.marginal, (std::vector<std::size_t>{2, 2, 2, 2}));
  EXPECT_EQ(s.joint(0, 1), 0u);  // a and b never co-occur
  EXPECT_EQ(s.joint(0, 2), 1u);
  EXPECT_EQ(s.joint(1, 3), 1u);
  EXPECT_EQ(ppmi(s, 0, 2), 0.0);  // independent
}

TEST(Ppmi, HandArithmetic) {
  // a in rows 0,1; b in rows 0,1 of 4 rows: p(a)=p(b)=p(a,b)=0.5 -> ln 2.
  const auto d = coded_table({{1, 1, 2, 2}, {1, 1, 2, 2}}, {}, {0, 0, 0, 0}, 2);
  const auto s = count_cooccurrence(d, build_anchors(d));
  EXPECT_NEAR(ppmi(s, 0, 2), std::log(2.0), 1e-15);
  EXPECT_EQ(ppmi(s, 0, 3), 0.0);
}

TEST(Ppmi, NegativeAssociationClipped) {
  // p(a)=3/4, p(b)=3/4, p(a,b)=2/4 < 9/16.
  const auto d = coded_table({{1, 1, 1, 2}, {1, 1, 2, 1}}, {}, {0, 0, 0, 0}, 2);
  const auto s = count_cooccurrence(d, build_anchors(d));
  EXPECT_EQ(ppmi(s, 0, 2), 0.0);
}

TEST(Ppmi, ZeroMarginal) {
  CooccurrenceStats s;
  s.total_rows = 4;
  s.marginal = {2, 0};
  EXPECT_THROW(ppmi(s, 0, 1), Error);
}

TEST(Ppmi, MatchesBruteForceOnRandomTables) {
  std::mt19937_64 rng(11);
  for (int t = 0; t < 30; ++t) {
    const std::size_t rows = 3 + rng() % 28;
    std::vector<std::uint32_t> c0(rows), c1(rows);
    std::vector<double> x0(rows);
    for (std::size_t r = 0; r < rows; ++r) {
      c0[r] = static_cast<std::uint32_t>(rng() % 3);
      c1[r] = static_cast<std::uint32_t>(rng() % 2);
      x0[r] = static_cast<double>(rng() % 7);
    }
    const auto d = coded_table({c0, c1}, {x0}, std::vector<double>(rows, 0), 2);
    const auto anchors = build_anchors(d);
    const auto stats = count_cooccurrence(d, anchors);
    const double lo = *std::min_element(x0.begin(), x0.end());
    const double hi = *std::max_element(x0.begin(), x0.end());
    std::vector<std::vector<bool>> occurs(rows, std::vector<bool>(anchors.size()));
    for (std::size_t r = 0; r < rows; ++r)
      for (const auto& a : anchors) {
        if (a.kind == AnchorKind::ContinuousFeature)
          occurs[r][a.index] = hi > lo ? (x0[r] - lo) / (hi - lo) > 0.5 : false;
        else
          occurs[r][a.index] = (a.column == 0 ? c0[r] : c1[r]) == a.code;
      }
    const auto expected = oracle::brute_force_ppmi(occurs);
    for (std::uint32_t a = 0; a < anchors.size(); ++a)
      for (std::uint32_t b = 0; b < anchors.size(); ++b) {
        if (a == b || stats.marginal[a] == 0 || stats.marginal[b] == 0) continue;
        EXPECT_NEAR(ppmi(stats, a, b), expected[a][b], 1e-12);
        EXPECT_EQ(ppmi(stats, a, b), ppmi(stats, b, a));
        EXPECT_GE(ppmi(stats, a, b), 0.0);
      }
  }
}

TEST(BuildGraph, SixRowHandEnumeration) {
  // c0: a a b b a b ; x0: 0 1 2 3 4 5 (train range [0,5]).
  const auto d = coded_table({{1, 1, 2, 2, 1, 2}}, {{0, 1, 2, 3, 4, 5}}, {0, 1, 0, 1, 0, 1}, 2);
  const auto g = build_graph(d);
  ASSERT_EQ(g.num_instances, 6u);
  ASSERT_EQ(g.anchors.size(), 3u);
  std::vector<InstanceEdge> expected;
  const std::uint32_t code_anchor[] = {0, 0, 1, 1, 0, 1};
  for (std::uint32_t r = 0; r < 6; ++r) {
    expected.push_back({r, code_anchor[r], 1.0});
    expected.push_back({r, 2, r / 5.0});
  }
  ASSERT_EQ(g.ia_edges.size(), expected.size());
  for (std::size_t i = 0; i < expected.size(); ++i) {
    EXPECT_EQ(g.ia_edges[i].instance, expected[i].instance);
    EXPECT_EQ(g.ia_edges[i].anchor, expected[i].anchor);
    EXPECT_NEAR(g.ia_edges[i].weight, expected[i].weight, 1e-15);
  }
  // x0 occurs in rows 3,4,5 (weight > 0.5). a: rows 0,1,4; b: rows 2,3,5.
  // p(b,x)=2/6, p(b)=p(x)=1/2 -> ln(4/3); p(a,x)=1/6 -> clipped.
  ASSERT_EQ(g.aa_edges.size(), 1u);
  EXPECT_EQ(g.aa_edges[0].a, 1u);
  EXPECT_EQ(g.aa_edges[0].b, 2u);
  EXPECT_NEAR(g.aa_edges[0].weight, std::log(4.0 / 3.0), 1e-15);
  EXPECT_NO_THROW(g.validate());
}

TEST(BuildGraph, SingleContinuousColumnHasNoAnchorEdges) {
  const auto d = coded_table({}, {{1, 2, 3, 4}}, {0, 1, 0, 1}, 2);
  EXPECT_TRUE(build_graph(d).aa_edges.empty());
}

TEST(BuildGraph, TopKLimitsNeighbours) {
  // Each of 6 codes in c0 co-occurs with exactly one code in c1; with many
  // correlated columns every anchor has many positive-PPMI partners.
  std::vector<std::vector<std::uint32_t>> cats(5, std::vector<std::uint32_t>(30));
  for (std::size_t r = 0; r < 30; ++r)
    for (std::size_t c = 0; c < 5; ++c) cats[c][r] = static_cast<std::uint32_t>(r % 3);
  const auto d = coded_table(cats, {}, std::vector<double>(30, 0), 2);
  const auto full = build_graph(d, {.top_k = 100});
  const auto pruned = build_graph(d, {.top_k = 1});
  EXPECT_EQ(full.aa_edges.size(), 30u);  // C(5,2) column pairs x 3 matching codes
  EXPECT_LT(pruned.aa_edges.size(), full.aa_edges.size());
  std::vector<int> degree(pruned.anchors.size(), 0);
  for (const auto& e : pruned.aa_edges) {
    ++degree[e.a];
    ++degree[e.b];
  }
  for (int deg : degree) EXPECT_GE(deg, 1);
}

TEST(BuildGraph, DeterministicAndLabelBlind) {
  const auto raw = make_splits(load_csv_text(oracle::xor_csv(150, 2), oracle::xor_schema()), 1);
  const auto d = apply_preprocess(raw, fit_preprocess(raw));
  const auto g1 = build_graph(d);
  EXPECT_EQ(g1, build_graph(d));
  std::vector<double> zeroed(d.num_rows(), 0.0);
  EXPECT_EQ(g1, build_graph(d.with_targets(zeroed)));
  EXPECT_EQ(d.target_reads(Split::Train) + d.target_reads(Split::Val) + d.target_reads(Split::Test), 0u);
}

TEST(BuildGraph, JsonRoundTrip) {
  const auto d = coded_table({{1, 1, 2, 2, 1, 2}}, {{0, 1, 2, 3, 4, 5}}, {0, 1, 0, 1, 0, 1}, 2);
  const auto g = build_graph(d);
  const auto text = g.to_json("abc");
  EXPECT_NE(text.find("\"config_hash\": \"abc\""), std::string::npos);
  const auto back = BipartiteGraph::from_json(text);
  EXPECT_EQ(back.anchors, g.anchors);
  ASSERT_EQ(back.ia_edges.size(), g.ia_edges.size());
  for (std::size_t i = 0; i < g.ia_edges.size(); ++i) EXPECT_NEAR(back.ia_edges[i].weight, g.ia_edges[i].weight, 1e-8);
  EXPECT_EQ(back.to_json("abc"), text);
}

}  // namespace
}  // namespace bolero
