#include "axnas/genotype.hpp"

#include <gtest/gtest.h>

#include <set>

using namespace axnas;

namespace {

constexpr int kLibrarySize = 9;

TemplateSpec small_spec() {
  TemplateSpec spec;
  spec.rows = 3;
  spec.cols = 6;
  spec.lback = 2;
  return spec;
}

Template small_template(std::uint64_t seed = 11) {
  Rng rng(seed);
  return materialize_template(small_spec(), 10, rng);
}

Genotype seeded(std::uint64_t seed = 42) {
  Rng rng(seed);
  const Template t = small_template();
  return seed_from_template(t, kLibrarySize, std::nullopt, rng);
}

// Independent reachability oracle: iterate "mark predecessors of marked
// nodes" to a fixed point instead of walking a stack.
std::set<Coord> oracle_active_coords(const Genotype& g) {
  std::set<Coord> marked = {g.output_gene};
  bool grew = true;
  while (grew) {
    grew = false;
    std::set<Coord> next = marked;
    for (const Coord& c : marked) {
      if (c.col == 0) continue;
      for (const Coord& src : g.at(c).inputs) {
        if (next.insert(src).second) grew = true;
      }
    }
    marked.swap(next);
  }
  marked.insert({0, 0});  // input is always reached through column-1 nodes
  return marked;
}

std::set<Coord> extracted_coords(const Genotype& g) {
  std::set<Coord> out;
  for (const auto& n : extract_active(g).nodes) {
    if (n.coord.col <= g.cols) out.insert(n.coord);
  }
  return out;
}

}  // namespace

TEST(Seed, ValidatesAndIsDeterministic) {
  const Genotype a = seeded(7);
  EXPECT_TRUE(validate(a, kLibrarySize).empty());
  const Genotype b = seeded(7);
  EXPECT_EQ(a.output_gene, b.output_gene);
  EXPECT_EQ(a.mult_index, b.mult_index);
  ASSERT_EQ(a.grid.size(), b.grid.size());
  for (std::size_t i = 0; i < a.grid.size(); ++i)
    EXPECT_EQ(a.grid[i].inputs, b.grid[i].inputs);
}

TEST(Seed, AllConnectionsRespectLBack) {
  const Template t = small_template();
  Rng rng(99);
  for (int trial = 0; trial < 1000; ++trial) {
    const Genotype g = seed_from_template(t, kLibrarySize, std::nullopt, rng);
    for (int col = 1; col <= g.cols; ++col) {
      for (int row = 0; row < g.rows; ++row) {
        for (const Coord& src : g.at({col, row}).inputs) {
          ASSERT_GE(src.col, std::max(0, col - g.lback));
          ASSERT_LE(src.col, col - 1);
        }
      }
    }
    ASSERT_EQ(g.output_gene.col, t.last_fc_col);
  }
}

TEST(Seed, FixedMultiplierPolicy) {
  const Template t = small_template();
  Rng rng(5);
  const Genotype g = seed_from_template(t, kLibrarySize, 4, rng);
  EXPECT_EQ(g.mult_index, 4);
  Rng rng2(5);
  EXPECT_THROW(seed_from_template(t, kLibrarySize, kLibrarySize, rng2),
               ConfigError);
}

TEST(Template, RequiresPureFcTailColumn) {
  TemplateSpec spec = small_spec();
  spec.column_kinds = default_column_kinds(spec.cols);
  spec.column_kinds.back() = {NodeKind::Fc, NodeKind::Conv};
  Rng rng(1);
  EXPECT_THROW(materialize_template(spec, 10, rng), ConfigError);

  TemplateSpec no_fc = small_spec();
  no_fc.column_kinds.assign(static_cast<std::size_t>(no_fc.cols),
                            {NodeKind::Conv});
  Rng rng2(1);
  EXPECT_THROW(materialize_template(no_fc, 10, rng2), ConfigError);
}

TEST(ExtractActive, MinimalChain) {
  // 1x2 grid: one conv column, one FC column, everything wired to input.
  Genotype g;
  g.rows = 1;
  g.cols = 2;
  g.lback = 2;
  g.grid.resize(2);
  g.at({1, 0}) = {NodeKind::Conv, ConvParams{8, 3, 1}, {{0, 0}}};
  g.at({2, 0}) = {NodeKind::Fc, FcParams{10}, {{0, 0}}};
  g.output_gene = {2, 0};
  const ActiveSubgraph active = extract_active(g);
  ASSERT_EQ(active.nodes.size(), 3u);  // input, fc, output
  EXPECT_EQ(active.nodes[0].gene.kind, NodeKind::Input);
  EXPECT_EQ(active.nodes[1].gene.kind, NodeKind::Fc);
  EXPECT_EQ(active.nodes[2].gene.kind, NodeKind::Output);
}

TEST(ExtractActive, MatchesFixedPointOracle) {
  Rng rng(2024);
  const Template t = small_template();
  for (int trial = 0; trial < 500; ++trial) {
    const Genotype g = seed_from_template(t, kLibrarySize, std::nullopt, rng);
    EXPECT_EQ(extracted_coords(g), oracle_active_coords(g));
    EXPECT_LE(extract_active(g).nodes.size(),
              static_cast<std::size_t>(g.rows * g.cols) + 2);
  }
}

TEST(ExtractActive, TopologicalOrder) {
  const Genotype g = seeded(3);
  const ActiveSubgraph active = extract_active(g);
  std::set<Coord> seen;
  for (const auto& n : active.nodes) {
    for (const Coord& src : n.gene.inputs) ASSERT_TRUE(seen.contains(src));
    seen.insert(n.coord);
  }
}

TEST(ExtractActive, CorruptedGenotypeRaisesIntegrityError) {
  Genotype g = seeded(8);
  Genotype forward_edge = g;
  // Make the output-gene node point at itself (forward/self edge).
  forward_edge.at(forward_edge.output_gene).inputs[0] =
      forward_edge.output_gene;
  EXPECT_THROW(extract_active(forward_edge), IntegrityError);

  Genotype bad_output = g;
  bad_output.output_gene = {g.cols + 3, 0};
  EXPECT_THROW(extract_active(bad_output), IntegrityError);
}

TEST(Mutate, PreservesMultIndexWhenPMultZero) {
  Genotype g = seeded(12);
  Rng rng(1);
  for (int i = 0; i < 100; ++i) {
    const Genotype child = mutate(g, 0.0, kLibrarySize, rng);
    ASSERT_EQ(child.mult_index, g.mult_index);
    g = child;
  }
}

TEST(Mutate, ActiveSubgraphAlwaysChanges) {
  Genotype g = seeded(77);
  Rng rng(3);
  for (int i = 0; i < 10000; ++i) {
    const auto parent_edges = active_edge_set(extract_active(g));
    const Genotype child = mutate(g, 1.0, kLibrarySize, rng);
    ASSERT_NE(active_edge_set(extract_active(child)), parent_edges);
    g = child;
  }
}

TEST(Mutate, ClosureUnderValidation) {
  Genotype g = seeded(31);
  Rng rng(9);
  for (int i = 0; i < 10000; ++i) {
    g = mutate(g, 0.5, kLibrarySize, rng);
    const auto violations = validate(g, kLibrarySize);
    ASSERT_TRUE(violations.empty()) << violations.front();
  }
}

TEST(Mutate, DeterministicUnderEqualStreams) {
  const Genotype g = seeded(55);
  Rng a(4242), b(4242);
  for (int i = 0; i < 50; ++i) {
    const Genotype ca = mutate(g, 0.7, kLibrarySize, a);
    const Genotype cb = mutate(g, 0.7, kLibrarySize, b);
    ASSERT_EQ(genotype_to_json(ca), genotype_to_json(cb));
  }
}

TEST(Mutate, SingleActiveNodeTargetsItOrOutput) {
  // 1-row grid, FC tail: the only active grid node is the output target.
  Genotype g;
  g.rows = 1;
  g.cols = 3;
  g.lback = 3;
  g.grid.resize(3);
  g.at({1, 0}) = {NodeKind::Conv, ConvParams{8, 3, 1}, {{0, 0}}};
  g.at({2, 0}) = {NodeKind::Conv, ConvParams{8, 3, 1}, {{0, 0}}};
  g.at({3, 0}) = {NodeKind::Fc, FcParams{10}, {{0, 0}}};
  g.output_gene = {3, 0};
  Rng rng(6);
  for (int i = 0; i < 200; ++i) {
    const Genotype child = mutate(g, 0.0, kLibrarySize, rng);
    // Output cannot move (single FC node); the FC input must have changed.
    EXPECT_EQ(child.output_gene, g.output_gene);
    EXPECT_NE(child.at({3, 0}).inputs[0], g.at({3, 0}).inputs[0]);
  }
}

TEST(Mutate, FlagsNewlyActiveNodesForReinit) {
  Rng rng(21);
  const Template t = small_template();
  int flagged_runs = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const Genotype g = seed_from_template(t, kLibrarySize, std::nullopt, rng);
    const auto parent_active = oracle_active_coords(g);
    const Genotype child = mutate(g, 0.0, kLibrarySize, rng);
    const auto child_active = oracle_active_coords(child);
    std::set<Coord> expect;
    for (const Coord& c : child_active)
      if (c.col >= 1 && !parent_active.contains(c)) expect.insert(c);
    const std::set<Coord> got(child.pending_reinit.begin(),
                              child.pending_reinit.end());
    ASSERT_EQ(got, expect);
    flagged_runs += !expect.empty();
  }
  EXPECT_GT(flagged_runs, 0);  // the scenario actually occurs
}

TEST(Mutate, InactiveNodesAreNeutral) {
  Rng rng(100);
  const Template t = small_template();
  for (int trial = 0; trial < 200; ++trial) {
    Genotype g = seed_from_template(t, kLibrarySize, std::nullopt, rng);
    const auto active = extracted_coords(g);
    Genotype zeroed = g;
    for (int col = 1; col <= g.cols; ++col)
      for (int row = 0; row < g.rows; ++row)
        if (!active.contains({col, row}))
          for (Coord& src : zeroed.at({col, row}).inputs) src = {0, 0};
    ASSERT_EQ(extracted_coords(zeroed), active);
  }
}

TEST(Validate, ReportsAllViolations) {
  Genotype g = seeded(64);
  EXPECT_TRUE(validate(g, kLibrarySize).empty());

  Genotype far = g;
  // Reach further back than L allows.
  far.at({4, 0}).inputs[0] = {1, 0};  // lback == 2, so 3 columns back
  const auto v1 = validate(far, kLibrarySize);
  ASSERT_EQ(v1.size(), 1u);
  EXPECT_NE(v1[0].find("node (4,0)"), std::string::npos);
  EXPECT_NE(v1[0].find("beyond L=2"), std::string::npos);

  Genotype bad_mult = g;
  bad_mult.mult_index = kLibrarySize;
  const auto v2 = validate(bad_mult, kLibrarySize);
  ASSERT_EQ(v2.size(), 1u);
  EXPECT_NE(v2[0].find("multiplier index"), std::string::npos);

  far.mult_index = -1;
  EXPECT_EQ(validate(far, kLibrarySize).size(), 2u);
}

TEST(Serialization, JsonRoundTrip) {
  Rng rng(2);
  Genotype g = seeded(123);
  g = mutate(g, 1.0, kLibrarySize, rng);  // include pending_reinit state
  const nlohmann::json doc = genotype_to_json(g);
  const Genotype back = genotype_from_json(doc);
  EXPECT_EQ(genotype_to_json(back), doc);
  EXPECT_EQ(back.output_gene, g.output_gene);
  EXPECT_EQ(back.mult_index, g.mult_index);
  EXPECT_EQ(back.seed_tag, g.seed_tag);
}
