#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include "citekg/community.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace citekg;
using namespace citekg::community;
using citekg::testing::random_store;
using citekg::testing::ymd;

namespace {

using citekg::testing::Edges;
using citekg::testing::exhaustive_modularity;
using citekg::testing::random_edges;
using citekg::testing::Reference;

Edges two_cliques(std::uint32_t k) {
  Edges e;
  for (std::uint32_t base : {0u, k})
    for (std::uint32_t i = 0; i < k; ++i)
      for (std::uint32_t j = i + 1; j < k; ++j) e.emplace_back(base + i, base + j);
  return e;
}

void expect_non_decreasing(const std::vector<double>& trace) {
  for (std::size_t i = 1; i < trace.size(); ++i)
    EXPECT_GE(trace[i], trace[i - 1] - 1e-12 * (1 + std::abs(trace[i - 1]))) << "sweep " << i;
}

}  // namespace

TEST(InitPartition, SingleLabelPutsEverythingInZero) {
  Rng rng(1);
  const auto p = init_fixed_partition(50, 1, 1e9, rng);
  for (auto l : p.label) EXPECT_EQ(l, 0);
}

TEST(InitPartition, FixedSeedIsDeterministic) {
  Rng a(3), b(3);
  EXPECT_EQ(init_fixed_partition(500, 17, 1e9, a).label, init_fixed_partition(500, 17, 1e9, b).label);
}

TEST(InitPartition, UniformUnderChiSquare) {
  Rng rng(2024);
  const auto p = init_fixed_partition(10000, 10, 1e9, rng);
  std::vector<double> count(10, 0.0);
  for (auto l : p.label) count[static_cast<std::size_t>(l)] += 1;
  double chi2 = 0;
  for (double c : count) chi2 += (c - 1000) * (c - 1000) / 1000;
  EXPECT_LT(chi2, 21.666);  // 1% point, 9 degrees of freedom
}

TEST(InitPartition, RespectsCapAndRejectsInfeasibleBudget) {
  Rng rng(4);
  const auto p = init_fixed_partition(100, 10, 10, rng);
  std::vector<int> size(10, 0);
  for (auto l : p.label) ++size[static_cast<std::size_t>(l)];
  for (int s : size) EXPECT_EQ(s, 10);
  EXPECT_THROW(init_fixed_partition(100, 9, 11, rng), ConfigError);
  EXPECT_THROW(init_fixed_partition(10, 0, 11, rng), ConfigError);
}

TEST(GraphBuild, SimpleUndirected) {
  const Edges e = {{0, 1}, {1, 0}, {0, 1}, {2, 2}, {1, 2}};
  const auto g = Graph::from_edges(3, e);
  EXPECT_EQ(g.total_weight, 2.0);
  EXPECT_EQ(g.strength[1], 2.0);
  EXPECT_EQ(g.neighbors(0).size(), 1u);
}

TEST(GraphBuild, CitationGraphCoversWorksOnly) {
  const auto store = random_store(5, 30);
  const auto cg = citation_graph(store);
  EXPECT_EQ(cg.works.size(), store.entities_of_class(EntityClass::Work).size());
  for (EntityId w : cg.works) EXPECT_EQ(store.entity_class(w), EntityClass::Work);
  std::set<std::pair<EntityId, EntityId>> pairs;
  for (const Quad& q : store.quads_of(Relation::Cites))
    if (q.s != q.o) pairs.insert(std::minmax(q.s, q.o));
  EXPECT_EQ(cg.graph.total_weight, static_cast<double>(pairs.size()));
}

TEST(Quality, SingleCommunityModularityIsZero) {
  Rng rng(1);
  const auto e = random_edges(rng, 20, 0.3);
  const auto g = Graph::from_edges(20, e);
  const std::vector<std::int32_t> l(20, 0);
  EXPECT_NEAR(*quality(g, l, {QualityKind::Modularity}), 0.0, 1e-15);
}

TEST(Quality, NoEdgesIsUndefined) {
  const auto g = Graph::from_edges(5, Edges{});
  const std::vector<std::int32_t> l = {0, 1, 0, 1, 0};
  for (auto k : {QualityKind::Modularity, QualityKind::Rber, QualityKind::Significance, QualityKind::Surprise})
    EXPECT_FALSE(quality(g, l, {k}));
}

TEST(Quality, TwoCliquesSplitMatchesReference) {
  const auto e = two_cliques(4);
  const auto g = Graph::from_edges(8, e);
  const Reference ref(8, e);
  const std::vector<std::int32_t> l = {0, 0, 0, 0, 1, 1, 1, 1};
  EXPECT_NEAR(*quality(g, l, {QualityKind::Modularity}), ref.modularity(l), 1e-14);
  EXPECT_NEAR(*quality(g, l, {QualityKind::Modularity}), 0.5, 1e-14);
}

TEST(Quality, AllKindsMatchReferenceOnRandomGraphs) {
  Rng rng(9);
  for (int rep = 0; rep < 50; ++rep) {
    const std::uint32_t n = 4 + static_cast<std::uint32_t>(uniform_index(rng, 20));
    const auto e = random_edges(rng, n, 0.3);
    if (e.empty()) continue;
    const auto g = Graph::from_edges(n, e);
    const Reference ref(n, e);
    std::vector<std::int32_t> l(n);
    for (auto& x : l) x = static_cast<std::int32_t>(uniform_index(rng, 4));
    EXPECT_NEAR(*quality(g, l, {QualityKind::Modularity}), ref.modularity(l), 1e-12);
    EXPECT_NEAR(*quality(g, l, {QualityKind::Rber}), ref.rber(l), 1e-9);
    EXPECT_NEAR(*quality(g, l, {QualityKind::Significance}), ref.significance(l), 1e-9);
    EXPECT_NEAR(*quality(g, l, {QualityKind::Surprise}), ref.surprise(l), 1e-9);
  }
}

TEST(Leiden, TwoCliquesSeparateFromAnyStart) {
  const auto e = two_cliques(4);
  const auto g = Graph::from_edges(8, e);
  const Reference ref(8, e);
  const double optimum = exhaustive_modularity(ref);
  EXPECT_NEAR(optimum, 0.5, 1e-12);
  // every start with both labels available
  for (std::uint32_t mask = 0; mask < 256; ++mask) {
    Partition p;
    p.n_labels = 2;
    p.cap = 8;
    p.label.resize(8);
    for (int i = 0; i < 8; ++i) p.label[i] = (mask >> i) & 1;
    LeidenOptions opts;
    opts.seed = mask;
    const auto res = leiden_constrained(g, p, opts);
    const auto& l = res.partition.label;
    EXPECT_NE(l[0], l[4]) << "start " << mask;
    for (int i = 1; i < 4; ++i) {
      EXPECT_EQ(l[i], l[0]);
      EXPECT_EQ(l[4 + i], l[4]);
    }
  }
}

TEST(Leiden, CapOfOneFreezesSingletons) {
  Rng rng(3);
  const auto e = random_edges(rng, 12, 0.4);
  const auto g = Graph::from_edges(12, e);
  const auto init = init_fixed_partition(12, 15, 1, rng);
  const auto res = leiden_constrained(g, init, {});
  EXPECT_EQ(res.partition.label, init.label);
  EXPECT_EQ(res.moves, 0u);
}

TEST(Leiden, BudgetAndCapHoldOverRandomRuns) {
  Rng rng(11);
  for (int run = 0; run < 100; ++run) {
    const std::uint32_t n = 10 + static_cast<std::uint32_t>(uniform_index(rng, 60));
    const auto e = random_edges(rng, n, uniform_real(rng, 0.05, 0.5));
    const auto g = Graph::from_edges(n, e);
    const std::size_t labels = 1 + uniform_index(rng, 8);
    const double cap = std::ceil(static_cast<double>(n) / static_cast<double>(labels)) +
                       static_cast<double>(uniform_index(rng, 5));
    const auto init = init_fixed_partition(n, labels, cap, rng);
    LeidenOptions opts;
    opts.quality.kind = static_cast<QualityKind>(run % 4);
    opts.seed = static_cast<std::uint64_t>(run);
    opts.parallel = run % 3 == 0;
    if (e.empty()) continue;
    const auto res = leiden_constrained(g, init, opts);
    EXPECT_NO_THROW(res.partition.check(g));
    EXPECT_LE(res.partition.used_labels(), labels);
    for (auto l : res.partition.label) EXPECT_LT(static_cast<std::size_t>(l), labels);
    expect_non_decreasing(res.trace);
    EXPECT_GE(res.trace.back(), res.trace.front() - 1e-12 * (1 + std::abs(res.trace.front())));
    EXPECT_NEAR(res.trace.back(), *quality(g, res.partition.label, opts.quality),
                1e-9 * (1 + std::abs(res.trace.back())));
  }
}

TEST(Leiden, ReachesExhaustiveOptimumOnSmallGraphs) {
  Rng rng(21);
  int hits = 0, runs = 0;
  for (int graph = 0; graph < 10; ++graph) {
    const std::uint32_t n = 6 + static_cast<std::uint32_t>(uniform_index(rng, 5));
    Edges e;
    while (e.empty()) e = random_edges(rng, n, 0.35);
    const auto g = Graph::from_edges(n, e);
    const double optimum = exhaustive_modularity(Reference(n, e));
    for (int restart = 0; restart < 10; ++restart) {
      const auto init = init_fixed_partition(n, n, n, rng);
      LeidenOptions opts;
      opts.seed = static_cast<std::uint64_t>(graph * 100 + restart);
      const auto res = leiden_constrained(g, init, opts);
      ++runs;
      if (res.trace.back() >= optimum - 1e-12) ++hits;
    }
  }
  EXPECT_GE(hits, 95) << hits << " of " << runs;
}

TEST(Leiden, ParallelModeIsDeterministicAcrossWorkers) {
  Rng rng(5);
  const auto e = random_edges(rng, 300, 0.03);
  const auto g = Graph::from_edges(300, e);
  const auto init = init_fixed_partition(300, 20, 40, rng);
  LeidenOptions opts;
  opts.parallel = true;
  opts.workers = 1;
  const auto a = leiden_constrained(g, init, opts);
  opts.workers = 3;
  const auto b = leiden_constrained(g, init, opts);
  EXPECT_EQ(a.partition.label, b.partition.label);
  EXPECT_EQ(a.trace, b.trace);
}

TEST(Leiden, RejectsInvalidInitialPartition) {
  const auto g = Graph::from_edges(4, two_cliques(2));
  Partition p;
  p.n_labels = 2;
  p.cap = 1;
  p.label = {0, 0, 1, 1};
  EXPECT_THROW(leiden_constrained(g, p, {}), ContractError);
  p.cap = 4;
  p.label = {0, 0, 2, 1};
  EXPECT_THROW(leiden_constrained(g, p, {}), ContractError);
}

namespace {

// 6 papers, concept tree: Chemistry <- {Organic, Inorganic}, Physics <- {Optics}
struct ConceptFixture {
  GraphStore store;
  std::vector<EntityId> works;

  explicit ConceptFixture(bool shuffled_links = false) {
    GraphStoreBuilder b;
    for (int i = 0; i < 6; ++i) {
      b.entity("P" + std::to_string(i), EntityClass::Work);
      b.set_date("P" + std::to_string(i), ymd(2015));
    }
    for (const char* c : {"Chemistry", "Organic", "Inorganic", "Physics", "Optics"})
      b.entity(c, EntityClass::Concept);
    b.add_concept_parent("Organic", "Chemistry");
    b.add_concept_parent("Inorganic", "Chemistry");
    b.add_concept_parent("Optics", "Physics");
    std::vector<std::pair<const char*, const char*>> links = {
        {"P0", "Organic"}, {"P1", "Inorganic"}, {"P2", "Chemistry"}, {"P3", "Optics"},
        {"P4", "Optics"},  {"P4", "Organic"}};
    if (shuffled_links) std::reverse(links.begin(), links.end());
    for (auto [w, c] : links) b.add_concept_link(w, c);
    store = b.finish();
    for (int i = 0; i < 6; ++i) works.push_back(*store.find("P" + std::to_string(i)));
  }
};

}  // namespace

TEST(ConceptQuality, ThreeOfFourUnderChemistry) {
  const ConceptFixture f;
  // community 0: P0..P3, community 1: P4, community 2: P5 (no concept)
  const std::vector<std::int32_t> label = {0, 0, 0, 0, 1, 2};
  const auto cq = concept_quality(f.store, f.works, label, 3);
  ASSERT_EQ(cq.size(), 3u);
  EXPECT_EQ(cq[0].papers, 4u);
  EXPECT_EQ(f.store.name(*cq[0].root), "Chemistry");
  EXPECT_NEAR(*cq[0].percent, 75.0, 1e-12);
  // a paper under two roots counts for each; the tie goes to the lower id
  EXPECT_NEAR(*cq[1].percent, 100.0, 1e-12);
  EXPECT_EQ(f.store.name(*cq[1].root), "Chemistry");
  EXPECT_FALSE(cq[2].percent);
}

TEST(ConceptQuality, AllUnderOneRootIsHundred) {
  const ConceptFixture f;
  const std::vector<std::int32_t> label = {0, 0, 0, 1, 1, 1};
  const auto cq = concept_quality(f.store, f.works, label, 2);
  EXPECT_NEAR(*cq[0].percent, 100.0, 1e-12);
}

TEST(ConceptQuality, InvariantToLinkOrder) {
  const ConceptFixture a(false), b(true);
  const std::vector<std::int32_t> label = {0, 1, 0, 1, 0, 1};
  const auto qa = concept_quality(a.store, a.works, label, 2);
  const auto qb = concept_quality(b.store, b.works, label, 2);
  ASSERT_EQ(qa.size(), qb.size());
  for (std::size_t i = 0; i < qa.size(); ++i) {
    EXPECT_EQ(qa[i].percent, qb[i].percent);
    EXPECT_GE(*qa[i].percent, 0.0);
    EXPECT_LE(*qa[i].percent, 100.0);
  }
}

TEST(PartitionTsv, RoundTrip) {
  const auto store = random_store(6, 25);
  const auto cg = citation_graph(store);
  Rng rng(2);
  const auto p = init_fixed_partition(cg.works.size(), 4, 100, rng);
  std::stringstream buf;
  write_partition_tsv(store, cg.works, p.label, buf);
  const auto back = read_partition_tsv(store, buf, "buffer");
  const auto expected = entity_labels(store, cg.works, p.label);
  EXPECT_EQ(back, expected);
}

TEST(PartitionTsv, RejectsUnknownNodesAndBadLabels) {
  const auto store = random_store(6, 25);
  std::istringstream a("node\tcommunity\nNOPE\t1\n");
  try {
    read_partition_tsv(store, a, "p.tsv");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
  std::istringstream b("W1\tx\n");
  EXPECT_THROW(read_partition_tsv(store, b, "p.tsv"), ParseError);
}

TEST(QualityNames, RoundTrip) {
  for (auto k : {QualityKind::Modularity, QualityKind::Rber, QualityKind::Significance, QualityKind::Surprise})
    EXPECT_EQ(parse_quality(quality_name(k)), k);
  EXPECT_FALSE(parse_quality("cpm"));
}
