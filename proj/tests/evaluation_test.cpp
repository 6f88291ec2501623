#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <set>
#include <sstream>

#include "citekg/evaluation.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace citekg;
using namespace citekg::eval;
using citekg::testing::random_store;
using citekg::testing::ymd;
using citekg::testing::brute_rank;
using citekg::testing::HashScorer;

namespace {

// Score depends only on the candidate: table[candidate].
class TableScorer : public Scorer {
 public:
  explicit TableScorer(std::vector<double> t) : table_(std::move(t)) {}
  void score_tails(const Quad&, std::span<const EntityId> c, std::span<double> out) const override {
    for (std::size_t i = 0; i < c.size(); ++i) out[i] = table_[c[i]];
  }
  void score_heads(const Quad&, std::span<const EntityId> c, std::span<double> out) const override {
    for (std::size_t i = 0; i < c.size(); ++i) out[i] = table_[c[i]];
  }

 private:
  std::vector<double> table_;
};

GraphStore two_community_store() {
  GraphStoreBuilder b;
  for (int i = 0; i < 12; ++i) {
    b.entity("W" + std::to_string(i), EntityClass::Work);
    b.set_date("W" + std::to_string(i), ymd(2010 + i));
  }
  for (int i = 1; i < 12; ++i) b.add_quad("W" + std::to_string(i), Relation::Cites, "W" + std::to_string(i - 1), ymd(2010 + i));
  b.add_quad("W3", Relation::Author, "A0", ymd(2013));
  b.add_quad("W3", Relation::PublishedIn, "V0", ymd(2013));
  return b.finish();
}

}  // namespace

TEST(AverageRank, StrictlyHighestIsOne) {
  const std::vector<double> c = {0.1, 0.5, -2.0};
  EXPECT_EQ(average_rank(0.9, c), 1u);
}

TEST(AverageRank, ThousandAndOneEqualScoresGiveFiveHundredOne) {
  const std::vector<double> c(1000, 0.25);
  EXPECT_EQ(average_rank(0.25, c), 501u);
}

TEST(AverageRank, SingleTieRoundsHalfUp) {
  const std::vector<double> c = {1.0};
  EXPECT_EQ(average_rank(1.0, c), 2u);
}

TEST(AverageRank, NonFiniteScoreNamesCandidate) {
  const std::vector<double> c = {0.1, std::nan(""), 0.2};
  try {
    average_rank(0.5, c);
    FAIL();
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find('1'), std::string::npos) << e.what();
  }
  EXPECT_THROW(average_rank(std::numeric_limits<double>::infinity(), std::vector<double>{0.0}),
               NumericError);
}

TEST(RankTail, FilteringHigherKnownTailImprovesByOne) {
  const auto store = two_community_store();
  const KnownLinks known(store.quads());
  const EntityId w5 = *store.find("W5"), w4 = *store.find("W4");
  std::vector<double> t(store.num_entities(), 0.0);
  for (EntityId e = 0; e < t.size(); ++e) t[e] = static_cast<double>(e % 5);
  // a second true tail of W5 that outscores W4
  GraphStoreBuilder b;
  for (EntityId e = 0; e < store.num_entities(); ++e) b.entity(store.name(e), store.entity_class(e));
  for (const auto& q : store.quads()) b.add_quad(store.name(q.s), q.r, store.name(q.o), q.t);
  const EntityId w0 = *store.find("W0");
  b.add_quad("W5", Relation::Cites, "W0", ymd(2015));
  const auto store2 = b.finish();
  const KnownLinks known2(store2.quads());
  t[w0] = 100.0;
  TableScorer scorer(t);
  std::vector<EntityId> cands;
  for (EntityId e = 0; e < store.num_entities(); ++e)
    if (e != w4) cands.push_back(e);
  const Quad q{w5, Relation::Cites, w4, ymd(2015)};
  const auto unfiltered = rank_tail(scorer, q, cands, &known);
  const auto filtered = rank_tail(scorer, q, cands, &known2);
  EXPECT_EQ(unfiltered, filtered + 1);
}

TEST(RankTail, InvariantToCandidateOrder) {
  const auto store = random_store(3, 30);
  const KnownLinks known(store.quads());
  HashScorer scorer(4);
  Rng rng(1);
  for (const Quad& q : store.quads_of(Relation::Cites)) {
    std::vector<EntityId> c(store.num_entities());
    std::iota(c.begin(), c.end(), 0u);
    const auto r1 = rank_tail(scorer, q, c, &known);
    shuffle(c, rng);
    EXPECT_EQ(r1, rank_tail(scorer, q, c, &known));
  }
}

TEST(Aggregate, HandExample) {
  const std::vector<std::size_t> r = {1, 2, 4};
  const auto rep = aggregate(r);
  EXPECT_NEAR(rep.mrr, (1 + 0.5 + 0.25) / 3, 1e-15);
  EXPECT_NEAR(rep.mrr, 0.583333, 1e-6);
  EXPECT_NEAR(rep.hits1, 1.0 / 3, 1e-15);
  EXPECT_NEAR(rep.hits10, 1.0, 1e-15);
}

TEST(Aggregate, AllFirst) {
  const std::vector<std::size_t> r(5, 1);
  const auto rep = aggregate(r);
  EXPECT_EQ(rep.mrr, 1.0);
  EXPECT_EQ(rep.hits1, 1.0);
  EXPECT_EQ(rep.hits50, 1.0);
}

TEST(Aggregate, SingleDeepRank) {
  const std::vector<std::size_t> r = {1000};
  EXPECT_EQ(aggregate(r).hits50, 0.0);
  EXPECT_THROW(aggregate(std::vector<std::size_t>{}), ConfigError);
}

TEST(Aggregate, HitsNonDecreasingAndMrrInRange) {
  Rng rng(2);
  for (int rep = 0; rep < 100; ++rep) {
    std::vector<std::size_t> r(1 + uniform_index(rng, 50));
    for (auto& x : r) x = 1 + uniform_index(rng, 200);
    const auto a = aggregate(r);
    EXPECT_GT(a.mrr, 0.0);
    EXPECT_LE(a.mrr, 1.0);
    EXPECT_LE(a.hits1, a.hits10);
    EXPECT_LE(a.hits10, a.hits50);
  }
}

TEST(Strategies, EntityTypeGivesWorksForCites) {
  const auto store = random_store(5, 40, 10, 5, 4, 80);
  const KnownLinks known(store.quads());
  StrategyContext ctx{&store, &known};
  Rng rng(3);
  for (const Quad& q : store.quads_of(Relation::Cites)) {
    const auto s = sample_eval_negatives(Strategy::EntityType, q, 10, ctx, rng);
    for (auto e : s.candidates) EXPECT_EQ(store.entity_class(e), EntityClass::Work);
  }
}

TEST(Strategies, TimeConstrainedStaysInPeriod) {
  const auto store = random_store(6, 60, 10, 5, 4, 100);
  const KnownLinks known(store.quads());
  StrategyContext ctx{&store, &known};
  ctx.period_begin = ymd(2018);
  ctx.period_end = ymd(2021);
  Rng rng(3);
  for (const Quad& q : store.quads_of(Relation::Cites)) {
    const auto s = sample_eval_negatives(Strategy::TimeConstrained, q, 10, ctx, rng);
    for (auto e : s.candidates) {
      EXPECT_EQ(store.entity_class(e), EntityClass::Work);
      EXPECT_GE(*store.publication_date(e), ymd(2018));
      EXPECT_LT(*store.publication_date(e), ymd(2021));
    }
  }
}

TEST(Strategies, CommunityStaysInTargetCommunity) {
  const auto store = two_community_store();
  const KnownLinks known(store.quads());
  std::vector<std::int32_t> community(store.num_entities(), -1);
  for (int i = 0; i < 12; ++i) community[*store.find("W" + std::to_string(i))] = i < 6 ? 0 : 1;
  StrategyContext ctx{&store, &known};
  ctx.community = community;
  Rng rng(1);
  for (const Quad& q : store.quads_of(Relation::Cites)) {
    const auto s = sample_eval_negatives(Strategy::Community, q, 3, ctx, rng);
    for (auto e : s.candidates) EXPECT_EQ(community[e], community[q.o]);
    // exhaustive membership: every entity outside the community is excluded
    for (EntityId e = 0; e < store.num_entities(); ++e)
      if (community[e] != community[q.o]) EXPECT_FALSE(in_pool(Strategy::Community, q, e, ctx));
  }
}

TEST(Strategies, KnownTailsNeverSampled) {
  const auto store = random_store(7, 30, 5, 3, 3, 120);
  const KnownLinks known(store.quads());
  StrategyContext ctx{&store, &known};
  ctx.period_begin = ymd(2012);
  Rng rng(5);
  for (Strategy s : {Strategy::Random, Strategy::EntityType, Strategy::TimeConstrained, Strategy::Full})
    for (const Quad& q : store.quads_of(Relation::Cites)) {
      const auto sample = sample_eval_negatives(s, q, 20, ctx, rng);
      for (auto e : sample.candidates) {
        EXPECT_NE(e, q.o);
        EXPECT_FALSE(known.is_tail(q.s, q.r, e));
      }
    }
}

TEST(Strategies, WithoutReplacementWhenPoolAllows) {
  const auto store = random_store(8, 60);
  const KnownLinks known(store.quads());
  StrategyContext ctx{&store, &known};
  Rng rng(5);
  const Quad q = store.quads_of(Relation::Cites).front();
  const auto s = sample_eval_negatives(Strategy::Random, q, 30, ctx, rng);
  EXPECT_FALSE(s.with_replacement);
  EXPECT_EQ(std::set<EntityId>(s.candidates.begin(), s.candidates.end()).size(), 30u);
}

TEST(Strategies, SmallPoolFallsBackToReplacementWithFlag) {
  const auto store = random_store(8, 20);
  const KnownLinks known(store.quads());
  StrategyContext ctx{&store, &known};
  Rng rng(5);
  const Quad q = store.quads_of(Relation::Cites).front();
  const auto s = sample_eval_negatives(Strategy::EntityType, q, 500, ctx, rng);
  EXPECT_TRUE(s.with_replacement);
  EXPECT_EQ(s.candidates.size(), 500u);
}

TEST(Strategies, EmptyPoolIsAnErrorUnlessFallbackIsOn) {
  const auto store = two_community_store();
  const KnownLinks known(store.quads());
  std::vector<std::int32_t> community(store.num_entities(), -1);
  for (int i = 0; i < 12; ++i) community[*store.find("W" + std::to_string(i))] = i;
  StrategyContext ctx{&store, &known};
  ctx.community = community;
  const Quad q = store.quads_of(Relation::Cites).front();
  Rng rng(1);
  EXPECT_THROW(sample_eval_negatives(Strategy::Community, q, 5, ctx, rng), ConfigError);
  ctx.fallback_to_random = true;
  const auto s = sample_eval_negatives(Strategy::Community, q, 5, ctx, rng);
  EXPECT_TRUE(s.fallback);
  EXPECT_EQ(s.candidates.size(), 5u);
}

TEST(Strategies, PoolsNestInsideEntityType) {
  const auto store = random_store(9, 40, 8, 4, 3, 90);
  const KnownLinks known(store.quads());
  std::vector<std::int32_t> community(store.num_entities(), -1);
  for (EntityId e = 0; e < store.num_entities(); ++e)
    if (store.entity_class(e) == EntityClass::Work) community[e] = static_cast<std::int32_t>(e % 3);
  StrategyContext ctx{&store, &known};
  ctx.community = community;
  ctx.period_begin = ymd(2017);
  for (const Quad& q : store.quads_of(Relation::Cites))
    for (EntityId e = 0; e < store.num_entities(); ++e) {
      if (in_pool(Strategy::Community, q, e, ctx)) EXPECT_TRUE(in_pool(Strategy::EntityType, q, e, ctx));
      if (in_pool(Strategy::TimeConstrained, q, e, ctx))
        EXPECT_TRUE(in_pool(Strategy::EntityType, q, e, ctx));
    }
}

TEST(Strategies, RandomIsUniformUnderChiSquare) {
  const auto store = random_store(10, 60, 20, 10, 11);
  const KnownLinks known(store.quads());
  StrategyContext ctx{&store, &known};
  const Quad q = store.quads_of(Relation::Cites).front();
  std::map<EntityId, double> count;
  Rng rng(77);
  std::size_t total = 0;
  for (int rep = 0; rep < 1000; ++rep) {
    const auto s = sample_eval_negatives(Strategy::Random, q, 10, ctx, rng);
    for (auto e : s.candidates) count[e] += 1;
    total += s.candidates.size();
  }
  std::size_t pool = 0;
  for (EntityId e = 0; e < store.num_entities(); ++e)
    if (e != q.o && !known.is_tail(q.s, q.r, e)) ++pool;
  ASSERT_EQ(count.size(), pool);
  const double expect = static_cast<double>(total) / static_cast<double>(pool);
  double chi2 = 0;
  for (auto [e, c] : count) chi2 += (c - expect) * (c - expect) / expect;
  // without-replacement draws of 10 are less dispersed than independent ones,
  // so the usual critical value is conservative
  const double df = static_cast<double>(pool - 1);
  const double critical = df + 2.326 * std::sqrt(2 * df) + 2.0 / 3 * (2.326 * 2.326 - 1);  // ~1% point
  EXPECT_LT(chi2, critical);
}

TEST(FullRanking, EqualsRankTailOverAllEntities) {
  const auto store = random_store(11, 6, 2, 1, 1, 10);
  ASSERT_LE(store.num_entities(), 12u);
  const KnownLinks known(store.quads());
  StrategyContext ctx{&store, &known};
  HashScorer scorer(2);
  for (const Quad& q : store.quads_of(Relation::Cites)) {
    std::vector<EntityId> all(store.num_entities());
    std::iota(all.begin(), all.end(), 0u);
    EXPECT_EQ(full_ranking(scorer, q, ctx), rank_tail(scorer, q, all, &known));
  }
}

TEST(FullRanking, DominatesSampledStrategies) {
  const auto store = random_store(12, 40, 8, 4, 3, 90);
  const KnownLinks known(store.quads());
  StrategyContext ctx{&store, &known};
  ctx.period_begin = ymd(2015);
  HashScorer scorer(9);
  Rng rng(4);
  for (const Quad& q : store.quads_of(Relation::Cites)) {
    const auto full = full_ranking(scorer, q, ctx);
    for (Strategy s : {Strategy::Random, Strategy::EntityType}) {
      const auto sample = sample_eval_negatives(s, q, 15, ctx, rng);
      if (sample.with_replacement) continue;
      EXPECT_GE(full, rank_tail(scorer, q, sample.candidates, &known));
    }
  }
}

TEST(Evaluate, MatchesBruteForceOnFiftyEntityStores) {
  std::size_t queries = 0;
  for (std::uint64_t seed = 0; queries < 1000; ++seed) {
    const auto store = random_store(100 + seed, 30, 10, 5, 5, 60);
    ASSERT_LE(store.num_entities(), 50u);
    const KnownLinks known(store.quads());
    std::set<std::pair<EntityId, EntityId>> truth;
    for (const Quad& q : store.quads())
      if (q.r == Relation::Cites) truth.insert({q.s, q.o});
    StrategyContext ctx{&store, &known};
    HashScorer scorer(seed);
    const auto cites = store.quads_of(Relation::Cites);
    const std::vector<Quad> qs(cites.begin(), cites.end());
    EvalOptions opts;
    opts.strategy = Strategy::Full;
    const auto rep = evaluate(scorer, qs, ctx, opts);
    double mrr = 0, h1 = 0, h10 = 0;
    for (std::size_t i = 0; i < qs.size(); ++i) {
      const Quad& q = qs[i];
      std::vector<double> others;
      for (EntityId e = 0; e < store.num_entities(); ++e)
        if (e != q.o && !truth.count({q.s, e})) others.push_back(scorer.value(q.s, e));
      const auto r = brute_rank(scorer.value(q.s, q.o), others);
      ASSERT_EQ(rep.ranks[i], r);
      mrr += 1.0 / static_cast<double>(r);
      h1 += r <= 1;
      h10 += r <= 10;
    }
    const double n = static_cast<double>(qs.size());
    EXPECT_DOUBLE_EQ(rep.mrr, mrr / n);
    EXPECT_DOUBLE_EQ(rep.hits1, h1 / n);
    EXPECT_DOUBLE_EQ(rep.hits10, h10 / n);
    queries += qs.size();
  }
}

TEST(Evaluate, IndependentOfWorkerCount) {
  const auto store = random_store(13, 60, 10, 5, 4, 150);
  const KnownLinks known(store.quads());
  StrategyContext ctx{&store, &known};
  HashScorer scorer(1);
  const auto cites = store.quads_of(Relation::Cites);
  EvalOptions opts;
  opts.n_neg = 20;
  opts.seed = 42;
  const auto a = evaluate(scorer, cites, ctx, opts);
  opts.workers = 3;
  const auto b = evaluate(scorer, cites, ctx, opts);
  EXPECT_EQ(a.ranks, b.ranks);
}

TEST(Sweep, MrrWeaklyDecreasesOverNestedPools) {
  const auto store = random_store(14, 200, 40, 10, 10, 600);
  const KnownLinks known(store.quads());
  StrategyContext ctx{&store, &known};
  ctx.period_begin = ymd(2016);
  HashScorer scorer(3);
  const auto cites = store.quads_of(Relation::Cites);
  const std::vector<Strategy> strategies = {Strategy::Random, Strategy::EntityType,
                                            Strategy::TimeConstrained};
  const std::vector<std::size_t> counts = {1, 10, 100, kFullPool};
  const auto series = negative_count_sweep(scorer, cites, ctx, strategies, counts, 5);
  ASSERT_EQ(series.size(), strategies.size() * counts.size());
  for (std::size_t s = 0; s < strategies.size(); ++s) {
    for (std::size_t c = 1; c < counts.size(); ++c) {
      const auto& prev = series[s * counts.size() + c - 1];
      const auto& cur = series[s * counts.size() + c];
      EXPECT_EQ(cur.strategy, strategies[s]);
      EXPECT_LE(cur.report.mrr, prev.report.mrr);
      for (std::size_t i = 0; i < cites.size(); ++i) EXPECT_LE(prev.report.ranks[i], cur.report.ranks[i]);
    }
    for (auto r : series[s * counts.size()].report.ranks) EXPECT_TRUE(r == 1 || r == 2);
  }
}

TEST(Sweep, RejectsDescendingCounts) {
  const auto store = random_store(15);
  const KnownLinks known(store.quads());
  StrategyContext ctx{&store, &known};
  HashScorer scorer(3);
  const std::vector<Strategy> s = {Strategy::Random};
  const std::vector<std::size_t> counts = {100, 10};
  EXPECT_THROW(negative_count_sweep(scorer, store.quads(), ctx, s, counts, 1), ConfigError);
}

TEST(CitationReport, PositiveOnTopIsNotFlagged) {
  const std::vector<EntityId> negs = {5, 6, 7};
  const std::vector<double> scores = {0.2, 0.9, 0.4};
  const auto rec = make_citation_record(1, 2, 1.0, negs, scores);
  EXPECT_EQ(rec.rank, 1u);
  EXPECT_FALSE(rec.should_have);
  EXPECT_FALSE(rec.surprising);
  EXPECT_EQ(rec.top_negative, 6u);
  ASSERT_TRUE(rec.relative_score);
  EXPECT_LT(*rec.relative_score, 1.0);
}

TEST(CitationReport, RankFiveHundredOneIsSurprising) {
  std::vector<EntityId> negs(1000);
  std::iota(negs.begin(), negs.end(), 10u);
  std::vector<double> scores(1000);
  for (std::size_t i = 0; i < 1000; ++i) scores[i] = i < 500 ? 2.0 : 0.5;
  const auto rec = make_citation_record(1, 2, 1.0, negs, scores);
  EXPECT_EQ(rec.rank, 501u);
  EXPECT_TRUE(rec.surprising);
  EXPECT_TRUE(rec.should_have);
  scores[0] = 0.5;
  EXPECT_FALSE(make_citation_record(1, 2, 1.0, negs, scores).surprising);
}

TEST(CitationReport, RelativeScoreIsTheRatio) {
  const std::vector<EntityId> negs = {3, 4};
  const std::vector<double> scores = {2.927 * 0.8, 0.1};
  const auto rec = make_citation_record(1, 2, 0.8, negs, scores);
  ASSERT_TRUE(rec.relative_score);
  EXPECT_NEAR(*rec.relative_score, 2.927, 1e-12);
  EXPECT_TRUE(rec.should_have);
  EXPECT_FALSE(make_citation_record(1, 2, 0.0, negs, scores).relative_score);
}

TEST(CitationReport, SamplesUncitedWorks) {
  const auto store = random_store(16, 80, 10, 5, 4, 200);
  const KnownLinks known(store.quads());
  HashScorer scorer(6);
  const Quad q = store.quads_of(Relation::Cites).front();
  Rng rng(3);
  const auto rec = citation_report(scorer, store, known, q.s, q.o, q.t, 30, rng);
  EXPECT_EQ(rec.query, q.s);
  EXPECT_EQ(rec.positive, q.o);
  EXPECT_GE(rec.rank, 1u);
  ASSERT_NE(rec.top_negative, kNoEntity);
  EXPECT_EQ(store.entity_class(rec.top_negative), EntityClass::Work);
  EXPECT_FALSE(known.is_tail(q.s, Relation::Cites, rec.top_negative));
  const auto j = citation_json(rec, store);
  for (const char* key : {"query", "positive", "rank", "top_negative", "relative_score", "should_have", "surprising"})
    EXPECT_NE(j.find(key), std::string::npos) << key;
}

TEST(Reports, JsonShapes) {
  const auto store = random_store(17);
  const auto cites = store.quads_of(Relation::Cites);
  std::vector<std::size_t> r(cites.size(), 3);
  auto rep = aggregate(r);
  rep.strategy = "random";
  rep.n_neg = 1000;
  std::ostringstream out;
  write_ranking_jsonl(rep, cites, store, out);
  std::istringstream in(out.str());
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    for (const char* key : {"\"s\"", "\"r\"", "\"o\"", "\"t\"", "\"rank\"", "\"strategy\"", "\"n_neg\""})
      EXPECT_NE(line.find(key), std::string::npos) << line;
  }
  EXPECT_EQ(n, cites.size());
  const auto summary = summary_json(rep);
  for (const char* key : {"mrr", "hits1", "hits10", "hits50", "wall_s"})
    EXPECT_NE(summary.find(key), std::string::npos);
}
