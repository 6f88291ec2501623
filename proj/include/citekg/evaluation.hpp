#pragma once
// Filtered tail ranking, metrics, evaluation negative-sampling strategies,
// negative-count sweeps and citation anomaly reports.

#include <iosfwd>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "citekg/model.hpp"
#include "citekg/store.hpp"

namespace citekg::eval {

enum class Strategy { Random, EntityType, TimeConstrained, Community, Full };

std::string_view strategy_name(Strategy s);
std::optional<Strategy> parse_strategy(std::string_view s);

// Anything that can score candidate tails (and heads) for a query quad.
class Scorer {
 public:
  virtual ~Scorer() = default;
  virtual void score_tails(const Quad& q, std::span<const EntityId> candidates,
                           std::span<double> out) const = 0;
  virtual void score_heads(const Quad& q, std::span<const EntityId> candidates,
                           std::span<double> out) const = 0;
};

class ModelScorer : public Scorer {
 public:
  explicit ModelScorer(const kge::Model& model) : model_(model) {}
  void score_tails(const Quad& q, std::span<const EntityId> c, std::span<double> out) const override {
    model_.score_tails(q.s, q.r, q.t, c, out);
  }
  void score_heads(const Quad& q, std::span<const EntityId> c, std::span<double> out) const override {
    model_.score_heads(q.o, q.r, q.t, c, out);
  }

 private:
  const kge::Model& model_;
};

// All known true tails of (s, r) and heads of (r, o) over every quad of the
// store, regardless of split.
class KnownLinks {
 public:
  KnownLinks() = default;
  explicit KnownLinks(std::span<const Quad> quads);
  std::span<const EntityId> tails(EntityId s, Relation r) const;
  std::span<const EntityId> heads(Relation r, EntityId o) const;
  bool is_tail(EntityId s, Relation r, EntityId o) const;
  bool is_head(EntityId s, Relation r, EntityId o) const;

 private:
  static std::uint64_t key(EntityId e, Relation r) {
    return (static_cast<std::uint64_t>(e) << 8) | static_cast<std::uint64_t>(r);
  }
  std::unordered_map<std::uint64_t, std::vector<EntityId>> tails_, heads_;
};

// 1 + #greater + ceil(#equal / 2): average rank of the true candidate among
// tied competitors, halves rounded up. Throws NumericError on non-finite
// scores, naming the offending candidate index.
std::size_t average_rank(double true_score, std::span<const double> competitor_scores);

// Filtered rank of q.o against `candidates`. Candidates equal to q.o or to
// another known true tail of (q.s, q.r) are skipped.
std::size_t rank_tail(const Scorer& scorer, const Quad& q, std::span<const EntityId> candidates,
                      const KnownLinks* known);

struct RankingReport {
  std::vector<std::size_t> ranks;
  double mrr = 0.0;
  double hits1 = 0.0;
  double hits10 = 0.0;
  double hits50 = 0.0;
  std::string strategy;
  std::size_t n_neg = 0;
  double wall_s = 0.0;
  std::size_t with_replacement = 0;  // queries whose pool was smaller than n_neg
  std::size_t fallbacks = 0;         // queries that fell back to random sampling
};

// Throws ConfigError on an empty rank list.
RankingReport aggregate(std::span<const std::size_t> ranks);

// What the strategies need besides the store.
struct StrategyContext {
  const GraphStore* store = nullptr;
  const KnownLinks* known = nullptr;
  Date period_begin{std::numeric_limits<std::int32_t>::min()};
  std::optional<Date> period_end;             // exclusive
  std::span<const std::int32_t> community;    // label per entity, -1 = none
  bool works_only = false;                    // full ranking restricted to Works
  bool fallback_to_random = false;            // empty pool: sample randomly instead of failing
};

struct NegativeSample {
  std::vector<EntityId> candidates;
  bool with_replacement = false;
  bool fallback = false;
};

// Whether `e` belongs to the strategy's candidate pool for query q (before
// filtering).
bool in_pool(Strategy s, const Quad& q, EntityId e, const StrategyContext& ctx);

// n candidates drawn from the strategy pool minus the target and its known
// true tails; without replacement when the pool allows, with replacement
// otherwise. Full returns the whole filtered pool. Throws ConfigError when
// the pool is empty and fallback is off.
NegativeSample sample_eval_negatives(Strategy s, const Quad& q, std::size_t n,
                                     const StrategyContext& ctx, Rng& rng);

struct EvalOptions {
  Strategy strategy = Strategy::Random;
  std::size_t n_neg = 1000;
  std::uint64_t seed = 0;
  std::size_t workers = 1;
  bool heads = false;  // rank heads instead of tails (filtered on known heads)
};

// Ranks every query; query i draws from Rng(mix_seed(seed, i)) so results
// do not depend on the worker count.
RankingReport evaluate(const Scorer& scorer, std::span<const Quad> queries,
                       const StrategyContext& ctx, const EvalOptions& opts);

// Rank against every entity (or every Work), filtered.
std::size_t full_ranking(const Scorer& scorer, const Quad& q, const StrategyContext& ctx);

inline constexpr std::size_t kFullPool = std::numeric_limits<std::size_t>::max();

struct SweepPoint {
  Strategy strategy;
  std::size_t count;  // kFullPool for the whole pool
  RankingReport report;
};

// Per query and strategy, one without-replacement ordering of the filtered
// pool; each count ranks against its prefix, so pools are nested and MRR is
// weakly decreasing in count. Counts must be ascending.
std::vector<SweepPoint> negative_count_sweep(const Scorer& scorer, std::span<const Quad> queries,
                                             const StrategyContext& ctx,
                                             std::span<const Strategy> strategies,
                                             std::span<const std::size_t> counts,
                                             std::uint64_t seed, std::size_t workers = 1);

struct CitationRecord {
  EntityId query = 0;
  EntityId positive = 0;
  std::size_t rank = 0;
  EntityId top_negative = kNoEntity;
  double positive_score = 0.0;
  double top_negative_score = 0.0;
  std::optional<double> relative_score;  // top negative / positive; undefined for a zero positive
  bool should_have = false;              // a negative outscores the positive
  bool surprising = false;               // rank > 500
};

inline constexpr std::size_t kSurprisingRank = 500;

// Ranks the positive citation against n random Works that the query does
// not cite.
CitationRecord citation_report(const Scorer& scorer, const GraphStore& store,
                               const KnownLinks& known, EntityId query, EntityId positive,
                               Date t, std::size_t n, Rng& rng);
// Same record built from precomputed scores.
CitationRecord make_citation_record(EntityId query, EntityId positive, double positive_score,
                                    std::span<const EntityId> negatives,
                                    std::span<const double> negative_scores);

// JSON-lines / JSON writers.
void write_ranking_jsonl(const RankingReport& rep, std::span<const Quad> queries,
                         const GraphStore& store, std::ostream& out);
std::string summary_json(const RankingReport& rep);
std::string citation_json(const CitationRecord& rec, const GraphStore& store);

}  // namespace citekg::eval
