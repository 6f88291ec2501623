#include "citekg/evaluation.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <functional>
#include <cmath>
#include <numeric>
#include <ostream>
#include <thread>
#include <unordered_set>

#include "json.hpp"

namespace citekg::eval {

namespace {

using nlohmann::json;

// Candidate pool of one strategy for one query, before filtering.
struct Pools {
  const StrategyContext& ctx;
  std::vector<EntityId> all, works_in_period;
  std::unordered_map<std::int32_t, std::vector<EntityId>> by_community;

  explicit Pools(const StrategyContext& c) : ctx(c) {
    const auto& g = *ctx.store;
    all.resize(g.num_entities());
    std::iota(all.begin(), all.end(), EntityId{0});
    for (EntityId w : g.entities_of_class(EntityClass::Work))
      if (in_pool(Strategy::TimeConstrained, Quad{0, Relation::Cites, w, {}}, w, ctx))
        works_in_period.push_back(w);
    for (EntityId e = 0; e < ctx.community.size() && e < g.num_entities(); ++e)
      if (ctx.community[e] >= 0) by_community[ctx.community[e]].push_back(e);
  }

  std::span<const EntityId> get(Strategy s, EntityId target) const {
    const auto& g = *ctx.store;
    switch (s) {
      case Strategy::Random:
        return all;
      case Strategy::Full:
        return ctx.works_only ? g.entities_of_class(EntityClass::Work) : std::span<const EntityId>(all);
      case Strategy::EntityType:
        return g.entities_of_class(g.entity_class(target));
      case Strategy::TimeConstrained:
        return works_in_period;
      case Strategy::Community: {
        if (target >= ctx.community.size() || ctx.community[target] < 0) return {};
        auto it = by_community.find(ctx.community[target]);
        return it == by_community.end() ? std::span<const EntityId>{} : std::span<const EntityId>(it->second);
      }
    }
    return {};
  }
};

// Target of the ranking and the ids filtered out of its pool.
struct Filter {
  EntityId target;
  std::span<const EntityId> known;  // sorted
  EntityId extra = kNoEntity;

  bool excluded(EntityId e) const {
    return e == target || e == extra || std::binary_search(known.begin(), known.end(), e);
  }
};

Filter make_filter(const Quad& q, const StrategyContext& ctx, bool heads) {
  Filter f{heads ? q.s : q.o, {}};
  if (ctx.known) f.known = heads ? ctx.known->heads(q.r, q.o) : ctx.known->tails(q.s, q.r);
  return f;
}

// Pool members that survive the filter, counted without scanning the pool.
std::size_t effective_size(std::span<const EntityId> pool, const Filter& f,
                           const std::function<bool(EntityId)>& member) {
  std::size_t excl = 0;
  auto count = [&](EntityId e) {
    if (member(e)) ++excl;
  };
  bool target_known = std::binary_search(f.known.begin(), f.known.end(), f.target);
  for (EntityId e : f.known) count(e);
  if (!target_known) count(f.target);
  if (f.extra != kNoEntity && f.extra != f.target &&
      !std::binary_search(f.known.begin(), f.known.end(), f.extra))
    count(f.extra);
  return pool.size() - std::min(excl, pool.size());
}

// Up to n distinct survivors in uniformly random order; with_replacement
// instead when `allow_replacement` and fewer than n survive.
NegativeSample draw(std::span<const EntityId> pool, const Filter& f,
                    const std::function<bool(EntityId)>& member, std::size_t n, Rng& rng,
                    bool allow_replacement) {
  NegativeSample out;
  const std::size_t eff = effective_size(pool, f, member);
  if (eff == 0 || n == 0) return out;
  if (n >= eff || eff <= 4 * n) {
    std::vector<EntityId> survivors;
    survivors.reserve(eff);
    for (EntityId e : pool)
      if (!f.excluded(e)) survivors.push_back(e);
    if (n > survivors.size() && allow_replacement) {
      out.with_replacement = true;
      out.candidates.resize(n);
      for (auto& e : out.candidates) e = survivors[uniform_index(rng, survivors.size())];
      return out;
    }
    const std::size_t k = std::min(n, survivors.size());
    for (std::size_t i = 0; i < k; ++i)
      std::swap(survivors[i], survivors[i + uniform_index(rng, survivors.size() - i)]);
    survivors.resize(k);
    out.candidates = std::move(survivors);
    return out;
  }
  std::unordered_set<EntityId> chosen;
  out.candidates.reserve(n);
  while (out.candidates.size() < n) {
    const EntityId e = pool[uniform_index(rng, pool.size())];
    if (f.excluded(e) || !chosen.insert(e).second) continue;
    out.candidates.push_back(e);
  }
  return out;
}

std::function<bool(EntityId)> membership(Strategy s, const Quad& q, const StrategyContext& ctx,
                                         bool heads) {
  // in_pool is phrased for tails; mirror the query for heads
  const Quad probe = heads ? Quad{q.o, q.r, q.s, q.t} : q;
  return [s, probe, &ctx](EntityId e) { return in_pool(s, probe, e, ctx); };
}

NegativeSample sample_impl(Strategy s, const Quad& q, std::size_t n, const StrategyContext& ctx,
                           const Pools& pools, Rng& rng, bool heads, bool allow_replacement) {
  const Filter f = make_filter(q, ctx, heads);
  auto pool = pools.get(s, f.target);
  auto member = membership(s, q, ctx, heads);
  if (s == Strategy::Full) n = pool.size();
  NegativeSample out = draw(pool, f, member, n, rng, allow_replacement && s != Strategy::Full);
  if (!out.candidates.empty()) return out;
  if (!ctx.fallback_to_random || s == Strategy::Random)
    throw ConfigError("empty candidate pool for strategy " + std::string(strategy_name(s)) +
                      " at query " + ctx.store->name(q.s) + " -> " + ctx.store->name(q.o));
  out = draw(pools.get(Strategy::Random, f.target), f, membership(Strategy::Random, q, ctx, heads), n,
             rng, allow_replacement);
  out.fallback = true;
  if (out.candidates.empty()) throw ConfigError("empty candidate pool");
  return out;
}

std::size_t score_and_rank(const Scorer& scorer, const Quad& q, std::span<const EntityId> cands,
                           bool heads, std::vector<EntityId>& ids, std::vector<double>& scores) {
  ids.assign(1, heads ? q.s : q.o);
  ids.insert(ids.end(), cands.begin(), cands.end());
  scores.resize(ids.size());
  if (heads)
    scorer.score_heads(q, ids, scores);
  else
    scorer.score_tails(q, ids, scores);
  return average_rank(scores[0], std::span<const double>(scores).subspan(1));
}

template <typename F>
void parallel_for(std::size_t n, std::size_t workers, F&& body) {
  if (workers <= 1 || n < 2) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::jthread> pool;
  for (std::size_t w = 0; w < std::min(workers, n); ++w)
    pool.emplace_back([&] {
      for (std::size_t i; (i = next.fetch_add(1)) < n;) body(i);
    });
}

}  // namespace

std::string_view strategy_name(Strategy s) {
  switch (s) {
    case Strategy::Random:
      return "random";
    case Strategy::EntityType:
      return "entity_type";
    case Strategy::TimeConstrained:
      return "time_constrained";
    case Strategy::Community:
      return "community";
    case Strategy::Full:
      return "full";
  }
  return "?";
}

std::optional<Strategy> parse_strategy(std::string_view s) {
  for (auto st : {Strategy::Random, Strategy::EntityType, Strategy::TimeConstrained,
                  Strategy::Community, Strategy::Full})
    if (s == strategy_name(st)) return st;
  return std::nullopt;
}

KnownLinks::KnownLinks(std::span<const Quad> quads) {
  for (const Quad& q : quads) {
    tails_[key(q.s, q.r)].push_back(q.o);
    heads_[key(q.o, q.r)].push_back(q.s);
  }
  for (auto* m : {&tails_, &heads_})
    for (auto& [k, v] : *m) {
      std::sort(v.begin(), v.end());
      v.erase(std::unique(v.begin(), v.end()), v.end());
    }
}

std::span<const EntityId> KnownLinks::tails(EntityId s, Relation r) const {
  auto it = tails_.find(key(s, r));
  return it == tails_.end() ? std::span<const EntityId>{} : std::span<const EntityId>(it->second);
}

std::span<const EntityId> KnownLinks::heads(Relation r, EntityId o) const {
  auto it = heads_.find(key(o, r));
  return it == heads_.end() ? std::span<const EntityId>{} : std::span<const EntityId>(it->second);
}

bool KnownLinks::is_tail(EntityId s, Relation r, EntityId o) const {
  auto t = tails(s, r);
  return std::binary_search(t.begin(), t.end(), o);
}

bool KnownLinks::is_head(EntityId s, Relation r, EntityId o) const {
  auto h = heads(r, o);
  return std::binary_search(h.begin(), h.end(), s);
}

std::size_t average_rank(double true_score, std::span<const double> competitors) {
  if (!std::isfinite(true_score)) throw NumericError("non-finite score for the true candidate");
  std::size_t greater = 0, equal = 0;
  for (std::size_t i = 0; i < competitors.size(); ++i) {
    const double c = competitors[i];
    if (!std::isfinite(c))
      throw NumericError("non-finite score for candidate " + std::to_string(i));
    if (c > true_score) ++greater;
    else if (c == true_score) ++equal;
  }
  return 1 + greater + (equal + 1) / 2;
}

std::size_t rank_tail(const Scorer& scorer, const Quad& q, std::span<const EntityId> candidates,
                      const KnownLinks* known) {
  std::vector<EntityId> kept;
  kept.reserve(candidates.size());
  for (EntityId e : candidates)
    if (e != q.o && !(known && known->is_tail(q.s, q.r, e))) kept.push_back(e);
  std::vector<EntityId> ids;
  std::vector<double> scores;
  return score_and_rank(scorer, q, kept, false, ids, scores);
}

RankingReport aggregate(std::span<const std::size_t> ranks) {
  if (ranks.empty()) throw ConfigError("cannot aggregate an empty rank list");
  RankingReport rep;
  rep.ranks.assign(ranks.begin(), ranks.end());
  double rr = 0;
  std::size_t h1 = 0, h10 = 0, h50 = 0;
  for (std::size_t r : ranks) {
    rr += 1.0 / static_cast<double>(r);
    h1 += r <= 1;
    h10 += r <= 10;
    h50 += r <= 50;
  }
  const double n = static_cast<double>(ranks.size());
  rep.mrr = rr / n;
  rep.hits1 = static_cast<double>(h1) / n;
  rep.hits10 = static_cast<double>(h10) / n;
  rep.hits50 = static_cast<double>(h50) / n;
  return rep;
}

bool in_pool(Strategy s, const Quad& q, EntityId e, const StrategyContext& ctx) {
  const auto& g = *ctx.store;
  if (e >= g.num_entities()) return false;
  switch (s) {
    case Strategy::Random:
      return true;
    case Strategy::Full:
      return !ctx.works_only || g.entity_class(e) == EntityClass::Work;
    case Strategy::EntityType:
      return g.entity_class(e) == g.entity_class(q.o);
    case Strategy::TimeConstrained: {
      if (g.entity_class(e) != EntityClass::Work) return false;
      const auto d = g.publication_date(e);
      return d && *d >= ctx.period_begin && (!ctx.period_end || *d < *ctx.period_end);
    }
    case Strategy::Community:
      return q.o < ctx.community.size() && e < ctx.community.size() && ctx.community[q.o] >= 0 &&
             ctx.community[e] == ctx.community[q.o];
  }
  return false;
}

NegativeSample sample_eval_negatives(Strategy s, const Quad& q, std::size_t n,
                                     const StrategyContext& ctx, Rng& rng) {
  Pools pools(ctx);
  return sample_impl(s, q, n, ctx, pools, rng, false, true);
}

std::size_t full_ranking(const Scorer& scorer, const Quad& q, const StrategyContext& ctx) {
  Pools pools(ctx);
  Rng rng(0);
  auto sample = sample_impl(Strategy::Full, q, 0, ctx, pools, rng, false, false);
  std::vector<EntityId> ids;
  std::vector<double> scores;
  return score_and_rank(scorer, q, sample.candidates, false, ids, scores);
}

RankingReport evaluate(const Scorer& scorer, std::span<const Quad> queries,
                       const StrategyContext& ctx, const EvalOptions& opts) {
  const auto t0 = std::chrono::steady_clock::now();
  Pools pools(ctx);
  std::vector<std::size_t> ranks(queries.size());
  std::vector<std::uint8_t> repl(queries.size()), fb(queries.size());
  parallel_for(queries.size(), opts.workers, [&](std::size_t i) {
    Rng rng(mix_seed(opts.seed, i));
    const Quad& q = queries[i];
    auto sample = sample_impl(opts.strategy, q, opts.n_neg, ctx, pools, rng, opts.heads, true);
    thread_local std::vector<EntityId> ids;
    thread_local std::vector<double> scores;
    ranks[i] = score_and_rank(scorer, q, sample.candidates, opts.heads, ids, scores);
    repl[i] = sample.with_replacement;
    fb[i] = sample.fallback;
  });
  RankingReport rep = aggregate(ranks);
  rep.strategy = strategy_name(opts.strategy);
  rep.n_neg = opts.strategy == Strategy::Full ? 0 : opts.n_neg;
  rep.with_replacement = static_cast<std::size_t>(std::count(repl.begin(), repl.end(), 1));
  rep.fallbacks = static_cast<std::size_t>(std::count(fb.begin(), fb.end(), 1));
  rep.wall_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rep;
}

std::vector<SweepPoint> negative_count_sweep(const Scorer& scorer, std::span<const Quad> queries,
                                             const StrategyContext& ctx,
                                             std::span<const Strategy> strategies,
                                             std::span<const std::size_t> counts,
                                             std::uint64_t seed, std::size_t workers) {
  if (!std::is_sorted(counts.begin(), counts.end()))
    throw ConfigError("sweep counts must be ascending");
  if (counts.empty() || counts.front() == 0) throw ConfigError("sweep counts must be positive");
  Pools pools(ctx);
  std::vector<SweepPoint> out;
  for (std::size_t si = 0; si < strategies.size(); ++si) {
    const Strategy s = strategies[si];
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<std::vector<std::size_t>> ranks(counts.size(), std::vector<std::size_t>(queries.size()));
    std::vector<std::uint8_t> fb(queries.size());
    parallel_for(queries.size(), workers, [&](std::size_t i) {
      Rng rng(mix_seed(mix_seed(seed, si), i));
      const Quad& q = queries[i];
      // one ordering of the whole needed prefix, never with replacement
      auto sample = sample_impl(s, q, counts.back(), ctx, pools, rng, false, false);
      fb[i] = sample.fallback;
      std::vector<EntityId> ids;
      std::vector<double> scores;
      score_and_rank(scorer, q, sample.candidates, false, ids, scores);
      const auto comp = std::span<const double>(scores).subspan(1);
      for (std::size_t c = 0; c < counts.size(); ++c)
        ranks[c][i] = average_rank(scores[0], comp.first(std::min(counts[c], comp.size())));
    });
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    for (std::size_t c = 0; c < counts.size(); ++c) {
      SweepPoint p{s, counts[c], aggregate(ranks[c])};
      p.report.strategy = strategy_name(s);
      p.report.n_neg = counts[c] == kFullPool ? 0 : counts[c];
      p.report.fallbacks = static_cast<std::size_t>(std::count(fb.begin(), fb.end(), 1));
      p.report.wall_s = wall;
      out.push_back(std::move(p));
    }
  }
  return out;
}

CitationRecord make_citation_record(EntityId query, EntityId positive, double positive_score,
                                    std::span<const EntityId> negatives,
                                    std::span<const double> negative_scores) {
  CitationRecord rec;
  rec.query = query;
  rec.positive = positive;
  rec.positive_score = positive_score;
  rec.rank = average_rank(positive_score, negative_scores);
  if (!negatives.empty()) {
    const auto best = std::max_element(negative_scores.begin(), negative_scores.end()) -
                      negative_scores.begin();
    rec.top_negative = negatives[static_cast<std::size_t>(best)];
    rec.top_negative_score = negative_scores[static_cast<std::size_t>(best)];
    if (positive_score != 0.0) rec.relative_score = rec.top_negative_score / positive_score;
    rec.should_have = rec.top_negative_score > positive_score;
  }
  rec.surprising = rec.rank > kSurprisingRank;
  return rec;
}

CitationRecord citation_report(const Scorer& scorer, const GraphStore& store,
                               const KnownLinks& known, EntityId query, EntityId positive, Date t,
                               std::size_t n, Rng& rng) {
  if (query >= store.num_entities() || positive >= store.num_entities())
    throw ConfigError("citation report: unknown paper id");
  const Quad q{query, Relation::Cites, positive, t};
  Filter f{positive, known.tails(query, Relation::Cites), query};
  auto works = store.entities_of_class(EntityClass::Work);
  auto member = [&](EntityId e) { return store.entity_class(e) == EntityClass::Work; };
  auto sample = draw(works, f, member, n, rng, true);
  std::vector<EntityId> ids;
  std::vector<double> scores;
  score_and_rank(scorer, q, sample.candidates, false, ids, scores);
  return make_citation_record(query, positive, scores[0], sample.candidates,
                              std::span<const double>(scores).subspan(1));
}

void write_ranking_jsonl(const RankingReport& rep, std::span<const Quad> queries,
                         const GraphStore& store, std::ostream& out) {
  for (std::size_t i = 0; i < queries.size() && i < rep.ranks.size(); ++i) {
    const Quad& q = queries[i];
    json j;
    j["s"] = store.name(q.s);
    j["r"] = relation_label(q.r);
    j["o"] = store.name(q.o);
    j["t"] = format_date(q.t);
    j["rank"] = rep.ranks[i];
    j["strategy"] = rep.strategy;
    j["n_neg"] = rep.n_neg;
    out << j.dump() << '\n';
  }
}

std::string summary_json(const RankingReport& rep) {
  json j;
  j["mrr"] = rep.mrr;
  j["hits1"] = rep.hits1;
  j["hits10"] = rep.hits10;
  j["hits50"] = rep.hits50;
  j["wall_s"] = rep.wall_s;
  j["queries"] = rep.ranks.size();
  j["strategy"] = rep.strategy;
  j["n_neg"] = rep.n_neg;
  j["with_replacement"] = rep.with_replacement;
  j["fallbacks"] = rep.fallbacks;
  j["tie_rule"] = "average";
  j["random_pool"] = "all entities";
  return j.dump();
}

std::string citation_json(const CitationRecord& rec, const GraphStore& store) {
  json j;
  j["query"] = store.name(rec.query);
  j["positive"] = store.name(rec.positive);
  j["rank"] = rec.rank;
  j["top_negative"] = rec.top_negative == kNoEntity ? json(nullptr) : json(store.name(rec.top_negative));
  j["relative_score"] = rec.relative_score ? json(*rec.relative_score) : json(nullptr);
  j["flags"] = {{"should_have", rec.should_have}, {"surprising", rec.surprising}};
  return j.dump();
}

}  // namespace citekg::eval
