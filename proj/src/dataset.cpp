#include "citekg/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <deque>
#include <sstream>

namespace citekg {

namespace {

// Concepts linked to kept works plus all their ancestors.
void keep_concept_closure(const GraphStore& store, std::vector<bool>& keep) {
  std::vector<std::vector<EntityId>> parents(store.num_entities());
  for (const auto& cp : store.concept_parents()) parents[cp.child].push_back(cp.parent);
  std::vector<EntityId> stack;
  for (const auto& cl : store.concept_links())
    if (keep[cl.work] && !keep[cl.topic]) {
      keep[cl.topic] = true;
      stack.push_back(cl.topic);
    }
  while (!stack.empty()) {
    const EntityId c = stack.back();
    stack.pop_back();
    for (EntityId p : parents[c])
      if (!keep[p]) {
        keep[p] = true;
        stack.push_back(p);
      }
  }
}

}  // namespace

GraphStore drop_isolated_works(const GraphStore& store) {
  std::vector<bool> keep(store.num_entities(), true);
  for (EntityId w : store.entities_of_class(EntityClass::Work))
    keep[w] = !store.out_edges(w, Relation::Cites).empty() ||
              !store.in_edges(w, Relation::Cites).empty();
  return store.restrict(std::vector<bool>(store.num_quads(), true), keep);
}

SampleResult snowball_sample(const GraphStore& store, std::size_t target_works, std::size_t seeds,
                             std::uint64_t rng_seed) {
  auto works_span = store.entities_of_class(EntityClass::Work);
  if (target_works > works_span.size())
    throw ConfigError("snowball target of " + std::to_string(target_works) +
                      " works exceeds the " + std::to_string(works_span.size()) + " available");
  Rng rng(rng_seed);
  std::vector<EntityId> works(works_span.begin(), works_span.end());
  const std::size_t n_seeds = std::min({seeds, target_works, works.size()});
  for (std::size_t i = 0; i < n_seeds; ++i) {
    const std::size_t j = i + uniform_index(rng, works.size() - i);
    std::swap(works[i], works[j]);
  }

  std::vector<bool> visited(store.num_entities(), false);
  std::deque<EntityId> queue;
  std::size_t count = 0;
  for (std::size_t i = 0; i < n_seeds; ++i) {
    visited[works[i]] = true;
    queue.push_back(works[i]);
    ++count;
  }
  std::vector<EntityId> nbrs;
  while (!queue.empty() && count < target_works) {
    const EntityId u = queue.front();
    queue.pop_front();
    nbrs.clear();
    for (const auto& e : store.out_edges(u, Relation::Cites)) nbrs.push_back(e.neighbor);
    for (const auto& e : store.in_edges(u, Relation::Cites)) nbrs.push_back(e.neighbor);
    shuffle(nbrs, rng);
    for (EntityId v : nbrs) {
      if (visited[v]) continue;
      visited[v] = true;
      queue.push_back(v);
      if (++count == target_works) break;
    }
  }

  SampleResult result;
  result.target_reached = count >= target_works;
  std::vector<bool> sampled_author(store.num_entities(), false);
  std::vector<bool> keep_quad(store.num_quads(), false);
  const auto quads = store.quads();
  for (std::size_t i = 0; i < quads.size(); ++i) {
    const Quad& q = quads[i];
    if (q.r == Relation::Cites) {
      keep_quad[i] = visited[q.s] && visited[q.o];
    } else if (q.r != Relation::Affiliation && visited[q.s]) {
      keep_quad[i] = true;
      if (q.r == Relation::Author) sampled_author[q.o] = true;
    }
  }
  for (std::size_t i = 0; i < quads.size(); ++i)
    if (quads[i].r == Relation::Affiliation && sampled_author[quads[i].s]) keep_quad[i] = true;

  std::vector<bool> keep(store.num_entities(), false);
  for (std::size_t i = 0; i < quads.size(); ++i)
    if (keep_quad[i]) keep[quads[i].s] = keep[quads[i].o] = true;
  for (EntityId w : works_span) keep[w] = visited[w] && store.publication_date(w).has_value();
  keep_concept_closure(store, keep);
  result.store = store.restrict(keep_quad, keep);
  result.sampled_works = result.store.count_class(EntityClass::Work);
  return result;
}

// ---------------------------------------------------------------------------

ClassSet ClassSet::all() {
  ClassSet s;
  s.insert(EntityClass::Work)
      .insert(EntityClass::Author)
      .insert(EntityClass::Venue)
      .insert(EntityClass::Institution);
  return s;
}

ClassSet ClassSet::parse(const std::string& text) {
  ClassSet s;
  std::stringstream ss(text);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (tok.empty()) continue;
    std::string l;
    for (char c : tok) l += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    if (l == "w" || l == "works" || l == "work") s.insert(EntityClass::Work);
    else if (l == "a" || l == "authors" || l == "author") s.insert(EntityClass::Author);
    else if (l == "v" || l == "venues" || l == "venue") s.insert(EntityClass::Venue);
    else if (l == "i" || l == "institutions" || l == "institution") s.insert(EntityClass::Institution);
    else throw ConfigError("unknown node type '" + tok + "' in ablation set");
  }
  return s;
}

std::string ClassSet::variant_name() const {
  std::string out;
  if (!contains(EntityClass::Venue)) out += "-V";
  if (!contains(EntityClass::Author)) out += "-A";
  if (!contains(EntityClass::Institution)) out += "-I";
  return out.empty() ? "Full" : out;
}

void validate_ablation(ClassSet keep) {
  if (!keep.contains(EntityClass::Work))
    throw ConfigError("invalid ablation: publications must be kept, the task predicts links between them");
  if (keep.contains(EntityClass::Institution) && !keep.contains(EntityClass::Author))
    throw ConfigError("invalid ablation: institution nodes cannot be kept without author nodes");
}

GraphStore ablation_variant(const GraphStore& store, ClassSet keep) {
  validate_ablation(keep);
  std::vector<bool> keep_entity(store.num_entities());
  for (EntityId e = 0; e < store.num_entities(); ++e) {
    const EntityClass c = store.entity_class(e);
    keep_entity[e] = c == EntityClass::Concept || keep.contains(c);
  }
  return store.restrict(std::vector<bool>(store.num_quads(), true), keep_entity);
}

// ---------------------------------------------------------------------------

std::string_view mode_name(SplitMode m) {
  return m == SplitMode::Transductive ? "transductive" : "inductive";
}

std::optional<SplitMode> parse_mode(std::string_view s) {
  if (s == "transductive") return SplitMode::Transductive;
  if (s == "inductive") return SplitMode::Inductive;
  return std::nullopt;
}

std::vector<Quad> TemporalSplit::training_quads() const {
  std::vector<Quad> out = train;
  if (mode == SplitMode::Transductive) out.insert(out.end(), exo.begin(), exo.end());
  return out;
}

std::vector<Quad> TemporalSplit::auxiliary_links() const {
  return mode == SplitMode::Inductive ? exo : std::vector<Quad>{};
}

TemporalSplit classify_split(const GraphStore& store, Date t_valid, Date t_test, SplitMode mode,
                             SplitPhase phase) {
  if (!(t_valid < t_test)) throw ConfigError("split thresholds require t_valid < t_test");
  TemporalSplit sp;
  sp.t_valid = t_valid;
  sp.t_test = t_test;
  sp.mode = mode;
  sp.phase = phase;
  const Date thr = sp.threshold();
  const std::size_t n = store.num_entities();

  // Dated Works are classified by their own date; everything else is seen iff
  // it takes part in a pre-threshold link between non-late entities.
  auto dated_at_or_after = [&](EntityId e, Date d) {
    const auto pd = store.publication_date(e);
    return store.entity_class(e) == EntityClass::Work && pd && *pd >= d;
  };
  auto is_future = [&](const Quad& q) {
    return phase == SplitPhase::Validation &&
           (q.t >= t_test || dated_at_or_after(q.s, t_test) || dated_at_or_after(q.o, t_test));
  };

  sp.seen.assign(n, false);
  for (EntityId e = 0; e < n; ++e)
    if (store.entity_class(e) == EntityClass::Work && store.publication_date(e))
      sp.seen[e] = *store.publication_date(e) < thr;
  for (const Quad& q : store.quads()) {
    if (q.t >= thr || is_future(q) || dated_at_or_after(q.s, thr) || dated_at_or_after(q.o, thr))
      continue;
    sp.seen[q.s] = sp.seen[q.o] = true;
  }

  for (const Quad& q : store.quads()) {
    if (is_future(q)) {
      sp.future.push_back(q);
      continue;
    }
    const bool late = dated_at_or_after(q.s, thr) || dated_at_or_after(q.o, thr);
    if (q.t < thr && !late) {
      sp.train.push_back(q);
    } else if (q.r == Relation::Cites && q.t >= thr && !sp.seen[q.s] && !sp.seen[q.o]) {
      sp.eval_targets.push_back(q);
    } else if (sp.seen[q.s] || sp.seen[q.o]) {
      sp.exo.push_back(q);
    } else {
      sp.unattached.push_back(q);
    }
  }
  return sp;
}

TemporalSplit temporal_split(const GraphStore& store, Date t_valid, Date t_test, SplitMode mode) {
  TemporalSplit sp = classify_split(store, t_valid, t_test, mode, SplitPhase::Validation);
  if (sp.train.empty()) throw ConfigError("temporal split produced an empty training set");
  if (sp.eval_targets.empty())
    throw ConfigError("temporal split produced no evaluation targets in [" +
                      format_date(t_valid) + ", " + format_date(t_test) + ")");
  return sp;
}

TemporalSplit merge_validation_into_train(const GraphStore& store, const TemporalSplit& split) {
  return classify_split(store, split.t_valid, split.t_test, split.mode, SplitPhase::Test);
}

// ---------------------------------------------------------------------------

QualityReport quality_report(const GraphStore& store) {
  QualityReport rep;
  const auto works = store.entities_of_class(EntityClass::Work);
  if (works.empty()) return rep;

  const auto cites = store.quads_of(Relation::Cites);
  if (!cites.empty()) {
    std::size_t mutual = 0;
    for (const Quad& q : cites)
      if (store.has_edge(q.o, Relation::Cites, q.s)) ++mutual;
    rep.mutual_citation_pct = 100.0 * static_cast<double>(mutual) / static_cast<double>(cites.size());
  }
  std::size_t with_author = 0, with_venue = 0;
  for (EntityId w : works) {
    if (!store.out_edges(w, Relation::Author).empty()) ++with_author;
    if (!store.out_edges(w, Relation::PublishedIn).empty()) ++with_venue;
  }
  const double nw = static_cast<double>(works.size());
  rep.authorship_completeness_pct = 100.0 * static_cast<double>(with_author) / nw;
  rep.venue_completeness_pct = 100.0 * static_cast<double>(with_venue) / nw;

  const auto authors = store.entities_of_class(EntityClass::Author);
  if (!authors.empty()) {
    std::size_t affiliated = 0;
    for (EntityId a : authors)
      if (!store.out_edges(a, Relation::Affiliation).empty()) ++affiliated;
    rep.institution_completeness_pct =
        100.0 * static_cast<double>(affiliated) / static_cast<double>(authors.size());
  }
  return rep;
}

}  // namespace citekg
