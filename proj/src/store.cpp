#include "citekg/store.hpp"

#include <algorithm>
#include <cctype>
#include <cassert>

namespace citekg {

namespace {

constexpr std::array<std::string_view, kNumClasses> kClassNames = {"Work", "Author", "Venue",
                                                                   "Institution", "Concept"};
constexpr std::array<std::string_view, kNumRelations> kRelationLabels = {
    "cites", "author", "published_in", "affiliation"};
constexpr std::array<std::string_view, kNumRelations> kRelationProps = {"P2860", "P50", "P1433",
                                                                        "P1416"};

std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

}  // namespace

std::string_view class_name(EntityClass c) { return kClassNames[static_cast<int>(c)]; }

std::optional<EntityClass> parse_class(std::string_view s) {
  const std::string l = lower(s);
  if (l == "work" || l == "publication" || l == "paper") return EntityClass::Work;
  if (l == "author" || l == "human") return EntityClass::Author;
  if (l == "venue") return EntityClass::Venue;
  if (l == "institution") return EntityClass::Institution;
  if (l == "concept") return EntityClass::Concept;
  return std::nullopt;
}

std::string_view relation_label(Relation r) { return kRelationLabels[static_cast<int>(r)]; }
std::string_view wikidata_property(Relation r) { return kRelationProps[static_cast<int>(r)]; }

std::optional<Relation> parse_relation(std::string_view s) {
  for (std::size_t i = 0; i < kNumRelations; ++i)
    if (s == kRelationLabels[i] || s == kRelationProps[i]) return static_cast<Relation>(i);
  return std::nullopt;
}

EntityClass subject_class(Relation r) {
  return r == Relation::Affiliation ? EntityClass::Author : EntityClass::Work;
}

EntityClass object_class(Relation r) {
  switch (r) {
    case Relation::Cites:
      return EntityClass::Work;
    case Relation::Author:
      return EntityClass::Author;
    case Relation::PublishedIn:
      return EntityClass::Venue;
    case Relation::Affiliation:
      return EntityClass::Institution;
  }
  return EntityClass::Work;
}

// ---------------------------------------------------------------------------

GraphStore GraphStore::build(StoreParts parts) {
  const std::size_t n = parts.names.size();
  if (parts.classes.size() != n) throw ContractError("store parts: class table size mismatch");
  parts.dates.resize(n);

  for (const Quad& q : parts.quads) {
    if (q.s >= n || q.o >= n) throw ContractError("store parts: quad endpoint out of range");
    if (parts.classes[q.s] != subject_class(q.r) || parts.classes[q.o] != object_class(q.r))
      throw SchemaError("relation " + std::string(relation_label(q.r)) + " between '" +
                        parts.names[q.s] + "' (" + std::string(class_name(parts.classes[q.s])) +
                        ") and '" + parts.names[q.o] + "' (" +
                        std::string(class_name(parts.classes[q.o])) + ") violates its schema");
  }
  std::sort(parts.quads.begin(), parts.quads.end());
  parts.quads.erase(std::unique(parts.quads.begin(), parts.quads.end()), parts.quads.end());

  // A Work without an explicit date takes the date of the links it governs.
  std::vector<std::optional<Date>> inferred(n);
  for (const Quad& q : parts.quads) {
    if (q.r == Relation::Affiliation) continue;
    auto& d = inferred[q.s];
    if (!d || q.t < *d) d = q.t;
  }
  for (std::size_t e = 0; e < n; ++e) {
    if (parts.classes[e] != EntityClass::Work) {
      parts.dates[e].reset();
    } else if (!parts.dates[e]) {
      parts.dates[e] = inferred[e];
    }
  }

  for (const auto& cl : parts.concept_links)
    if (cl.work >= n || cl.topic >= n || parts.classes[cl.work] != EntityClass::Work ||
        parts.classes[cl.topic] != EntityClass::Concept)
      throw SchemaError("concept link must connect a Work to a Concept");
  for (const auto& cp : parts.concept_parents)
    if (cp.child >= n || cp.parent >= n || parts.classes[cp.child] != EntityClass::Concept ||
        parts.classes[cp.parent] != EntityClass::Concept)
      throw SchemaError("concept hierarchy edge must connect two Concepts");
  std::sort(parts.concept_links.begin(), parts.concept_links.end());
  parts.concept_links.erase(std::unique(parts.concept_links.begin(), parts.concept_links.end()),
                            parts.concept_links.end());
  std::sort(parts.concept_parents.begin(), parts.concept_parents.end());
  parts.concept_parents.erase(
      std::unique(parts.concept_parents.begin(), parts.concept_parents.end()),
      parts.concept_parents.end());

  GraphStore g;
  g.names_ = std::move(parts.names);
  g.classes_ = std::move(parts.classes);
  g.dates_ = std::move(parts.dates);
  g.quads_ = std::move(parts.quads);
  g.concept_links_ = std::move(parts.concept_links);
  g.concept_parents_ = std::move(parts.concept_parents);
  g.index();
  return g;
}

void GraphStore::index() {
  const std::size_t n = names_.size();
  by_name_.clear();
  by_name_.reserve(n);
  for (std::size_t e = 0; e < n; ++e) {
    if (!by_name_.emplace(names_[e], static_cast<EntityId>(e)).second)
      throw SchemaError("duplicate entity name '" + names_[e] + "'");
  }
  for (auto& v : by_class_) v.clear();
  for (std::size_t e = 0; e < n; ++e)
    by_class_[static_cast<int>(classes_[e])].push_back(static_cast<EntityId>(e));

  relation_begin_.fill(0);
  for (const Quad& q : quads_) ++relation_begin_[static_cast<int>(q.r) + 1];
  for (std::size_t r = 0; r < kNumRelations; ++r) relation_begin_[r + 1] += relation_begin_[r];

  for (std::size_t r = 0; r < kNumRelations; ++r) {
    for (Csr* csr : {&out_[r], &in_[r]}) {
      csr->offsets.assign(n + 1, 0);
      csr->edges.clear();
    }
    const std::size_t lo = relation_begin_[r], hi = relation_begin_[r + 1];
    for (std::size_t i = lo; i < hi; ++i) {
      ++out_[r].offsets[quads_[i].s + 1];
      ++in_[r].offsets[quads_[i].o + 1];
    }
    for (std::size_t e = 0; e < n; ++e) {
      out_[r].offsets[e + 1] += out_[r].offsets[e];
      in_[r].offsets[e + 1] += in_[r].offsets[e];
    }
    out_[r].edges.resize(hi - lo);
    in_[r].edges.resize(hi - lo);
    std::vector<std::uint32_t> out_fill(out_[r].offsets.begin(), out_[r].offsets.end() - 1);
    std::vector<std::uint32_t> in_fill(in_[r].offsets.begin(), in_[r].offsets.end() - 1);
    for (std::size_t i = lo; i < hi; ++i) {
      const Quad& q = quads_[i];
      out_[r].edges[out_fill[q.s]++] = {q.o, static_cast<std::uint32_t>(i)};
      in_[r].edges[in_fill[q.o]++] = {q.s, static_cast<std::uint32_t>(i)};
    }
  }

  if (quads_.empty()) {
    min_time_ = max_time_ = Date{0};
  } else {
    min_time_ = max_time_ = quads_.front().t;
    for (const Quad& q : quads_) {
      min_time_ = std::min(min_time_, q.t);
      max_time_ = std::max(max_time_, q.t);
    }
  }
}

std::size_t GraphStore::count_relation(Relation r) const {
  return relation_begin_[static_cast<int>(r) + 1] - relation_begin_[static_cast<int>(r)];
}

std::optional<EntityId> GraphStore::find(std::string_view name) const {
  auto it = by_name_.find(std::string(name));
  if (it == by_name_.end()) return std::nullopt;
  return it->second;
}

std::span<const Quad> GraphStore::quads_of(Relation r) const {
  const auto lo = relation_begin_[static_cast<int>(r)];
  const auto hi = relation_begin_[static_cast<int>(r) + 1];
  return std::span<const Quad>(quads_).subspan(lo, hi - lo);
}

std::span<const GraphStore::Edge> GraphStore::out_edges(EntityId e, Relation r) const {
  const Csr& c = out_[static_cast<int>(r)];
  return std::span<const Edge>(c.edges).subspan(c.offsets[e], c.offsets[e + 1] - c.offsets[e]);
}

std::span<const GraphStore::Edge> GraphStore::in_edges(EntityId e, Relation r) const {
  const Csr& c = in_[static_cast<int>(r)];
  return std::span<const Edge>(c.edges).subspan(c.offsets[e], c.offsets[e + 1] - c.offsets[e]);
}

std::size_t GraphStore::degree(EntityId e) const {
  std::size_t d = 0;
  for (Relation r : kAllRelations) d += out_edges(e, r).size() + in_edges(e, r).size();
  return d;
}

bool GraphStore::has_edge(EntityId s, Relation r, EntityId o) const {
  auto edges = out_edges(s, r);
  auto it = std::lower_bound(edges.begin(), edges.end(), o,
                             [](const Edge& a, EntityId v) { return a.neighbor < v; });
  return it != edges.end() && it->neighbor == o;
}

StoreParts GraphStore::parts() const {
  return StoreParts{names_, classes_, dates_, quads_, concept_links_, concept_parents_};
}

GraphStore GraphStore::restrict(const std::vector<bool>& keep_quad,
                                const std::vector<bool>& keep_entity) const {
  const std::size_t n = num_entities();
  if (keep_quad.size() != quads_.size() || keep_entity.size() != n)
    throw ContractError("restrict: mask size mismatch");

  std::vector<std::uint32_t> before(n, 0), after(n, 0);
  std::vector<bool> quad_kept(quads_.size(), false);
  for (std::size_t i = 0; i < quads_.size(); ++i) {
    const Quad& q = quads_[i];
    ++before[q.s];
    ++before[q.o];
    if (keep_quad[i] && keep_entity[q.s] && keep_entity[q.o]) {
      quad_kept[i] = true;
      ++after[q.s];
      ++after[q.o];
    }
  }
  std::vector<EntityId> remap(n, kNoEntity);
  StoreParts p;
  for (std::size_t e = 0; e < n; ++e) {
    bool keep = keep_entity[e];
    const EntityClass c = classes_[e];
    if (keep && c != EntityClass::Work && c != EntityClass::Concept && before[e] > 0 &&
        after[e] == 0)
      keep = false;
    if (!keep) continue;
    remap[e] = static_cast<EntityId>(p.names.size());
    p.names.push_back(names_[e]);
    p.classes.push_back(c);
    p.dates.push_back(dates_[e]);
  }
  for (std::size_t i = 0; i < quads_.size(); ++i) {
    if (!quad_kept[i]) continue;
    Quad q = quads_[i];
    q.s = remap[q.s];
    q.o = remap[q.o];
    p.quads.push_back(q);
  }
  for (const auto& cl : concept_links_)
    if (remap[cl.work] != kNoEntity && remap[cl.topic] != kNoEntity)
      p.concept_links.push_back({remap[cl.work], remap[cl.topic]});
  for (const auto& cp : concept_parents_)
    if (remap[cp.child] != kNoEntity && remap[cp.parent] != kNoEntity)
      p.concept_parents.push_back({remap[cp.child], remap[cp.parent]});
  return build(std::move(p));
}

// ---------------------------------------------------------------------------

EntityId GraphStoreBuilder::entity(std::string_view name, EntityClass c) {
  auto [it, inserted] = ids_.try_emplace(std::string(name), 0);
  if (inserted) {
    it->second = static_cast<EntityId>(parts_.names.size());
    parts_.names.emplace_back(name);
    parts_.classes.push_back(c);
    parts_.dates.emplace_back();
    return it->second;
  }
  const EntityClass have = parts_.classes[it->second];
  if (have != c)
    throw SchemaError("entity '" + std::string(name) + "' is " + std::string(class_name(have)) +
                      " but is used as " + std::string(class_name(c)));
  return it->second;
}

void GraphStoreBuilder::set_date(std::string_view work, Date d) {
  parts_.dates[entity(work, EntityClass::Work)] = d;
}

void GraphStoreBuilder::add_quad(std::string_view s, Relation r, std::string_view o, Date t) {
  const EntityId si = entity(s, subject_class(r));
  const EntityId oi = entity(o, object_class(r));
  parts_.quads.push_back({si, r, oi, t});
}

void GraphStoreBuilder::add_concept_link(std::string_view work, std::string_view topic) {
  const EntityId w = entity(work, EntityClass::Work);
  const EntityId c = entity(topic, EntityClass::Concept);
  parts_.concept_links.push_back({w, c});
}

void GraphStoreBuilder::add_concept_parent(std::string_view child, std::string_view parent) {
  const EntityId c = entity(child, EntityClass::Concept);
  const EntityId p = entity(parent, EntityClass::Concept);
  parts_.concept_parents.push_back({c, p});
}

GraphStore GraphStoreBuilder::finish() {
  GraphStore g = GraphStore::build(std::move(parts_));
  parts_ = {};
  ids_.clear();
  return g;
}

}  // namespace citekg
