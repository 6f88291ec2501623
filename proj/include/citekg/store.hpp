#pragma once
// Immutable typed temporal multigraph of works, authors, venues,
// institutions and concepts.

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "citekg/common.hpp"

namespace citekg {

enum class EntityClass : std::uint8_t { Work = 0, Author, Venue, Institution, Concept };
inline constexpr std::size_t kNumClasses = 5;

// Modeled relations, in the fixed order used by relational degree features.
enum class Relation : std::uint8_t { Cites = 0, Author, PublishedIn, Affiliation };
inline constexpr std::size_t kNumRelations = 4;
inline constexpr std::array<Relation, kNumRelations> kAllRelations = {
    Relation::Cites, Relation::Author, Relation::PublishedIn, Relation::Affiliation};

using EntityId = std::uint32_t;
inline constexpr EntityId kNoEntity = 0xffffffffu;

std::string_view class_name(EntityClass c);
std::optional<EntityClass> parse_class(std::string_view s);

std::string_view relation_label(Relation r);
std::string_view wikidata_property(Relation r);
std::optional<Relation> parse_relation(std::string_view s);

// Endpoint classes: cites Work->Work, author Work->Author,
// published_in Work->Venue, affiliation Author->Institution.
EntityClass subject_class(Relation r);
EntityClass object_class(Relation r);

struct Quad {
  EntityId s = 0;
  Relation r = Relation::Cites;
  EntityId o = 0;
  Date t;

  friend bool operator==(const Quad&, const Quad&) = default;
  friend bool operator<(const Quad& a, const Quad& b) {
    if (a.r != b.r) return a.r < b.r;
    if (a.s != b.s) return a.s < b.s;
    if (a.o != b.o) return a.o < b.o;
    return a.t < b.t;
  }
};

struct ConceptLink {
  EntityId work;
  EntityId topic;
  friend auto operator<=>(const ConceptLink&, const ConceptLink&) = default;
};

struct ConceptParent {
  EntityId child;
  EntityId parent;
  friend auto operator<=>(const ConceptParent&, const ConceptParent&) = default;
};

// Raw material for GraphStore::build.
struct StoreParts {
  std::vector<std::string> names;
  std::vector<EntityClass> classes;
  std::vector<std::optional<Date>> dates;  // publication dates, Works only
  std::vector<Quad> quads;
  std::vector<ConceptLink> concept_links;
  std::vector<ConceptParent> concept_parents;
};

class GraphStore {
 public:
  struct Edge {
    EntityId neighbor;
    std::uint32_t quad;  // index into quads()
  };

  GraphStore() = default;

  // Validates endpoint classes, deduplicates and sorts quads, infers missing
  // Work dates from the quads they govern, and indexes adjacency.
  static GraphStore build(StoreParts parts);

  std::size_t num_entities() const { return names_.size(); }
  std::size_t num_quads() const { return quads_.size(); }
  std::size_t count_class(EntityClass c) const { return by_class_[static_cast<int>(c)].size(); }
  std::size_t count_relation(Relation r) const;

  EntityClass entity_class(EntityId e) const { return classes_[e]; }
  std::optional<Date> publication_date(EntityId e) const { return dates_[e]; }
  const std::string& name(EntityId e) const { return names_[e]; }
  std::optional<EntityId> find(std::string_view name) const;
  std::span<const EntityId> entities_of_class(EntityClass c) const {
    return by_class_[static_cast<int>(c)];
  }

  std::span<const Quad> quads() const { return quads_; }
  std::span<const Quad> quads_of(Relation r) const;
  std::span<const Edge> out_edges(EntityId e, Relation r) const;
  std::span<const Edge> in_edges(EntityId e, Relation r) const;
  std::size_t degree(EntityId e) const;
  bool has_edge(EntityId s, Relation r, EntityId o) const;

  std::span<const ConceptLink> concept_links() const { return concept_links_; }
  std::span<const ConceptParent> concept_parents() const { return concept_parents_; }

  // Range of quad timestamps; both equal to Date{0} for an empty store.
  Date min_time() const { return min_time_; }
  Date max_time() const { return max_time_; }

  // Keeps quads with keep_quad[i] whose endpoints are both kept, and Works /
  // Concepts with keep_entity[e]. Authors, venues and institutions that lose
  // their last incident quad are garbage-collected; ids are re-densified
  // preserving relative order.
  GraphStore restrict(const std::vector<bool>& keep_quad,
                      const std::vector<bool>& keep_entity) const;

  StoreParts parts() const;

 private:
  struct Csr {
    std::vector<std::uint32_t> offsets;
    std::vector<Edge> edges;
  };
  void index();

  std::vector<std::string> names_;
  std::vector<EntityClass> classes_;
  std::vector<std::optional<Date>> dates_;
  std::vector<Quad> quads_;
  std::vector<ConceptLink> concept_links_;
  std::vector<ConceptParent> concept_parents_;

  std::unordered_map<std::string, EntityId> by_name_;
  std::array<std::vector<EntityId>, kNumClasses> by_class_;
  std::array<std::size_t, kNumRelations + 1> relation_begin_{};
  std::array<Csr, kNumRelations> out_;
  std::array<Csr, kNumRelations> in_;
  Date min_time_, max_time_;
};

// Incremental, name-keyed construction. Entity classes are inferred from the
// relation positions they appear in; a conflicting second class is rejected.
class GraphStoreBuilder {
 public:
  EntityId entity(std::string_view name, EntityClass c);
  void set_date(std::string_view work, Date d);
  void add_quad(std::string_view s, Relation r, std::string_view o, Date t);
  void add_concept_link(std::string_view work, std::string_view topic);
  void add_concept_parent(std::string_view child, std::string_view parent);
  std::size_t num_entities() const { return parts_.names.size(); }
  GraphStore finish();

 private:
  StoreParts parts_;
  std::unordered_map<std::string, EntityId> ids_;
};

// ---------------------------------------------------------------------------
// Ingestion and serialization.

struct IngestOptions {
  bool skip_unknown_relations = false;
};

struct IngestStats {
  std::size_t rows = 0;
  std::size_t duplicates = 0;
  std::size_t skipped_unknown = 0;
  std::size_t ignored_fields = 0;  // JSON-lines: unmapped properties seen
};

// Quad TSV: node1, label, node2, time (ISO date). '#' lines are comments; an
// optional KGTK header row is recognized. Labels accept the relation names,
// their Wikidata properties, plus `concept`/P921 (Work->Concept) and
// `subconcept_of`/P1038 (Concept->parent Concept), whose time may be empty.
GraphStore ingest_tsv(std::istream& in, const std::string& source, const IngestOptions& opts,
                      IngestStats* stats = nullptr, std::istream* classes = nullptr);
GraphStore ingest_tsv_file(const std::string& path, const IngestOptions& opts,
                           IngestStats* stats = nullptr,
                           const std::optional<std::string>& classes_path = std::nullopt);

// Field paths for JSON-lines records, dotted ("host_venue.id").
struct JsonlMapping {
  std::string id = "id";
  std::string type = "type";
  std::string publication_date = "publication_date";
  std::string referenced_works = "referenced_works";
  std::string authorships = "authorships";
  std::string author_id = "author.id";
  std::string host_venue = "host_venue.id";
  std::string institutions = "institutions";
  std::string institution_id = "id";
  std::string concepts = "concepts";
  std::string concept_id = "id";
  std::string ancestors = "ancestors";

  static JsonlMapping from_json_text(const std::string& text);
};

GraphStore ingest_jsonl(std::istream& in, const std::string& source, const JsonlMapping& mapping,
                        IngestStats* stats = nullptr);
GraphStore ingest_jsonl_file(const std::string& path, const JsonlMapping& mapping,
                             IngestStats* stats = nullptr);

void export_tsv(const GraphStore& store, std::ostream& out);
void export_classes(const GraphStore& store, std::ostream& out);

// KGF1 binary format; see docs/formats.md.
void save_store(const GraphStore& store, std::ostream& out);
GraphStore load_store(std::istream& in, const std::string& source);
void save_store_file(const GraphStore& store, const std::string& path);
GraphStore load_store_file(const std::string& path);

}  // namespace citekg
