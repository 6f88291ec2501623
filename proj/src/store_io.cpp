#include <algorithm>
#include <fstream>
#include <sstream>

#include "citekg/store.hpp"
#include "json.hpp"

namespace citekg {

namespace {

using nlohmann::json;

constexpr std::int32_t kNoDateSentinel = std::numeric_limits<std::int32_t>::min();

std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto tab = line.find('\t', start);
    if (tab == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, tab - start));
    start = tab + 1;
  }
}

bool is_concept_label(std::string_view s) { return s == "concept" || s == "P921"; }
bool is_parent_label(std::string_view s) {
  return s == "subconcept_of" || s == "ancestor" || s == "P1038";
}

// Calls fn(line_no, fields) for every non-comment, non-blank line.
template <typename Fn>
void for_each_row(std::istream& in, Fn&& fn) {
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    fn(line_no, split_tabs(line));
  }
}

void read_classes(std::istream& in, const std::string& source, GraphStoreBuilder& b) {
  bool first = true;
  for_each_row(in, [&](std::size_t line_no, const std::vector<std::string_view>& f) {
    if (first && !f.empty() && f[0] == "node") {
      first = false;
      return;
    }
    first = false;
    if (f.size() < 2 || f.size() > 3)
      throw ParseError(source, line_no, "expected `node<TAB>class[<TAB>date]`");
    const auto c = parse_class(f[1]);
    if (!c) throw ParseError(source, line_no, "unknown entity class '" + std::string(f[1]) + "'");
    b.entity(f[0], *c);
    if (f.size() == 3 && !f[2].empty()) {
      const auto d = parse_date(f[2]);
      if (!d) throw ParseError(source, line_no, "malformed date '" + std::string(f[2]) + "'");
      if (*c != EntityClass::Work)
        throw ParseError(source, line_no, "only Works carry publication dates");
      b.set_date(f[0], *d);
    }
  });
}

const json* at_path(const json& j, std::string_view dotted) {
  const json* cur = &j;
  std::size_t start = 0;
  while (start <= dotted.size()) {
    const auto dot = dotted.find('.', start);
    const auto key = dotted.substr(start, dot == std::string_view::npos ? dotted.npos : dot - start);
    if (!cur->is_object()) return nullptr;
    auto it = cur->find(std::string(key));
    if (it == cur->end() || it->is_null()) return nullptr;
    cur = &*it;
    if (dot == std::string_view::npos) break;
    start = dot + 1;
  }
  return cur;
}

std::optional<std::string> id_of(const json& j, std::string_view path) {
  if (j.is_string()) return j.get<std::string>();
  const json* v = at_path(j, path);
  if (v && v->is_string()) return v->get<std::string>();
  return std::nullopt;
}

std::string top_key(std::string_view dotted) {
  return std::string(dotted.substr(0, dotted.find('.')));
}

}  // namespace

GraphStore ingest_tsv(std::istream& in, const std::string& source, const IngestOptions& opts,
                      IngestStats* stats, std::istream* classes) {
  GraphStoreBuilder b;
  IngestStats st;
  if (classes) read_classes(*classes, source + " (classes)", b);
  bool first = true;
  std::size_t quad_rows = 0;
  for_each_row(in, [&](std::size_t line_no, const std::vector<std::string_view>& f) {
    if (first && f.size() >= 3 && f[0] == "node1" && f[1] == "label" && f[2] == "node2") {
      first = false;
      return;
    }
    first = false;
    if (f.size() != 4)
      throw ParseError(source, line_no,
                       "expected 4 tab-separated columns, got " + std::to_string(f.size()));
    ++st.rows;
    if (is_concept_label(f[1])) {
      b.add_concept_link(f[0], f[2]);
      return;
    }
    if (is_parent_label(f[1])) {
      b.add_concept_parent(f[0], f[2]);
      return;
    }
    const auto rel = parse_relation(f[1]);
    if (!rel) {
      if (opts.skip_unknown_relations) {
        ++st.skipped_unknown;
        return;
      }
      throw ParseError(source, line_no, "unknown relation label '" + std::string(f[1]) + "'");
    }
    const auto t = parse_date(f[3]);
    if (!t) throw ParseError(source, line_no, "malformed date '" + std::string(f[3]) + "'");
    try {
      b.add_quad(f[0], *rel, f[2], *t);
    } catch (const SchemaError& e) {
      throw SchemaError(source + ":" + std::to_string(line_no) + ": " + e.what());
    }
    ++quad_rows;
  });
  GraphStore g = b.finish();
  st.duplicates = quad_rows - g.num_quads();
  if (stats) *stats = st;
  return g;
}

GraphStore ingest_tsv_file(const std::string& path, const IngestOptions& opts, IngestStats* stats,
                           const std::optional<std::string>& classes_path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path);
  std::ifstream cls;
  if (classes_path) {
    cls.open(*classes_path);
    if (!cls) throw ConfigError("cannot open " + *classes_path);
  }
  return ingest_tsv(in, path, opts, stats, classes_path ? &cls : nullptr);
}

JsonlMapping JsonlMapping::from_json_text(const std::string& text) {
  JsonlMapping m;
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("mapping config: ") + e.what());
  }
  auto set = [&](const char* key, std::string& field) {
    if (j.contains(key)) field = j.at(key).get<std::string>();
  };
  set("id", m.id);
  set("type", m.type);
  set("publication_date", m.publication_date);
  set("referenced_works", m.referenced_works);
  set("authorships", m.authorships);
  set("author_id", m.author_id);
  set("host_venue", m.host_venue);
  set("institutions", m.institutions);
  set("institution_id", m.institution_id);
  set("concepts", m.concepts);
  set("concept_id", m.concept_id);
  set("ancestors", m.ancestors);
  return m;
}

GraphStore ingest_jsonl(std::istream& in, const std::string& source, const JsonlMapping& m,
                        IngestStats* stats) {
  GraphStoreBuilder b;
  IngestStats st;
  const std::vector<std::string> mapped = {
      top_key(m.id),          top_key(m.type),       top_key(m.publication_date),
      top_key(m.referenced_works), top_key(m.authorships), top_key(m.host_venue),
      top_key(m.institutions), top_key(m.concepts),  top_key(m.ancestors)};
  std::string line;
  std::size_t line_no = 0, quad_rows = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::exception& e) {
      throw ParseError(source, line_no, e.what());
    }
    if (!rec.is_object()) throw ParseError(source, line_no, "record is not a JSON object");
    ++st.rows;
    for (const auto& [key, _] : rec.items())
      if (std::find(mapped.begin(), mapped.end(), key) == mapped.end()) ++st.ignored_fields;

    const auto id = id_of(rec, m.id);
    if (!id) throw ParseError(source, line_no, "record without id");
    EntityClass cls = EntityClass::Work;
    if (const json* t = at_path(rec, m.type); t && t->is_string())
      cls = parse_class(t->get<std::string>()).value_or(EntityClass::Work);

    try {
      b.entity(*id, cls);
      if (cls == EntityClass::Concept) {
        if (const json* anc = at_path(rec, m.ancestors); anc && anc->is_array())
          for (const auto& a : *anc)
            if (auto pid = id_of(a, m.concept_id)) b.add_concept_parent(*id, *pid);
        continue;
      }
      if (cls != EntityClass::Work) continue;

      std::optional<Date> date;
      if (const json* d = at_path(rec, m.publication_date); d && d->is_string()) {
        date = parse_date(d->get<std::string>());
        if (!date) throw ParseError(source, line_no, "malformed publication_date");
        b.set_date(*id, *date);
      }
      if (const json* cs = at_path(rec, m.concepts); cs && cs->is_array())
        for (const auto& c : *cs)
          if (auto cid = id_of(c, m.concept_id)) b.add_concept_link(*id, *cid);
      if (!date) {
        // Links of an undated work cannot be timestamped.
        ++st.skipped_unknown;
        continue;
      }
      if (const json* refs = at_path(rec, m.referenced_works); refs && refs->is_array())
        for (const auto& r : *refs)
          if (r.is_string()) {
            b.add_quad(*id, Relation::Cites, r.get<std::string>(), *date);
            ++quad_rows;
          }
      if (const json* auths = at_path(rec, m.authorships); auths && auths->is_array())
        for (const auto& a : *auths) {
          const auto aid = id_of(a, m.author_id);
          if (!aid) continue;
          b.add_quad(*id, Relation::Author, *aid, *date);
          ++quad_rows;
          if (const json* insts = at_path(a, m.institutions); insts && insts->is_array())
            for (const auto& inst : *insts)
              if (auto iid = id_of(inst, m.institution_id)) {
                b.add_quad(*aid, Relation::Affiliation, *iid, *date);
                ++quad_rows;
              }
        }
      if (const json* v = at_path(rec, m.host_venue); v && v->is_string()) {
        b.add_quad(*id, Relation::PublishedIn, v->get<std::string>(), *date);
        ++quad_rows;
      }
    } catch (const SchemaError& e) {
      throw SchemaError(source + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  GraphStore g = b.finish();
  st.duplicates = quad_rows - g.num_quads();
  if (stats) *stats = st;
  return g;
}

GraphStore ingest_jsonl_file(const std::string& path, const JsonlMapping& mapping,
                             IngestStats* stats) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path);
  return ingest_jsonl(in, path, mapping, stats);
}

void export_tsv(const GraphStore& store, std::ostream& out) {
  out << "node1\tlabel\tnode2\ttime\n";
  for (const Quad& q : store.quads())
    out << store.name(q.s) << '\t' << relation_label(q.r) << '\t' << store.name(q.o) << '\t'
        << format_date(q.t) << '\n';
  for (const auto& cl : store.concept_links())
    out << store.name(cl.work) << "\tconcept\t" << store.name(cl.topic) << "\t\n";
  for (const auto& cp : store.concept_parents())
    out << store.name(cp.child) << "\tsubconcept_of\t" << store.name(cp.parent) << "\t\n";
}

void export_classes(const GraphStore& store, std::ostream& out) {
  out << "node\tclass\tdate\n";
  for (EntityId e = 0; e < store.num_entities(); ++e) {
    out << store.name(e) << '\t' << class_name(store.entity_class(e));
    if (auto d = store.publication_date(e)) out << '\t' << format_date(*d);
    out << '\n';
  }
}

// KGF1 layout (all little-endian):
//   "KGF1" u32 version=1
//   u32 n_entities  u32 n_relations(=4)  u64 n_quads  u64 n_concept_links  u64 n_concept_parents
//   u8  class[n_entities]       i32 date_days[n_entities] (INT32_MIN = undated)
//   u32 s[n_quads]  u8 r[n_quads]  u32 o[n_quads]  i32 t_days[n_quads]   (sorted by r,s,o,t)
//   u32 (work, concept)[n_concept_links]   u32 (child, parent)[n_concept_parents]
//   per entity: u32 name_len, name bytes (UTF-8)
void save_store(const GraphStore& store, std::ostream& out) {
  BinaryWriter w(out);
  const std::size_t n = store.num_entities(), nq = store.num_quads();
  w.bytes("KGF1");
  w.pod<std::uint32_t>(1);
  w.pod<std::uint32_t>(static_cast<std::uint32_t>(n));
  w.pod<std::uint32_t>(kNumRelations);
  w.pod<std::uint64_t>(nq);
  w.pod<std::uint64_t>(store.concept_links().size());
  w.pod<std::uint64_t>(store.concept_parents().size());
  std::vector<std::uint8_t> cls(n);
  std::vector<std::int32_t> dates(n);
  for (EntityId e = 0; e < n; ++e) {
    cls[e] = static_cast<std::uint8_t>(store.entity_class(e));
    const auto d = store.publication_date(e);
    dates[e] = d ? d->days : kNoDateSentinel;
  }
  w.array<std::uint8_t>(cls);
  w.array<std::int32_t>(dates);
  std::vector<std::uint32_t> s(nq), o(nq);
  std::vector<std::uint8_t> r(nq);
  std::vector<std::int32_t> t(nq);
  for (std::size_t i = 0; i < nq; ++i) {
    const Quad& q = store.quads()[i];
    s[i] = q.s;
    r[i] = static_cast<std::uint8_t>(q.r);
    o[i] = q.o;
    t[i] = q.t.days;
  }
  w.array<std::uint32_t>(s);
  w.array<std::uint8_t>(r);
  w.array<std::uint32_t>(o);
  w.array<std::int32_t>(t);
  for (const auto& cl : store.concept_links()) {
    w.pod(cl.work);
    w.pod(cl.topic);
  }
  for (const auto& cp : store.concept_parents()) {
    w.pod(cp.child);
    w.pod(cp.parent);
  }
  for (EntityId e = 0; e < n; ++e) w.string(store.name(e));
}

GraphStore load_store(std::istream& in, const std::string& source) {
  BinaryReader rd(in, source);
  rd.expect_magic("KGF1");
  if (rd.pod<std::uint32_t>() != 1) rd.fail("unsupported KGF1 version");
  const auto n = rd.pod<std::uint32_t>();
  if (rd.pod<std::uint32_t>() != kNumRelations) rd.fail("relation count mismatch");
  const auto nq = rd.pod<std::uint64_t>();
  const auto nl = rd.pod<std::uint64_t>();
  const auto np = rd.pod<std::uint64_t>();
  StoreParts p;
  std::vector<std::uint8_t> cls(n);
  std::vector<std::int32_t> dates(n);
  rd.array<std::uint8_t>(cls);
  rd.array<std::int32_t>(dates);
  for (std::size_t e = 0; e < n; ++e) {
    if (cls[e] >= kNumClasses) rd.fail("bad entity class");
    p.classes.push_back(static_cast<EntityClass>(cls[e]));
    p.dates.push_back(dates[e] == kNoDateSentinel ? std::nullopt
                                                  : std::optional<Date>(Date{dates[e]}));
  }
  std::vector<std::uint32_t> s(nq), o(nq);
  std::vector<std::uint8_t> r(nq);
  std::vector<std::int32_t> t(nq);
  rd.array<std::uint32_t>(s);
  rd.array<std::uint8_t>(r);
  rd.array<std::uint32_t>(o);
  rd.array<std::int32_t>(t);
  p.quads.resize(nq);
  for (std::size_t i = 0; i < nq; ++i) {
    if (r[i] >= kNumRelations) rd.fail("bad relation id");
    p.quads[i] = {s[i], static_cast<Relation>(r[i]), o[i], Date{t[i]}};
  }
  for (std::uint64_t i = 0; i < nl; ++i) {
    const auto w = rd.pod<EntityId>();
    const auto c = rd.pod<EntityId>();
    p.concept_links.push_back({w, c});
  }
  for (std::uint64_t i = 0; i < np; ++i) {
    const auto c = rd.pod<EntityId>();
    const auto par = rd.pod<EntityId>();
    p.concept_parents.push_back({c, par});
  }
  for (std::size_t e = 0; e < n; ++e) p.names.push_back(rd.string());
  return GraphStore::build(std::move(p));
}

void save_store_file(const GraphStore& store, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path);
  save_store(store, out);
}

GraphStore load_store_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path);
  return load_store(in, path);
}

}  // namespace citekg
