#include "citekg/model.hpp"

#include <cmath>
#include <fstream>
#include <numbers>

#include "citekg/kernels.hpp"

namespace citekg::kge {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

}  // namespace

std::string_view model_name(ModelKind k) {
  switch (k) {
    case ModelKind::ComplEx:
      return "complex";
    case ModelKind::RotatE:
      return "rotate";
    case ModelKind::DETransE:
      return "de-transe";
    case ModelKind::DEDistMult:
      return "de-distmult";
  }
  return "?";
}

std::optional<ModelKind> parse_model(std::string_view s) {
  for (auto k : {ModelKind::ComplEx, ModelKind::RotatE, ModelKind::DETransE, ModelKind::DEDistMult})
    if (s == model_name(k)) return k;
  return std::nullopt;
}

bool is_temporal(ModelKind k) { return k == ModelKind::DETransE || k == ModelKind::DEDistMult; }

bool is_distance_model(ModelKind k) { return k == ModelKind::RotatE || k == ModelKind::DETransE; }

void ModelConfig::validate() const {
  if (dim == 0) throw ConfigError("embedding dimension must be positive");
  if (gamma < 0) throw ConfigError("gamma must be >= 0");
  if (alpha < 0) throw ConfigError("alpha must be >= 0");
  if (reg < 0) throw ConfigError("regularization must be >= 0");
  if (dropout < 0 || dropout >= 1) throw ConfigError("dropout must lie in [0, 1)");
  if (is_temporal(kind) && (psi <= 0 || psi >= 1)) throw ConfigError("psi must lie in (0, 1)");
}

std::size_t ModelConfig::static_dim() const {
  if (!is_temporal(kind)) return dim;
  // Guard against (1 - psi) * dim landing a hair above an integer.
  const double raw = (1.0 - psi) * static_cast<double>(dim);
  return static_cast<std::size_t>(std::ceil(raw - 1e-9));
}

std::size_t ModelConfig::dynamic_dim() const { return is_temporal(kind) ? dim - static_dim() : 0; }

Model::Model(ModelConfig config, std::size_t n_entities, std::size_t n_relations,
             TimeCode time_code)
    : config_(config), time_code_(time_code) {
  config_.validate();
  const std::size_t d = config_.dim;
  switch (config_.kind) {
    case ModelKind::ComplEx:
      tables_[0] = EmbeddingTable(n_entities, 2 * d);
      tables_[1] = EmbeddingTable(n_relations, 2 * d);
      break;
    case ModelKind::RotatE:
      tables_[0] = EmbeddingTable(n_entities, 2 * d);
      tables_[1] = EmbeddingTable(n_relations, d);
      break;
    case ModelKind::DETransE:
    case ModelKind::DEDistMult: {
      const std::size_t sd = config_.static_dim(), dd = config_.dynamic_dim();
      tables_[0] = EmbeddingTable(n_entities, sd);
      tables_[1] = EmbeddingTable(n_relations, d);
      tables_[2] = EmbeddingTable(n_entities, dd);
      tables_[3] = EmbeddingTable(n_entities, dd);
      tables_[4] = EmbeddingTable(n_entities, dd);
      break;
    }
  }
}

void Model::init_uniform(Rng& rng) {
  const double mu = config_.init_range();
  for (std::size_t t = 0; t < kNumTables; ++t) {
    auto& tab = tables_[t];
    const bool phases = config_.kind == ModelKind::RotatE && t == static_cast<int>(TableId::Relation);
    for (double& v : tab.values) v = phases ? uniform_real(rng, 0.0, kTwoPi) : uniform_real(rng, -mu, mu);
  }
}

void Model::reinit_entities(std::span<const EntityId> ids, Rng& rng) {
  const double mu = config_.init_range();
  for (TableId t : {TableId::Entity, TableId::Amplitude, TableId::Frequency, TableId::Phase}) {
    auto& tab = table(t);
    if (tab.empty()) continue;
    for (EntityId e : ids)
      for (double& v : tab.row(e)) v = uniform_real(rng, -mu, mu);
  }
}

std::vector<double> init_entity_random(std::size_t dim, double gamma, Rng& rng) {
  if (dim == 0) throw ConfigError("dimension must be positive");
  const double mu = (2.0 + gamma) / static_cast<double>(dim);
  std::vector<double> v(dim);
  for (double& x : v) {
    do {
      x = uniform_real(rng, -mu, mu);
    } while (x == -mu);  // open interval
  }
  return v;
}

EntityRows Model::entity_rows(EntityId e) const {
  EntityRows rows;
  rows.base = tables_[0].row(e);
  if (is_temporal(config_.kind)) {
    rows.amp = tables_[2].row(e);
    rows.freq = tables_[3].row(e);
    rows.phase = tables_[4].row(e);
  }
  return rows;
}

double Model::score_rows(const EntityRows& s, std::span<const double> r, const EntityRows& o,
                         double t, std::span<const double> mask, ScoreScratch& sc) const {
  switch (config_.kind) {
    case ModelKind::ComplEx:
      return score_complex(s.base, r, o.base);
    case ModelKind::RotatE:
      return score_rotate(s.base, r, o.base);
    case ModelKind::DETransE:
    case ModelKind::DEDistMult: {
      sc.ds.resize(config_.dim);
      sc.dob.resize(config_.dim);
      diachronic_embed(s.base, s.amp, s.freq, s.phase, t, sc.ds);
      diachronic_embed(o.base, o.amp, o.freq, o.phase, t, sc.dob);
      return config_.kind == ModelKind::DETransE ? score_transe(sc.ds, r, sc.dob, mask)
                                                 : score_distmult(sc.ds, r, sc.dob, mask);
    }
  }
  return 0.0;
}

void Model::grad_rows(const EntityRows& s, std::span<const double> r, const EntityRows& o,
                      double t, std::span<const double> mask, double up, const EntityGrads& gs,
                      std::span<double> gr, const EntityGrads& go, ScoreScratch& sc) const {
  switch (config_.kind) {
    case ModelKind::ComplEx:
      grad_complex(s.base, r, o.base, up, gs.base, gr, go.base);
      return;
    case ModelKind::RotatE:
      grad_rotate(s.base, r, o.base, up, gs.base, gr, go.base);
      return;
    case ModelKind::DETransE:
    case ModelKind::DEDistMult: {
      const std::size_t d = config_.dim;
      sc.ds.resize(d);
      sc.dob.resize(d);
      sc.gds.assign(d, 0.0);
      sc.gdo.assign(d, 0.0);
      diachronic_embed(s.base, s.amp, s.freq, s.phase, t, sc.ds);
      diachronic_embed(o.base, o.amp, o.freq, o.phase, t, sc.dob);
      if (config_.kind == ModelKind::DETransE)
        grad_transe(sc.ds, r, sc.dob, mask, up, sc.gds, gr, sc.gdo);
      else
        grad_distmult(sc.ds, r, sc.dob, mask, up, sc.gds, gr, sc.gdo);
      diachronic_backward(s.amp, s.freq, s.phase, t, sc.gds, gs.base, gs.amp, gs.freq, gs.phase);
      diachronic_backward(o.amp, o.freq, o.phase, t, sc.gdo, go.base, go.amp, go.freq, go.phase);
      return;
    }
  }
}

double Model::score(EntityId s, Relation r, EntityId o, Date t) const {
  ScoreScratch sc;
  return score_rows(entity_rows(s), tables_[1].row(static_cast<std::size_t>(r)), entity_rows(o),
                    time_code_(t), {}, sc);
}

void Model::score_tails(EntityId s, Relation r, Date t, std::span<const EntityId> candidates,
                        std::span<double> out) const {
  ScoreScratch sc;
  const auto srows = entity_rows(s);
  const auto rrow = tables_[1].row(static_cast<std::size_t>(r));
  const double tc = time_code_(t);
  for (std::size_t i = 0; i < candidates.size(); ++i)
    out[i] = score_rows(srows, rrow, entity_rows(candidates[i]), tc, {}, sc);
}

void Model::score_heads(EntityId o, Relation r, Date t, std::span<const EntityId> candidates,
                        std::span<double> out) const {
  ScoreScratch sc;
  const auto orows = entity_rows(o);
  const auto rrow = tables_[1].row(static_cast<std::size_t>(r));
  const double tc = time_code_(t);
  for (std::size_t i = 0; i < candidates.size(); ++i)
    out[i] = score_rows(entity_rows(candidates[i]), rrow, orows, tc, {}, sc);
}

void Model::normalize_phases(std::span<double> phases) const {
  for (double& p : phases) {
    p = std::fmod(p, kTwoPi);
    if (p < 0) p += kTwoPi;
    if (p >= kTwoPi) p = 0.0;
  }
}

// ---------------------------------------------------------------------------
// KGE1 layout (little-endian):
//   "KGE1" u32 version=1
//   u32 kind  u32 dim  f64 psi  f64 gamma  f64 alpha  f64 reg  f64 dropout
//   i32 time_min_days  i32 time_max_days
//   u32 n_entities  u32 n_relations  u64 step
//   u32 rng_state_len, rng_state bytes
//   5 x { u32 rows, u32 width, f32 values[rows*width] }   (entity, relation, amp, freq, phase)
//   u8 has_optimizer; if 1: 5 x { u32 n, f32 accum[n] }

void Checkpoint::validate_against(const GraphStore& store) const {
  if (model.num_entities() != store.num_entities())
    throw ConfigError("checkpoint has " + std::to_string(model.num_entities()) +
                      " entities, store has " + std::to_string(store.num_entities()));
  if (model.num_relations() != kNumRelations)
    throw ConfigError("checkpoint relation count does not match the store");
}

std::uint64_t Checkpoint::entity_table_hash() const {
  const auto& tab = model.table(TableId::Entity);
  std::vector<float> f(tab.values.begin(), tab.values.end());
  Fnv1a h;
  h.update(f.data(), f.size() * sizeof(float));
  return h.digest();
}

void save_checkpoint(const Checkpoint& c, std::ostream& out) {
  BinaryWriter w(out);
  const auto& cfg = c.model.config();
  w.bytes("KGE1");
  w.pod<std::uint32_t>(1);
  w.pod<std::uint32_t>(static_cast<std::uint32_t>(cfg.kind));
  w.pod<std::uint32_t>(static_cast<std::uint32_t>(cfg.dim));
  w.pod(cfg.psi);
  w.pod(cfg.gamma);
  w.pod(cfg.alpha);
  w.pod(cfg.reg);
  w.pod(cfg.dropout);
  w.pod(c.model.time_code().min.days);
  w.pod(c.model.time_code().max.days);
  w.pod<std::uint32_t>(static_cast<std::uint32_t>(c.model.num_entities()));
  w.pod<std::uint32_t>(static_cast<std::uint32_t>(c.model.num_relations()));
  w.pod<std::uint64_t>(c.step);
  w.string(c.rng_state);
  for (std::size_t t = 0; t < kNumTables; ++t) {
    const auto& tab = c.model.table(static_cast<TableId>(t));
    w.pod<std::uint32_t>(static_cast<std::uint32_t>(tab.rows));
    w.pod<std::uint32_t>(static_cast<std::uint32_t>(tab.width));
    w.f32_array(tab.values);
  }
  bool has_opt = false;
  for (const auto& v : c.optimizer) has_opt = has_opt || !v.empty();
  w.pod<std::uint8_t>(has_opt ? 1 : 0);
  if (has_opt)
    for (const auto& v : c.optimizer) {
      w.pod<std::uint32_t>(static_cast<std::uint32_t>(v.size()));
      w.f32_array(v);
    }
}

Checkpoint load_checkpoint(std::istream& in, const std::string& source) {
  BinaryReader rd(in, source);
  rd.expect_magic("KGE1");
  if (rd.pod<std::uint32_t>() != 1) rd.fail("unsupported KGE1 version");
  ModelConfig cfg;
  const auto kind = rd.pod<std::uint32_t>();
  if (kind > 3) rd.fail("unknown model kind");
  cfg.kind = static_cast<ModelKind>(kind);
  cfg.dim = rd.pod<std::uint32_t>();
  cfg.psi = rd.pod<double>();
  cfg.gamma = rd.pod<double>();
  cfg.alpha = rd.pod<double>();
  cfg.reg = rd.pod<double>();
  cfg.dropout = rd.pod<double>();
  TimeCode tc;
  tc.min.days = rd.pod<std::int32_t>();
  tc.max.days = rd.pod<std::int32_t>();
  const auto ne = rd.pod<std::uint32_t>();
  const auto nr = rd.pod<std::uint32_t>();
  Checkpoint c;
  c.model = Model(cfg, ne, nr, tc);
  c.step = rd.pod<std::uint64_t>();
  c.rng_state = rd.string();
  for (std::size_t t = 0; t < kNumTables; ++t) {
    auto& tab = c.model.table(static_cast<TableId>(t));
    const auto rows = rd.pod<std::uint32_t>();
    const auto width = rd.pod<std::uint32_t>();
    if (rows != tab.rows || width != tab.width) rd.fail("table shape does not match model config");
    rd.f32_array(tab.values);
  }
  if (rd.pod<std::uint8_t>() != 0)
    for (auto& v : c.optimizer) {
      v.resize(rd.pod<std::uint32_t>());
      rd.f32_array(v);
    }
  return c;
}

void save_checkpoint_file(const Checkpoint& ckpt, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path);
  save_checkpoint(ckpt, out);
}

Checkpoint load_checkpoint_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path);
  return load_checkpoint(in, path);
}

}  // namespace citekg::kge
