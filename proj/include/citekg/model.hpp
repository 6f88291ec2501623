#pragma once
// Shallow link-prediction models (ComplEx, RotatE, DE-TransE, DE-DistMult),
// their parameter tables and the KGE1 checkpoint format.

#include <array>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "citekg/common.hpp"
#include "citekg/store.hpp"

namespace citekg::kge {

enum class ModelKind : std::uint32_t { ComplEx = 0, RotatE = 1, DETransE = 2, DEDistMult = 3 };

std::string_view model_name(ModelKind k);
std::optional<ModelKind> parse_model(std::string_view s);
bool is_temporal(ModelKind k);
// Distance-style models take a margin in the log-sigmoid loss.
bool is_distance_model(ModelKind k);

struct ModelConfig {
  ModelKind kind = ModelKind::ComplEx;
  std::size_t dim = 200;   // complex coordinates for ComplEx/RotatE, reals otherwise
  double gamma = 0.0;      // margin; also sets the init range (2 + gamma) / dim
  double alpha = 0.25;     // adversarial temperature
  double reg = 1e-6;       // L2 coefficient on touched rows
  double dropout = 0.0;    // DE models: applied before the score reduction
  double psi = 0.08;       // DE models: fraction of dim that is time-dependent

  void validate() const;
  std::size_t static_dim() const;   // ceil((1 - psi) * dim) for DE models, else dim
  std::size_t dynamic_dim() const;  // dim - static_dim()
  double init_range() const { return (2.0 + gamma) / static_cast<double>(dim); }
};

// Dense row-major parameter matrix.
struct EmbeddingTable {
  std::size_t rows = 0;
  std::size_t width = 0;
  std::vector<double> values;

  EmbeddingTable() = default;
  EmbeddingTable(std::size_t r, std::size_t w) : rows(r), width(w), values(r * w, 0.0) {}
  std::span<double> row(std::size_t i) { return {values.data() + i * width, width}; }
  std::span<const double> row(std::size_t i) const { return {values.data() + i * width, width}; }
  bool empty() const { return rows == 0 || width == 0; }
};

// Maps dates into [0, 1] over the corpus date range.
struct TimeCode {
  Date min{0};
  Date max{0};
  double operator()(Date d) const {
    if (max.days <= min.days) return 0.0;
    return static_cast<double>(d.days - min.days) / static_cast<double>(max.days - min.days);
  }
};

// Views of one entity's parameter rows. amp/freq/phase are empty for static models.
struct EntityRows {
  std::span<const double> base, amp, freq, phase;
};
struct EntityGrads {
  std::span<double> base, amp, freq, phase;
};

// Which parameter table a row belongs to.
enum class TableId : std::uint32_t { Entity = 0, Relation, Amplitude, Frequency, Phase };
inline constexpr std::size_t kNumTables = 5;

// Scratch buffers for DE scoring; one per thread.
struct ScoreScratch {
  std::vector<double> ds, dob, gds, gdo;
};

class Model {
 public:
  Model() = default;
  Model(ModelConfig config, std::size_t n_entities, std::size_t n_relations, TimeCode time_code);

  const ModelConfig& config() const { return config_; }
  const TimeCode& time_code() const { return time_code_; }
  std::size_t num_entities() const { return tables_[0].rows; }
  std::size_t num_relations() const { return tables_[1].rows; }

  EmbeddingTable& table(TableId id) { return tables_[static_cast<int>(id)]; }
  const EmbeddingTable& table(TableId id) const { return tables_[static_cast<int>(id)]; }

  // Uniform(-mu, mu) with mu = (2 + gamma) / dim for every table; RotatE
  // phases are drawn uniformly over the circle.
  void init_uniform(Rng& rng);
  // Re-draws the given entity rows (random-init baseline for unseen nodes).
  void reinit_entities(std::span<const EntityId> ids, Rng& rng);

  EntityRows entity_rows(EntityId e) const;

  // Full score of (s, r, o, t) against the model's own tables (no dropout).
  double score(EntityId s, Relation r, EntityId o, Date t) const;
  void score_tails(EntityId s, Relation r, Date t, std::span<const EntityId> candidates,
                   std::span<double> out) const;
  void score_heads(EntityId o, Relation r, Date t, std::span<const EntityId> candidates,
                   std::span<double> out) const;

  // Row-level scoring used by the trainer over gathered (cached) rows.
  // `mask` is the DE dropout mask (empty = none).
  double score_rows(const EntityRows& s, std::span<const double> r, const EntityRows& o, double t,
                    std::span<const double> mask, ScoreScratch& scratch) const;
  // Accumulates upstream * d(score)/d(rows) into the grads.
  void grad_rows(const EntityRows& s, std::span<const double> r, const EntityRows& o, double t,
                 std::span<const double> mask, double upstream, const EntityGrads& gs,
                 std::span<double> gr, const EntityGrads& go, ScoreScratch& scratch) const;

  // Width of the representation a dropout mask applies to.
  std::size_t mask_width() const { return config_.dim; }

  // Wraps RotatE phases back into [0, 2 pi).
  void normalize_phases(std::span<double> phases) const;

 private:
  ModelConfig config_;
  TimeCode time_code_;
  std::array<EmbeddingTable, kNumTables> tables_;
};

// Uniform(-mu, mu) vector with mu = (2 + gamma) / dim.
std::vector<double> init_entity_random(std::size_t dim, double gamma, Rng& rng);

// Model parameters plus training state. Written as KGE1 (docs/formats.md).
struct Checkpoint {
  Model model;
  std::uint64_t step = 0;
  std::string rng_state;
  // Row-wise Adagrad accumulators, one vector per table (may be empty).
  std::array<std::vector<double>, kNumTables> optimizer;

  // Throws ConfigError unless entity/relation counts match the store.
  void validate_against(const GraphStore& store) const;
  std::uint64_t entity_table_hash() const;
};

void save_checkpoint(const Checkpoint& ckpt, std::ostream& out);
Checkpoint load_checkpoint(std::istream& in, const std::string& source);
void save_checkpoint_file(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint_file(const std::string& path);

}  // namespace citekg::kge
