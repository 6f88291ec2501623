#pragma once
// Featureless inductive link prediction: self-loop-free GraphSAGE and RGCN
// encoders over learned (E), frozen pretrained (H) or relational-degree (D)
// inputs, fanout neighbor sampling and dot-product decoding.

#include <array>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include "citekg/dataset.hpp"
#include "citekg/evaluation.hpp"
#include "citekg/model.hpp"

namespace citekg::ind {

enum class EncoderKind : std::uint32_t { GraphSage = 0, Rgcn = 1 };
enum class Variant : std::uint32_t { E = 0, H = 1, D = 2 };
enum class Aggregator : std::uint32_t { Mean = 0, Pool = 1 };
enum class Norm : std::uint32_t { None = 0, Layer = 1 };

// Edge types seen by a node: incoming relation r is type r, outgoing is
// kNumRelations + r.
inline constexpr std::size_t kNumEdgeTypes = 2 * kNumRelations;

std::string_view encoder_name(EncoderKind k);
std::optional<EncoderKind> parse_encoder(std::string_view s);
std::string_view variant_name(Variant v);
std::optional<Variant> parse_variant(std::string_view s);
std::string_view aggregator_name(Aggregator a);
std::optional<Aggregator> parse_aggregator(std::string_view s);
std::string_view norm_name(Norm n);
std::optional<Norm> parse_norm(std::string_view s);

struct EncoderConfig {
  EncoderKind kind = EncoderKind::GraphSage;
  Variant variant = Variant::E;
  std::size_t layers = 1;
  std::size_t dim = 400;
  std::size_t fanout = 25;  // per layer, training only
  Aggregator aggregator = Aggregator::Mean;
  Norm norm = Norm::Layer;
  std::size_t n_bases = 8;
  double dropout = 0.1;
  std::size_t negatives = 50;
  double lr = 0.03;
  std::size_t batch_size = 512;
  double time_budget_s = 60.0;  // 0 returns the initialization
  std::uint64_t max_steps = 0;  // 0 = unlimited
  double max_epochs = 0.0;      // 0 = unlimited
  std::uint64_t seed = 0;
  std::size_t workers = 1;      // inference only
  std::uint64_t eval_every = 0;
  std::ostream* progress = nullptr;  // JSON-lines {step, loss, val_mrr, elapsed_s}

  void validate() const;
};

// Best published settings for each encoder and variant.
EncoderConfig paper_defaults(EncoderKind kind, Variant variant);

// ---------------------------------------------------------------------------

using DegreeFeatures = std::vector<std::array<std::uint32_t, kNumEdgeTypes>>;

// Per entity: incoming degree per relation, then outgoing degree per relation.
DegreeFeatures degree_features(const GraphStore& store);
DegreeFeatures degree_features(std::size_t n_entities, std::span<const Quad> quads);

// Undirected typed adjacency over a set of quads (the training graph, or the
// training graph plus auxiliary links at evaluation time). Parallel edges of
// the same type collapse.
class GraphView {
 public:
  struct Neighbor {
    EntityId node;
    std::uint8_t type;
    friend auto operator<=>(const Neighbor&, const Neighbor&) = default;
  };

  GraphView() = default;
  GraphView(std::size_t n_entities, std::span<const Quad> quads);

  std::size_t num_nodes() const { return offsets_.empty() ? 0 : offsets_.size() - 1; }
  std::span<const Neighbor> neighbors(EntityId u) const {
    return {nbrs_.data() + offsets_[u], offsets_[u + 1] - offsets_[u]};
  }
  std::size_t max_degree() const;
  // log1p of the view's relational degrees, one row per entity.
  const kge::EmbeddingTable& degree_input() const { return degree_input_; }

 private:
  std::vector<std::uint32_t> offsets_;
  std::vector<Neighbor> nbrs_;
  kge::EmbeddingTable degree_input_;
};

// Pairs whose connecting edges are hidden from the sampler (both directions).
class EdgeExclusion {
 public:
  void add(EntityId a, EntityId b);
  bool contains(EntityId a, EntityId b) const;
  bool empty() const { return keys_.empty(); }

 private:
  std::unordered_set<std::uint64_t> keys_;
};

// Up to `fanout` incident edges drawn uniformly without replacement; every
// non-excluded edge when the degree does not exceed the fanout. Returns
// indices into view.neighbors(node).
std::vector<std::uint32_t> sample_neighborhood(const GraphView& view, EntityId node,
                                               std::size_t fanout, Rng& rng,
                                               const EdgeExclusion* exclude = nullptr);

double decode_dot(std::span<const double> a, std::span<const double> b);

// ---------------------------------------------------------------------------

// Dense parameters of one layer, as offsets into Encoder::params.
struct LayerParams {
  std::size_t in = 0, out = 0;
  std::size_t w = 0;       // graphsage: out x in
  std::size_t pool_w = 0;  // graphsage pool: in x in
  std::size_t pool_b = 0;  // graphsage pool: in
  std::size_t basis = 0;   // rgcn: n_bases x out x in
  std::size_t coeff = 0;   // rgcn: kNumEdgeTypes x n_bases
  std::size_t gain = 0;    // layer norm: out
  std::size_t bias = 0;    // layer norm: out
};

struct Encoder {
  EncoderConfig config;
  std::size_t input_width = 0;
  std::vector<LayerParams> layers;
  std::vector<double> params;
  // E: learned inputs; H: frozen copy of the pretrained entity table; D: empty.
  kge::EmbeddingTable input;
  // Entities with an input representation (seen during training); the rest
  // read zeros.
  std::vector<bool> known;
  std::uint64_t frozen_hash = 0;  // H: entity-table hash of the pretrained checkpoint
  std::uint64_t step = 0;

  std::size_t num_entities() const { return known.size(); }
  // Input row of u; zeros for unknown entities, degree features for D.
  std::span<const double> input_row(EntityId u, const GraphView& view) const;
};

// Fresh encoder. H variants require `pretrained` with a matching entity
// count; its entity table is copied and frozen. Throws ConfigError otherwise.
Encoder init_encoder(const EncoderConfig& config, std::size_t n_entities,
                     const std::vector<bool>& known, const kge::Checkpoint* pretrained,
                     std::uint64_t seed);

// Re-attaches the frozen table of an H checkpoint after loading; throws
// ConfigError on an entity-count or content-hash mismatch.
void attach_pretrained(Encoder& enc, const kge::Checkpoint& pretrained);

// One mini-batch: positive pairs and negatives shared by all of them.
struct PairBatch {
  std::vector<std::pair<EntityId, EntityId>> positives;
  std::vector<EntityId> negatives;
};

struct Gradients {
  std::vector<double> params;
  std::vector<EntityId> input_rows;     // E: touched input rows
  std::vector<double> input_grads;      // row-major, input_width per touched row
};

struct LossOptions {
  std::size_t fanout = 0;   // 0 = full neighborhoods
  double dropout = 0.0;
  bool exclude_positive_edges = true;
};

// Mean over positives of the tail-side and head-side softmax cross-entropy of
// the true pair against the shared negatives. Fills `grads` when given.
double batch_loss(const Encoder& enc, const GraphView& view, const PairBatch& batch,
                  const LossOptions& opts, Rng& rng, Gradients* grads);

// Final-layer representation of every entity over full neighborhoods.
kge::EmbeddingTable embed_all(const Encoder& enc, const GraphView& view);

// Representation of one node from its (sampled) neighborhood in `view`,
// typically the training graph plus the node's auxiliary links. A node
// without neighbors gets the zero-message embedding.
std::vector<double> embed_node(const Encoder& enc, const GraphView& view, EntityId node,
                               std::size_t fanout = 0, std::uint64_t seed = 0);

using Validator = std::function<double(const Encoder&)>;

struct InductiveTrainResult {
  Encoder best;
  Encoder last;
  std::optional<double> best_val_mrr;
  std::uint64_t steps = 0;
  double elapsed_s = 0.0;
  double final_loss = 0.0;
  bool diverged = false;
};

// Trains on the citation links of the split's training graph; every training
// relation feeds the neighborhoods. Negatives are drawn from seen entities.
InductiveTrainResult train_inductive(const GraphStore& store, const TemporalSplit& split,
                                     const EncoderConfig& config,
                                     const kge::Checkpoint* pretrained,
                                     const Validator& validate = {});

// Scores pairs by the dot product of precomputed representations.
class EncoderScorer : public eval::Scorer {
 public:
  explicit EncoderScorer(kge::EmbeddingTable embeddings) : emb_(std::move(embeddings)) {}
  void score_tails(const Quad& q, std::span<const EntityId> c, std::span<double> out) const override;
  void score_heads(const Quad& q, std::span<const EntityId> c, std::span<double> out) const override;
  const kge::EmbeddingTable& embeddings() const { return emb_; }

 private:
  kge::EmbeddingTable emb_;
};

// Graph available at evaluation time: training links plus, in inductive
// mode, the auxiliary links.
GraphView evaluation_view(const GraphStore& store, const TemporalSplit& split);

// KGI1 binary format; see docs/formats.md. H checkpoints omit the frozen
// table and store its hash.
void save_encoder(const Encoder& enc, std::ostream& out);
Encoder load_encoder(std::istream& in, const std::string& source);
void save_encoder_file(const Encoder& enc, const std::string& path);
Encoder load_encoder_file(const std::string& path);

}  // namespace citekg::ind
