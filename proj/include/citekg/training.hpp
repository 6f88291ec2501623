#pragma once
// Mini-batch training of shallow models: negative sampling, self-adversarial
// log-sigmoid and cross-entropy losses, row-wise Adagrad with lock-free
// multi-worker updates.

#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "citekg/dataset.hpp"
#include "citekg/model.hpp"

namespace citekg::kge {

enum class LossKind { LogSigmoid, CrossEntropy };
enum class OptimizerKind { Adagrad, Sgd };
enum class Side { Head, Tail };

std::string_view loss_name(LossKind k);
std::optional<LossKind> parse_loss(std::string_view s);

// n uniform draws over all entities of the store (training negatives are not
// filtered). `quad` and `side` only say which slot the draws replace.
std::vector<EntityId> sample_train_negatives(const GraphStore& store, const Quad& quad,
                                             std::size_t n, Side side, Rng& rng);
std::vector<EntityId> sample_uniform_entities(std::size_t n_entities, std::size_t n, Rng& rng);

// softmax(alpha * scores)
std::vector<double> self_adversarial_weights(std::span<const double> neg_scores, double alpha);

struct LossGrad {
  double loss = 0.0;
  double d_pos = 0.0;
  std::vector<double> d_neg;
};

// -log sig(gamma - pos) - sum_i w_i log sig(neg_i - gamma), with gradients
// with respect to pos and each neg_i. Arguments are distances, i.e. callers
// pass the negated model score.
LossGrad logsigmoid_loss(double pos, std::span<const double> neg, std::span<const double> weights,
                         double gamma);

// -log softmax(scores)[true_index] and d loss / d scores.
struct SoftmaxGrad {
  double loss = 0.0;
  std::vector<double> d_scores;
};
SoftmaxGrad softmax_cross_entropy(std::span<const double> scores, std::size_t true_index);

struct CrossEntropyResult {
  double loss = 0.0;
  std::vector<double> d_head;  // per head candidate
  std::vector<double> d_tail;  // per tail candidate
};
// Sum of the head-side and tail-side softmax losses of the true quad against
// its corruptions. Throws ContractError if the true entity is missing from a
// candidate list.
CrossEntropyResult cross_entropy_loss(const Model& model, const Quad& quad,
                                      std::span<const EntityId> head_candidates,
                                      std::span<const EntityId> tail_candidates);

struct TrainConfig {
  LossKind loss = LossKind::LogSigmoid;
  OptimizerKind optimizer = OptimizerKind::Adagrad;
  std::size_t negatives = 256;
  double lr = 0.1;
  std::size_t batch_size = 1024;
  double time_budget_s = 60.0;    // 0 returns the initialization
  std::uint64_t max_steps = 0;    // 0 = unlimited
  double max_epochs = 0.0;        // 0 = unlimited
  std::uint64_t seed = 0;
  std::size_t workers = 1;
  std::uint64_t eval_every = 0;   // steps between validation runs; 0 = only at the end
  std::ostream* progress = nullptr;  // JSON-lines {step, loss, val_mrr, elapsed_s}

  void validate() const;
};

// Row-wise Adagrad accumulators, one value per parameter row.
struct OptimizerState {
  std::array<std::vector<double>, kNumTables> accum;
  void resize_for(const Model& model);
};

// A batch of positives with explicit corruptions. `negatives` holds
// n_neg ids per positive (row-major) for the corrupted side; cross-entropy
// uses both `head_negatives` and `negatives` (tail side).
struct Batch {
  std::vector<Quad> positives;
  Side side = Side::Tail;
  std::size_t n_neg = 0;
  std::vector<EntityId> negatives;
  std::vector<EntityId> head_negatives;
};

// Applies gradient steps to a shared model. One instance per worker.
class Trainer {
 public:
  Trainer(Model& model, OptimizerState& state, const TrainConfig& config);

  // One update; returns the mean batch loss (including the L2 term). Throws
  // NumericError before touching parameters if anything is non-finite.
  double step(const Batch& batch, Rng& rng);

 private:
  struct Local;
  std::size_t slot(int group, std::uint32_t id);
  void gather();
  void apply();
  EntityRows local_rows(std::size_t slot) const;
  EntityGrads local_grads(std::size_t slot);

  Model& model_;
  OptimizerState& state_;
  TrainConfig config_;
  // group 0: entity-keyed tables, group 1: relations
  std::array<std::vector<std::int32_t>, 2> slot_of_;
  std::array<std::vector<std::uint32_t>, 2> ids_;
  std::array<std::vector<double>, kNumTables> vals_, grads_;
  ScoreScratch scratch_;
  std::vector<double> mask_, pos_buf_, neg_buf_;
};

using Validator = std::function<double(const Model&)>;

struct TrainResult {
  Checkpoint best;
  Checkpoint last;
  std::optional<double> best_val_mrr;
  std::uint64_t steps = 0;
  double elapsed_s = 0.0;
  bool diverged = false;
  std::string divergence;
};

// Trains from `init` on the given quads. Validation runs every eval_every
// steps and at the end; the best-scoring snapshot is returned. On divergence
// training stops and `last` holds the last good parameters.
TrainResult train(std::span<const Quad> quads, const Checkpoint& init, const TrainConfig& config,
                  const Validator& validate = {});
TrainResult train(const TemporalSplit& split, const Checkpoint& init, const TrainConfig& config,
                  const Validator& validate = {});

// Fresh model over the store's entity/relation sets with uniform init.
Checkpoint init_checkpoint(const GraphStore& store, const ModelConfig& config, std::uint64_t seed);

// Best published settings per model; batch size, budgets and seeds keep the
// TrainConfig defaults.
struct ShallowDefaults {
  ModelConfig model;
  TrainConfig train;
};
ShallowDefaults paper_defaults(ModelKind kind);

}  // namespace citekg::kge
