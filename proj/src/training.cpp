#include "citekg/training.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <mutex>
#include <ostream>
#include <thread>

#include "json.hpp"

namespace citekg::kge {

namespace {

// log(sigmoid(x)) without overflow.
double log_sigmoid(double x) {
  return x >= 0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x));
}

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

constexpr int group_of(std::size_t table) {
  return table == static_cast<std::size_t>(TableId::Relation) ? 1 : 0;
}

const char* table_label(std::size_t t) {
  static constexpr const char* names[] = {"entity", "relation", "amplitude", "frequency", "phase"};
  return names[t];
}

}  // namespace

std::string_view loss_name(LossKind k) {
  return k == LossKind::LogSigmoid ? "logsigmoid" : "cross-entropy";
}

std::optional<LossKind> parse_loss(std::string_view s) {
  if (s == "logsigmoid" || s == "logsigmoid-adversarial") return LossKind::LogSigmoid;
  if (s == "cross-entropy" || s == "ce") return LossKind::CrossEntropy;
  return std::nullopt;
}

std::vector<EntityId> sample_uniform_entities(std::size_t n_entities, std::size_t n, Rng& rng) {
  if (n_entities == 0) throw ConfigError("cannot sample negatives from an empty store");
  std::vector<EntityId> out(n);
  for (auto& e : out) e = static_cast<EntityId>(uniform_index(rng, n_entities));
  return out;
}

std::vector<EntityId> sample_train_negatives(const GraphStore& store, const Quad&, std::size_t n,
                                             Side, Rng& rng) {
  return sample_uniform_entities(store.num_entities(), n, rng);
}

std::vector<double> self_adversarial_weights(std::span<const double> neg_scores, double alpha) {
  std::vector<double> w(neg_scores.size());
  if (w.empty()) return w;
  double mx = -std::numeric_limits<double>::infinity();
  for (double s : neg_scores) mx = std::max(mx, alpha * s);
  double z = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) z += w[i] = std::exp(alpha * neg_scores[i] - mx);
  for (double& x : w) x /= z;
  return w;
}

LossGrad logsigmoid_loss(double pos, std::span<const double> neg, std::span<const double> weights,
                         double gamma) {
  if (neg.size() != weights.size()) throw ContractError("logsigmoid_loss: weight count mismatch");
  LossGrad out;
  out.loss = -log_sigmoid(gamma - pos);
  out.d_pos = sigmoid(pos - gamma);
  out.d_neg.resize(neg.size());
  for (std::size_t i = 0; i < neg.size(); ++i) {
    out.loss -= weights[i] * log_sigmoid(neg[i] - gamma);
    out.d_neg[i] = -weights[i] * sigmoid(gamma - neg[i]);
  }
  return out;
}

SoftmaxGrad softmax_cross_entropy(std::span<const double> scores, std::size_t true_index) {
  if (true_index >= scores.size()) throw ContractError("softmax_cross_entropy: index out of range");
  SoftmaxGrad out;
  double mx = -std::numeric_limits<double>::infinity();
  for (double s : scores) mx = std::max(mx, s);
  double z = 0.0;
  out.d_scores.resize(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) z += out.d_scores[i] = std::exp(scores[i] - mx);
  for (double& p : out.d_scores) p /= z;
  out.loss = -(scores[true_index] - mx - std::log(z));
  out.d_scores[true_index] -= 1.0;
  return out;
}

CrossEntropyResult cross_entropy_loss(const Model& model, const Quad& q,
                                      std::span<const EntityId> head_candidates,
                                      std::span<const EntityId> tail_candidates) {
  auto index_of = [](std::span<const EntityId> c, EntityId e, const char* side) {
    for (std::size_t i = 0; i < c.size(); ++i)
      if (c[i] == e) return i;
    throw ContractError(std::string("cross_entropy_loss: true entity missing from ") + side +
                        " candidates");
  };
  const std::size_t hi = index_of(head_candidates, q.s, "head");
  const std::size_t ti = index_of(tail_candidates, q.o, "tail");
  std::vector<double> hs(head_candidates.size()), ts(tail_candidates.size());
  model.score_heads(q.o, q.r, q.t, head_candidates, hs);
  model.score_tails(q.s, q.r, q.t, tail_candidates, ts);
  auto h = softmax_cross_entropy(hs, hi);
  auto t = softmax_cross_entropy(ts, ti);
  return {h.loss + t.loss, std::move(h.d_scores), std::move(t.d_scores)};
}

void TrainConfig::validate() const {
  if (negatives < 1) throw ConfigError("num_negatives must be >= 1");
  if (!(lr > 0)) throw ConfigError("learning_rate must be positive");
  if (batch_size < 1) throw ConfigError("batch size must be >= 1");
  if (time_budget_s < 0) throw ConfigError("time budget must be >= 0");
  if (max_epochs < 0) throw ConfigError("epoch limit must be >= 0");
  if (workers < 1) throw ConfigError("workers must be >= 1");
}

void OptimizerState::resize_for(const Model& model) {
  for (std::size_t t = 0; t < kNumTables; ++t)
    accum[t].assign(model.table(static_cast<TableId>(t)).rows, 0.0);
}

// ---------------------------------------------------------------------------

Trainer::Trainer(Model& model, OptimizerState& state, const TrainConfig& config)
    : model_(model), state_(state), config_(config) {
  slot_of_[0].assign(model.num_entities(), -1);
  slot_of_[1].assign(model.num_relations(), -1);
  for (std::size_t t = 0; t < kNumTables; ++t)
    if (state_.accum[t].size() != model.table(static_cast<TableId>(t)).rows)
      throw ContractError("optimizer state does not match model tables");
}

std::size_t Trainer::slot(int g, std::uint32_t id) {
  auto& s = slot_of_[g][id];
  if (s < 0) {
    s = static_cast<std::int32_t>(ids_[g].size());
    ids_[g].push_back(id);
  }
  return static_cast<std::size_t>(s);
}

void Trainer::gather() {
  for (std::size_t t = 0; t < kNumTables; ++t) {
    auto& tab = model_.table(static_cast<TableId>(t));
    const auto& ids = ids_[group_of(t)];
    vals_[t].resize(ids.size() * tab.width);
    grads_[t].assign(ids.size() * tab.width, 0.0);
    for (std::size_t i = 0; i < ids.size(); ++i)
      load_relaxed(std::span(vals_[t]).subspan(i * tab.width, tab.width), tab.row(ids[i]));
  }
}

EntityRows Trainer::local_rows(std::size_t i) const {
  auto sub = [&](TableId t) {
    const std::size_t w = model_.table(t).width;
    return std::span<const double>(vals_[static_cast<int>(t)]).subspan(i * w, w);
  };
  return {sub(TableId::Entity), sub(TableId::Amplitude), sub(TableId::Frequency),
          sub(TableId::Phase)};
}

EntityGrads Trainer::local_grads(std::size_t i) {
  auto sub = [&](TableId t) {
    const std::size_t w = model_.table(t).width;
    return std::span<double>(grads_[static_cast<int>(t)]).subspan(i * w, w);
  };
  return {sub(TableId::Entity), sub(TableId::Amplitude), sub(TableId::Frequency),
          sub(TableId::Phase)};
}

double Trainer::step(const Batch& b, Rng& rng) {
  const std::size_t B = b.positives.size();
  if (B == 0) return 0.0;
  const bool ce = config_.loss == LossKind::CrossEntropy;
  if (b.negatives.size() != B * b.n_neg || (ce && b.head_negatives.size() != B * b.n_neg))
    throw ContractError("batch negatives do not match n_neg");

  for (int g = 0; g < 2; ++g) {
    for (auto id : ids_[g]) slot_of_[g][id] = -1;
    ids_[g].clear();
  }
  for (std::size_t i = 0; i < B; ++i) {
    const Quad& q = b.positives[i];
    slot(0, q.s);
    slot(0, q.o);
    slot(1, static_cast<std::uint32_t>(q.r));
  }
  for (EntityId e : b.negatives) slot(0, e);
  for (EntityId e : b.head_negatives) slot(0, e);
  gather();

  const auto& cfg = model_.config();
  const bool use_mask = is_temporal(cfg.kind) && cfg.dropout > 0;
  const double keep = 1.0 - cfg.dropout;
  const double gamma = is_distance_model(cfg.kind) ? cfg.gamma : 0.0;
  const double inv_b = 1.0 / static_cast<double>(B);
  const std::size_t rw = model_.table(TableId::Relation).width;
  const std::size_t n = b.n_neg;
  double data_loss = 0.0;

  for (std::size_t i = 0; i < B; ++i) {
    const Quad& q = b.positives[i];
    const double tc = model_.time_code()(q.t);
    if (use_mask) {
      mask_.resize(model_.mask_width());
      for (double& m : mask_) m = uniform01(rng) < cfg.dropout ? 0.0 : 1.0 / keep;
    } else {
      mask_.clear();
    }
    const std::size_t ss = slot_of_[0][q.s], os = slot_of_[0][q.o];
    const std::size_t rs = slot_of_[1][static_cast<std::uint32_t>(q.r)];
    const auto S = local_rows(ss), O = local_rows(os);
    const auto R = std::span<const double>(vals_[1]).subspan(rs * rw, rw);
    const auto GR = std::span<double>(grads_[1]).subspan(rs * rw, rw);
    const auto GS = local_grads(ss), GO = local_grads(os);

    auto corrupted_side = [&](Side side, std::span<const EntityId> negs, std::vector<double>& out) {
      out.resize(negs.size());
      for (std::size_t j = 0; j < negs.size(); ++j) {
        const auto N = local_rows(slot_of_[0][negs[j]]);
        out[j] = side == Side::Tail ? model_.score_rows(S, R, N, tc, mask_, scratch_)
                                    : model_.score_rows(N, R, O, tc, mask_, scratch_);
      }
    };
    auto backprop_side = [&](Side side, std::span<const EntityId> negs, std::span<const double> d) {
      for (std::size_t j = 0; j < negs.size(); ++j) {
        if (d[j] == 0.0) continue;
        const std::size_t ns = slot_of_[0][negs[j]];
        const auto N = local_rows(ns);
        const auto GN = local_grads(ns);
        if (side == Side::Tail)
          model_.grad_rows(S, R, N, tc, mask_, d[j] * inv_b, GS, GR, GN, scratch_);
        else
          model_.grad_rows(N, R, O, tc, mask_, d[j] * inv_b, GN, GR, GO, scratch_);
      }
    };

    const double pos = model_.score_rows(S, R, O, tc, mask_, scratch_);
    if (!ce) {
      const auto negs = std::span(b.negatives).subspan(i * n, n);
      corrupted_side(b.side, negs, neg_buf_);
      const auto w = self_adversarial_weights(neg_buf_, cfg.alpha);
      // distances are negated scores
      pos_buf_.resize(n);
      for (std::size_t j = 0; j < n; ++j) pos_buf_[j] = -neg_buf_[j];
      const auto lg = logsigmoid_loss(-pos, pos_buf_, w, gamma);
      data_loss += lg.loss;
      model_.grad_rows(S, R, O, tc, mask_, -lg.d_pos * inv_b, GS, GR, GO, scratch_);
      for (std::size_t j = 0; j < n; ++j) pos_buf_[j] = -lg.d_neg[j];
      backprop_side(b.side, negs, pos_buf_);
    } else {
      for (Side side : {Side::Tail, Side::Head}) {
        const auto negs = std::span(side == Side::Tail ? b.negatives : b.head_negatives)
                              .subspan(i * n, n);
        corrupted_side(side, negs, neg_buf_);
        neg_buf_.insert(neg_buf_.begin(), pos);
        const auto sg = softmax_cross_entropy(neg_buf_, 0);
        data_loss += sg.loss;
        model_.grad_rows(S, R, O, tc, mask_, sg.d_scores[0] * inv_b, GS, GR, GO, scratch_);
        backprop_side(side, negs, std::span(sg.d_scores).subspan(1));
      }
    }
  }

  double loss = data_loss * inv_b;
  const double lambda = cfg.reg;
  for (std::size_t t = 0; t < kNumTables; ++t) {
    auto& v = vals_[t];
    auto& g = grads_[t];
    if (lambda > 0)
      for (std::size_t k = 0; k < v.size(); ++k) {
        loss += lambda * v[k] * v[k];
        g[k] += 2.0 * lambda * v[k];
      }
  }
  if (!std::isfinite(loss)) throw NumericError("non-finite training loss");
  for (std::size_t t = 0; t < kNumTables; ++t) {
    const std::size_t w = model_.table(static_cast<TableId>(t)).width;
    for (std::size_t k = 0; k < grads_[t].size(); ++k)
      if (!std::isfinite(grads_[t][k]))
        throw NumericError(std::string("non-finite gradient in ") + table_label(t) + " row " +
                           std::to_string(ids_[group_of(t)][k / w]));
  }
  apply();
  return loss;
}

void Trainer::apply() {
  const bool adagrad = config_.optimizer == OptimizerKind::Adagrad;
  const bool phases = model_.config().kind == ModelKind::RotatE;
  for (std::size_t t = 0; t < kNumTables; ++t) {
    auto& tab = model_.table(static_cast<TableId>(t));
    const std::size_t w = tab.width;
    if (w == 0) continue;
    const auto& ids = ids_[group_of(t)];
    for (std::size_t i = 0; i < ids.size(); ++i) {
      auto v = std::span(vals_[t]).subspan(i * w, w);
      const auto g = std::span<const double>(grads_[t]).subspan(i * w, w);
      double step = config_.lr;
      if (adagrad) {
        double sq = 0.0;
        for (double x : g) sq += x * x;
        std::atomic_ref<double> acc(state_.accum[t][ids[i]]);
        const double a = acc.load(std::memory_order_relaxed) + sq / static_cast<double>(w);
        acc.store(a, std::memory_order_relaxed);
        step = config_.lr / (std::sqrt(a) + 1e-10);
      }
      for (std::size_t k = 0; k < w; ++k) v[k] -= step * g[k];
      if (phases && t == static_cast<std::size_t>(TableId::Relation)) model_.normalize_phases(v);
      store_relaxed(tab.row(ids[i]), v);
    }
  }
}

// ---------------------------------------------------------------------------

Checkpoint init_checkpoint(const GraphStore& store, const ModelConfig& config, std::uint64_t seed) {
  Checkpoint c;
  c.model = Model(config, store.num_entities(), kNumRelations,
                  TimeCode{store.min_time(), store.max_time()});
  Rng rng(seed);
  c.model.init_uniform(rng);
  return c;
}

ShallowDefaults paper_defaults(ModelKind kind) {
  ShallowDefaults d;
  d.model.kind = kind;
  d.model.reg = 1e-6;
  switch (kind) {
    case ModelKind::ComplEx:
      d.model.dim = 200;
      d.model.alpha = 0.25;
      d.train.lr = 0.3;
      d.train.negatives = 512;
      break;
    case ModelKind::RotatE:
      d.model.dim = 50;
      d.model.alpha = 1.0;
      d.model.gamma = 6.0;
      d.train.lr = 0.1;
      d.train.negatives = 64;
      break;
    case ModelKind::DETransE:
    case ModelKind::DEDistMult:
      d.model.dim = 100;
      d.model.psi = 0.08;
      d.train.lr = 0.1;
      d.train.negatives = 512;
      d.train.loss = LossKind::CrossEntropy;
      if (kind == ModelKind::DETransE) {
        d.model.reg = 0.0;
        d.model.alpha = 0.25;
        d.model.gamma = 6.0;
      } else {
        d.model.dropout = 0.1;
        d.model.alpha = 0.0;
      }
      break;
  }
  return d;
}

namespace {

Model snapshot(Model& live) {
  Model copy = live;
  for (std::size_t t = 0; t < kNumTables; ++t) {
    auto& src = live.table(static_cast<TableId>(t)).values;
    load_relaxed(copy.table(static_cast<TableId>(t)).values, src);
  }
  return copy;
}

std::array<std::vector<double>, kNumTables> snapshot(OptimizerState& s) {
  auto copy = s.accum;
  for (std::size_t t = 0; t < kNumTables; ++t) load_relaxed(copy[t], s.accum[t]);
  return copy;
}

}  // namespace

TrainResult train(std::span<const Quad> quads, const Checkpoint& init, const TrainConfig& config,
                  const Validator& validate) {
  config.validate();
  if (quads.empty()) throw ConfigError("no training quads");
  using clock = std::chrono::steady_clock;
  const auto t0 = clock::now();
  auto elapsed = [&] { return std::chrono::duration<double>(clock::now() - t0).count(); };

  TrainResult res;
  Model model = init.model;
  OptimizerState state;
  state.resize_for(model);
  bool resumed_state = true;
  for (std::size_t t = 0; t < kNumTables; ++t)
    resumed_state = resumed_state && init.optimizer[t].size() == state.accum[t].size();
  if (resumed_state) state.accum = init.optimizer;

  Rng master(config.seed);
  if (!init.rng_state.empty()) set_rng_state(master, init.rng_state);

  auto make_ckpt = [&](Model m, std::uint64_t step, const Rng& rng) {
    Checkpoint c;
    c.model = std::move(m);
    c.step = step;
    c.rng_state = rng_state(rng);
    c.optimizer = snapshot(state);
    return c;
  };

  std::mutex log_mu;
  auto log = [&](std::uint64_t step, double loss, std::optional<double> val) {
    if (!config.progress) return;
    nlohmann::json j;
    j["step"] = step;
    j["loss"] = std::isfinite(loss) ? nlohmann::json(loss) : nlohmann::json(nullptr);
    j["val_mrr"] = val ? nlohmann::json(*val) : nlohmann::json(nullptr);
    j["elapsed_s"] = elapsed();
    std::lock_guard lk(log_mu);
    *config.progress << j.dump() << '\n';
  };

  res.best = init;
  if (validate) res.best_val_mrr = validate(model);
  if (config.time_budget_s <= 0) {
    res.last = init;
    log(init.step, std::nan(""), res.best_val_mrr);
    return res;
  }

  const std::size_t W = config.workers;
  std::vector<Rng> rngs;
  if (W == 1) {
    rngs.push_back(master);
  } else {
    for (std::size_t w = 0; w < W; ++w) rngs.emplace_back(mix_seed(master(), w));
  }

  std::atomic<std::uint64_t> claimed{0}, done{0};
  std::atomic<bool> stop{false};
  std::mutex best_mu;
  std::string divergence;
  const std::uint64_t first_step = init.step;
  const std::size_t n_entities = model.num_entities();

  auto consider = [&](std::uint64_t step, double loss, const Rng& rng) {
    Model snap = snapshot(model);
    std::optional<double> val;
    if (validate) val = validate(snap);
    log(step, loss, val);
    std::lock_guard lk(best_mu);
    if (val && (!res.best_val_mrr || *val > *res.best_val_mrr)) {
      res.best_val_mrr = val;
      res.best = make_ckpt(std::move(snap), step, rng);
    }
  };

  auto worker = [&](std::size_t w) {
    Rng& rng = rngs[w];
    Trainer trainer(model, state, config);
    std::vector<std::uint32_t> perm;
    for (std::size_t i = w; i < quads.size(); i += W) perm.push_back(static_cast<std::uint32_t>(i));
    if (perm.empty()) return;
    const double limit = config.max_epochs > 0
                             ? config.max_epochs * static_cast<double>(perm.size())
                             : std::numeric_limits<double>::infinity();
    std::size_t pos = perm.size();
    double consumed = 0;
    std::uint64_t local = 0;
    double loss_acc = 0;
    std::size_t loss_n = 0;
    Batch batch;
    const bool ce = config.loss == LossKind::CrossEntropy;
    while (!stop.load(std::memory_order_relaxed)) {
      if (elapsed() >= config.time_budget_s || consumed >= limit) break;
      if (config.max_steps && claimed.fetch_add(1) >= config.max_steps) break;
      batch.positives.clear();
      while (batch.positives.size() < config.batch_size && consumed < limit) {
        if (pos == perm.size()) {
          shuffle(perm, rng);
          pos = 0;
        }
        batch.positives.push_back(quads[perm[pos++]]);
        consumed += 1;
      }
      batch.side = local++ % 2 == 0 ? Side::Tail : Side::Head;
      batch.n_neg = config.negatives;
      batch.negatives = sample_uniform_entities(n_entities, batch.positives.size() * batch.n_neg, rng);
      if (ce)
        batch.head_negatives =
            sample_uniform_entities(n_entities, batch.positives.size() * batch.n_neg, rng);
      else
        batch.head_negatives.clear();
      try {
        loss_acc += trainer.step(batch, rng);
        ++loss_n;
      } catch (const NumericError& e) {
        std::lock_guard lk(best_mu);
        if (divergence.empty())
          divergence = e.what() + (" at step " + std::to_string(first_step + done.load() + 1));
        stop = true;
        break;
      }
      const std::uint64_t step = first_step + done.fetch_add(1) + 1;
      if (w == 0 && config.eval_every && step % config.eval_every == 0) {
        consider(step, loss_acc / static_cast<double>(loss_n), rng);
        loss_acc = 0;
        loss_n = 0;
      }
    }
    stop = true;
  };

  if (W == 1) {
    worker(0);
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < W; ++w) pool.emplace_back(worker, w);
  }

  const std::uint64_t final_step = first_step + done.load();
  res.steps = final_step - first_step;
  res.elapsed_s = elapsed();
  res.diverged = !divergence.empty();
  res.divergence = divergence;
  res.last = make_ckpt(model, final_step, rngs[0]);
  if (!res.diverged && !(config.eval_every && final_step % config.eval_every == 0 && validate))
    consider(final_step, std::nan(""), rngs[0]);
  if (!validate) res.best = res.last;
  return res;
}

TrainResult train(const TemporalSplit& split, const Checkpoint& init, const TrainConfig& config,
                  const Validator& validate) {
  const auto quads = split.training_quads();
  return train(std::span<const Quad>(quads), init, config, validate);
}

}  // namespace citekg::kge
