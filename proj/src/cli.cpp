#include "citekg/cli.hpp"

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "citekg/community.hpp"
#include "citekg/dataset.hpp"
#include "citekg/evaluation.hpp"
#include "citekg/inductive.hpp"
#include "citekg/synthetic.hpp"
#include "citekg/training.hpp"
#include "json.hpp"

namespace citekg::cli {

namespace {

using json = nlohmann::ordered_json;
namespace fs = std::filesystem;

std::string resolve(const std::string& path) {
  if (path.empty() || fs::path(path).is_absolute()) return path;
  const char* dir = std::getenv("CITEKG_DATA_DIR");
  if (dir == nullptr || *dir == '\0') return path;
  return (fs::path(dir) / path).string();
}

std::size_t default_workers() { return std::max(1u, std::thread::hardware_concurrency()); }

Date need_date(const std::string& text, const std::string& flag) {
  const auto d = parse_date(text);
  if (!d) throw ConfigError(flag + ": malformed date '" + text + "'");
  return *d;
}

template <class T>
T need(std::optional<T> v, const std::string& what, const std::string& text) {
  if (!v) throw ConfigError("unknown " + what + " '" + text + "'");
  return *v;
}

std::string file_magic(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path);
  char m[4] = {};
  in.read(m, 4);
  return std::string(m, static_cast<std::size_t>(in.gcount()));
}

bool has_suffix(const std::string& s, std::string_view suf) {
  return s.size() >= suf.size() && s.compare(s.size() - suf.size(), suf.size(), suf) == 0;
}

// KGF1 stores, JSON-lines records or quad TSV, by content and extension.
GraphStore read_store(const std::string& path) {
  if (file_magic(path) == "KGF1") return load_store_file(path);
  if (has_suffix(path, ".jsonl") || has_suffix(path, ".json"))
    return ingest_jsonl_file(path, JsonlMapping{});
  return ingest_tsv_file(path, IngestOptions{});
}

std::uint64_t store_hash(const GraphStore& store) {
  std::ostringstream buf;
  save_store(store, buf);
  Fnv1a h;
  h.update(buf.str());
  return h.digest();
}

// Files are written next to their destination and renamed into place only
// when the whole command succeeds.
class Outputs {
 public:
  ~Outputs() {
    if (committed_) return;
    std::error_code ec;
    for (const auto& f : files_) fs::remove(f.staged, ec);
  }

  std::ofstream open(const std::string& path, bool logged_only = false) {
    const std::string staged = path + ".partial";
    if (const auto dir = fs::path(path).parent_path(); !dir.empty()) fs::create_directories(dir);
    std::ofstream out(staged, std::ios::binary | std::ios::trunc);
    if (!out) throw ConfigError("cannot write " + path);
    files_.push_back({path, staged, logged_only});
    return out;
  }

  // Hashes of the staged artifacts; logs are listed without one.
  json describe() const {
    json arr = json::array();
    for (const auto& f : files_) {
      json j;
      j["path"] = f.path;
      if (!f.logged_only) j["hash"] = hex64(hash_file(f.staged));
      arr.push_back(j);
    }
    return arr;
  }

  void commit() {
    for (const auto& f : files_) fs::rename(f.staged, f.path);
    committed_ = true;
  }

 private:
  struct File {
    std::string path, staged;
    bool logged_only;
  };
  std::vector<File> files_;
  bool committed_ = false;
};

json input_entry(const std::string& path) {
  json j;
  j["path"] = path;
  j["hash"] = hex64(hash_file(path));
  return j;
}

void write_manifest(Outputs& outs, const std::string& primary, const std::string& command,
                    const json& config, const std::vector<std::string>& inputs,
                    const json& result = json::object()) {
  json m;
  m["command"] = command;
  m["config"] = config;
  m["inputs"] = json::array();
  for (const auto& p : inputs) m["inputs"].push_back(input_entry(p));
  m["outputs"] = outs.describe();
  if (!result.empty()) m["result"] = result;
  auto f = outs.open(primary + ".manifest.json");
  f << m.dump(2) << '\n';
}

void finish(std::ofstream& f) {
  f.close();
  if (!f) throw ConfigError("write failed");
}

// ---------------------------------------------------------------------------
// Split settings shared by the training and evaluation commands.

struct SplitArgs {
  std::string file;
  std::string valid, test;
  std::string mode = "transductive";
  std::string phase = "validation";

  void add(CLI::App* app) {
    app->add_option("--split", file, "split file written by `citekg split`");
    app->add_option("--valid", valid, "validation threshold date (without --split)");
    app->add_option("--test", test, "test threshold date (without --split)");
    app->add_option("--mode", mode, "transductive | inductive")->capture_default_str();
    app->add_option("--phase", phase, "validation | test")->capture_default_str();
  }
};

SplitPhase parse_phase(const std::string& s) {
  if (s == "validation") return SplitPhase::Validation;
  if (s == "test") return SplitPhase::Test;
  throw ConfigError("unknown phase '" + s + "'");
}

struct ResolvedSplit {
  Date valid, test;
  SplitMode mode;
  SplitPhase phase;

  json to_json() const {
    json j;
    j["valid"] = format_date(valid);
    j["test"] = format_date(test);
    j["mode"] = mode_name(mode);
    j["phase"] = phase == SplitPhase::Validation ? "validation" : "test";
    return j;
  }
};

ResolvedSplit resolve_split(const SplitArgs& a, const GraphStore& store, std::vector<std::string>& inputs) {
  if (!a.file.empty()) {
    const std::string path = resolve(a.file);
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open " + path);
    json j;
    try {
      j = json::parse(in);
    } catch (const json::exception& e) {
      throw ParseError(path, 0, e.what());
    }
    inputs.push_back(path);
    try {
      if (j.at("store_hash").get<std::string>() != hex64(store_hash(store)))
        throw ConfigError(path + ": split was made for a different store");
      return {need_date(j.at("valid").get<std::string>(), "valid"),
              need_date(j.at("test").get<std::string>(), "test"),
              need(parse_mode(j.at("mode").get<std::string>()), "mode", j.at("mode").get<std::string>()),
              parse_phase(j.at("phase").get<std::string>())};
    } catch (const json::exception& e) {
      throw SchemaError(path + ": " + e.what());
    }
  }
  if (a.valid.empty() || a.test.empty()) throw ConfigError("give --split or both --valid and --test");
  return {need_date(a.valid, "--valid"), need_date(a.test, "--test"), need(parse_mode(a.mode), "mode", a.mode),
          parse_phase(a.phase)};
}

TemporalSplit build_split(const GraphStore& store, const ResolvedSplit& r) {
  TemporalSplit s = temporal_split(store, r.valid, r.test, r.mode);
  if (r.phase == SplitPhase::Test) s = merge_validation_into_train(store, s);
  return s;
}

eval::StrategyContext strategy_context(const GraphStore& store, const eval::KnownLinks& known,
                                       const TemporalSplit& split) {
  eval::StrategyContext ctx;
  ctx.store = &store;
  ctx.known = &known;
  ctx.period_begin = split.threshold();
  ctx.period_end = split.period_end();
  return ctx;
}

// ---------------------------------------------------------------------------
// Scorers from either checkpoint format.

struct LoadedScorer {
  std::unique_ptr<kge::Model> model;  // referenced by a ModelScorer
  std::unique_ptr<eval::Scorer> scorer;
  json info;
};

LoadedScorer load_scorer(const std::string& path, const std::string& pretrained_path,
                         const GraphStore& store, const TemporalSplit* split, bool random_unseen,
                         std::uint64_t seed, std::size_t workers, std::vector<std::string>& inputs) {
  inputs.push_back(path);
  LoadedScorer out;
  const std::string magic = file_magic(path);
  if (magic == "KGE1") {
    auto ckpt = kge::load_checkpoint_file(path);
    ckpt.validate_against(store);
    if (random_unseen) {
      if (split == nullptr) throw ConfigError("--random-init needs a split");
      std::vector<EntityId> unseen;
      for (EntityId e = 0; e < store.num_entities(); ++e)
        if (!split->seen[e]) unseen.push_back(e);
      Rng rng(mix_seed(seed, 0x72616e64));
      ckpt.model.reinit_entities(unseen, rng);
    }
    out.info["model"] = kge::model_name(ckpt.model.config().kind);
    out.model = std::make_unique<kge::Model>(std::move(ckpt.model));
    out.scorer = std::make_unique<eval::ModelScorer>(*out.model);
    return out;
  }
  if (magic != "KGI1") throw ConfigError(path + ": not a KGE1 or KGI1 checkpoint");
  if (random_unseen) throw ConfigError("--random-init applies to shallow checkpoints only");
  auto enc = ind::load_encoder_file(path);
  if (enc.num_entities() != store.num_entities())
    throw ConfigError(path + ": checkpoint entity count does not match the store");
  if (enc.config.variant == ind::Variant::H) {
    if (pretrained_path.empty()) throw ConfigError("an H encoder needs --pretrained");
    inputs.push_back(pretrained_path);
    ind::attach_pretrained(enc, kge::load_checkpoint_file(pretrained_path));
  }
  enc.config.workers = workers;
  const ind::GraphView view = split != nullptr ? ind::evaluation_view(store, *split)
                                               : ind::GraphView(store.num_entities(), store.quads());
  out.info["encoder"] = ind::encoder_name(enc.config.kind);
  out.info["variant"] = ind::variant_name(enc.config.variant);
  out.scorer = std::make_unique<ind::EncoderScorer>(ind::embed_all(enc, view));
  return out;
}

std::vector<std::int32_t> read_communities(const std::string& path, const GraphStore& store,
                                           std::vector<std::string>& inputs) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path);
  inputs.push_back(path);
  return community::read_partition_tsv(store, in, path);
}

json report_json(const eval::RankingReport& rep) {
  json j;
  j["strategy"] = rep.strategy;
  j["n_neg"] = rep.n_neg;
  j["queries"] = rep.ranks.size();
  j["mrr"] = rep.mrr;
  j["hits1"] = rep.hits1;
  j["hits10"] = rep.hits10;
  j["hits50"] = rep.hits50;
  j["with_replacement"] = rep.with_replacement;
  j["fallbacks"] = rep.fallbacks;
  return j;
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  for (std::string item; std::getline(ss, item, ',');)
    if (!item.empty()) out.push_back(item);
  return out;
}

// ---------------------------------------------------------------------------

struct Common {
  std::uint64_t seed = 0;
  std::size_t workers = default_workers();

  void add(CLI::App* app, bool stochastic = true) {
    if (stochastic) app->add_option("--seed", seed, "random seed")->capture_default_str();
    app->add_option("--workers", workers, "worker threads; 1 makes every run reproducible")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);
  }
};

struct IngestArgs {
  std::string input, output, format, classes, mapping;
  bool skip_unknown = false;
};

void cmd_ingest(const IngestArgs& a, std::ostream& out) {
  const std::string input = resolve(a.input), output = resolve(a.output);
  std::vector<std::string> inputs = {input};
  std::string format = a.format;
  if (format.empty()) format = has_suffix(input, ".jsonl") || has_suffix(input, ".json") ? "jsonl" : "tsv";
  IngestStats stats;
  GraphStore store;
  if (format == "tsv") {
    IngestOptions opts;
    opts.skip_unknown_relations = a.skip_unknown;
    std::optional<std::string> classes;
    if (!a.classes.empty()) {
      classes = resolve(a.classes);
      inputs.push_back(*classes);
    }
    store = ingest_tsv_file(input, opts, &stats, classes);
  } else if (format == "jsonl") {
    JsonlMapping mapping;
    if (!a.mapping.empty()) {
      const std::string path = resolve(a.mapping);
      std::ifstream in(path);
      if (!in) throw ConfigError("cannot open " + path);
      inputs.push_back(path);
      mapping = JsonlMapping::from_json_text(std::string(std::istreambuf_iterator<char>(in), {}));
    }
    store = ingest_jsonl_file(input, mapping, &stats);
  } else {
    throw ConfigError("unknown format '" + format + "'");
  }
  Outputs outs;
  auto f = outs.open(output);
  save_store(store, f);
  finish(f);
  json cfg;
  cfg["input"] = input;
  cfg["format"] = format;
  cfg["skip_unknown_relations"] = a.skip_unknown;
  json res;
  res["entities"] = store.num_entities();
  res["quads"] = store.num_quads();
  res["rows"] = stats.rows;
  res["duplicates"] = stats.duplicates;
  res["skipped_unknown"] = stats.skipped_unknown;
  res["ignored_fields"] = stats.ignored_fields;
  write_manifest(outs, output, "ingest", cfg, inputs, res);
  outs.commit();
  out << res.dump() << '\n';
}

struct GenerateArgs {
  PlantedConfig planted;
  std::string output, tsv;
};

void cmd_generate(GenerateArgs a, const Common& c, std::ostream& out) {
  a.planted.seed = c.seed;
  const auto g = planted_citation_graph(a.planted);
  const std::string output = resolve(a.output);
  Outputs outs;
  auto f = outs.open(output);
  save_store(g.store, f);
  finish(f);
  if (!a.tsv.empty()) {
    auto t = outs.open(resolve(a.tsv));
    export_tsv(g.store, t);
    finish(t);
  }
  const auto& p = a.planted;
  json cfg;
  cfg["works"] = p.works;
  cfg["blocks"] = p.blocks;
  cfg["topics_per_block"] = p.topics_per_block;
  cfg["first_year"] = p.first_year;
  cfg["last_year"] = p.last_year;
  cfg["window_years"] = p.window_years;
  cfg["cite_prob"] = p.cite_prob;
  cfg["block_rate"] = p.block_rate;
  cfg["cross_rate"] = p.cross_rate;
  cfg["seed"] = p.seed;
  json res;
  res["entities"] = g.store.num_entities();
  res["quads"] = g.store.num_quads();
  write_manifest(outs, output, "generate", cfg, {}, res);
  outs.commit();
  out << res.dump() << '\n';
}

struct SampleArgs {
  std::string store, output;
  std::size_t works = 0;
  std::size_t seeds = 10;
  bool keep_isolated = false;
};

void cmd_sample(const SampleArgs& a, const Common& c, std::ostream& out) {
  const std::string input = resolve(a.store), output = resolve(a.output);
  GraphStore store = read_store(input);
  if (!a.keep_isolated) store = drop_isolated_works(store);
  const auto res = snowball_sample(store, a.works, a.seeds, c.seed);
  Outputs outs;
  auto f = outs.open(output);
  save_store(res.store, f);
  finish(f);
  json cfg;
  cfg["works"] = a.works;
  cfg["seeds"] = a.seeds;
  cfg["drop_isolated"] = !a.keep_isolated;
  cfg["seed"] = c.seed;
  json r;
  r["sampled_works"] = res.sampled_works;
  r["target_reached"] = res.target_reached;
  r["entities"] = res.store.num_entities();
  r["quads"] = res.store.num_quads();
  write_manifest(outs, output, "sample", cfg, {input}, r);
  outs.commit();
  out << r.dump() << '\n';
}

struct AblateArgs {
  std::string store, output, keep;
};

void cmd_ablate(const AblateArgs& a, std::ostream& out) {
  const std::string input = resolve(a.store), output = resolve(a.output);
  const ClassSet keep = ClassSet::parse(a.keep);
  validate_ablation(keep);
  const GraphStore variant = ablation_variant(read_store(input), keep);
  Outputs outs;
  auto f = outs.open(output);
  save_store(variant, f);
  finish(f);
  json cfg;
  cfg["keep"] = a.keep;
  json r;
  r["variant"] = keep.variant_name();
  r["entities"] = variant.num_entities();
  r["quads"] = variant.num_quads();
  write_manifest(outs, output, "ablate", cfg, {input}, r);
  outs.commit();
  out << r.dump() << '\n';
}

struct SplitCmdArgs {
  std::string store, output, export_dir;
  SplitArgs split;
};

void write_quads(std::ostream& out, const GraphStore& store, std::span<const Quad> quads) {
  out << "node1\tlabel\tnode2\ttime\n";
  for (const Quad& q : quads)
    out << store.name(q.s) << '\t' << relation_label(q.r) << '\t' << store.name(q.o) << '\t'
        << format_date(q.t) << '\n';
}

void cmd_split(const SplitCmdArgs& a, std::ostream& out) {
  const std::string input = resolve(a.store), output = resolve(a.output);
  const GraphStore store = read_store(input);
  std::vector<std::string> inputs = {input};
  if (!a.split.file.empty()) throw ConfigError("split takes --valid/--test, not --split");
  const auto r = resolve_split(a.split, store, inputs);
  if (r.valid >= r.test) throw ConfigError("--valid must precede --test");
  TemporalSplit s = classify_split(store, r.valid, r.test, r.mode, SplitPhase::Validation);
  if (r.phase == SplitPhase::Test) s = merge_validation_into_train(store, s);

  json j = r.to_json();
  j["store_hash"] = hex64(store_hash(store));
  json works;
  std::size_t train_w = 0, valid_w = 0, test_w = 0, undated = 0;
  for (EntityId w : store.entities_of_class(EntityClass::Work)) {
    const auto d = store.publication_date(w);
    if (!d) ++undated;
    else if (*d < r.valid) ++train_w;
    else if (*d < r.test) ++valid_w;
    else ++test_w;
  }
  works["train"] = train_w;
  works["validation"] = valid_w;
  works["test"] = test_w;
  works["undated"] = undated;
  j["works"] = works;
  json counts;
  counts["train"] = s.train.size();
  counts["eval_targets"] = s.eval_targets.size();
  counts["exo"] = s.exo.size();
  counts["unattached"] = s.unattached.size();
  counts["future"] = s.future.size();
  counts["seen_entities"] = std::count(s.seen.begin(), s.seen.end(), true);
  j["counts"] = counts;

  Outputs outs;
  auto f = outs.open(output);
  f << j.dump(2) << '\n';
  finish(f);
  if (!a.export_dir.empty()) {
    const fs::path dir = resolve(a.export_dir);
    const std::pair<const char*, const std::vector<Quad>*> parts[] = {
        {"train.tsv", &s.train}, {"eval_targets.tsv", &s.eval_targets}, {"exo.tsv", &s.exo},
        {"unattached.tsv", &s.unattached}, {"future.tsv", &s.future}};
    for (auto [name, quads] : parts) {
      auto t = outs.open((dir / name).string());
      write_quads(t, store, *quads);
      finish(t);
    }
  }
  write_manifest(outs, output, "split", r.to_json(), inputs, counts);
  outs.commit();
  out << j.dump() << '\n';
}

struct QcArgs {
  std::string store, output;
};

void cmd_qc(const QcArgs& a, std::ostream& out) {
  const std::string input = resolve(a.store);
  const GraphStore store = read_store(input);
  const auto q = quality_report(store);
  auto pct = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
  json j;
  j["mutual_citation_pct"] = pct(q.mutual_citation_pct);
  j["authorship_completeness_pct"] = pct(q.authorship_completeness_pct);
  j["venue_completeness_pct"] = pct(q.venue_completeness_pct);
  j["institution_completeness_pct"] = pct(q.institution_completeness_pct);
  j["works"] = store.count_class(EntityClass::Work);
  j["cites"] = store.count_relation(Relation::Cites);
  if (!a.output.empty()) {
    const std::string output = resolve(a.output);
    Outputs outs;
    auto f = outs.open(output);
    f << j.dump(2) << '\n';
    finish(f);
    write_manifest(outs, output, "qc", json::object(), {input});
    outs.commit();
  }
  out << j.dump() << '\n';
}

// ---------------------------------------------------------------------------

struct TrainArgs {
  std::string store, output, log, pretrained;
  SplitArgs split;
  std::optional<std::string> model, encoder;
  std::string variant = "E";
  std::optional<std::size_t> dim, negatives, batch, layers, fanout, bases;
  std::optional<double> lr, reg, alpha, gamma, psi, dropout;
  std::optional<std::string> loss, aggregator, norm;
  double time_budget = 60.0;
  std::uint64_t max_steps = 0;
  double max_epochs = 0.0;
  std::uint64_t eval_every = 0;
  std::size_t val_negatives = 1000;
};

template <class T>
void override(T& field, const std::optional<T>& v) {
  if (v) field = *v;
}

void cmd_train(const TrainArgs& a, const Common& c, std::ostream& out) {
  if (a.model.has_value() == a.encoder.has_value()) throw ConfigError("give exactly one of --model or --encoder");
  const std::string input = resolve(a.store), output = resolve(a.output);
  std::vector<std::string> inputs = {input};
  const GraphStore store = read_store(input);
  const auto rs = resolve_split(a.split, store, inputs);
  const TemporalSplit split = build_split(store, rs);
  const eval::KnownLinks known(store.quads());
  const auto ctx = strategy_context(store, known, split);
  eval::EvalOptions eo;
  eo.n_neg = a.val_negatives;
  eo.seed = mix_seed(c.seed, 0x76616c);
  eo.workers = c.workers;

  Outputs outs;
  std::ofstream log;
  if (!a.log.empty()) log = outs.open(resolve(a.log), true);
  json cfg;
  cfg["split"] = rs.to_json();
  json res;

  if (a.model) {
    const auto kind = need(kge::parse_model(*a.model), "model", *a.model);
    if (!a.pretrained.empty()) throw ConfigError("--pretrained applies to H encoders only");
    auto d = kge::paper_defaults(kind);
    override(d.model.dim, a.dim);
    override(d.model.reg, a.reg);
    override(d.model.alpha, a.alpha);
    override(d.model.gamma, a.gamma);
    override(d.model.psi, a.psi);
    override(d.model.dropout, a.dropout);
    override(d.train.negatives, a.negatives);
    override(d.train.lr, a.lr);
    override(d.train.batch_size, a.batch);
    if (a.loss) d.train.loss = need(kge::parse_loss(*a.loss), "loss", *a.loss);
    d.train.time_budget_s = a.time_budget;
    d.train.max_steps = a.max_steps;
    d.train.max_epochs = a.max_epochs;
    d.train.eval_every = a.eval_every;
    d.train.seed = c.seed;
    d.train.workers = c.workers;
    if (log.is_open()) d.train.progress = &log;
    d.model.validate();
    d.train.validate();
    const auto init = kge::init_checkpoint(store, d.model, c.seed);
    auto validator = [&](const kge::Model& m) {
      return eval::evaluate(eval::ModelScorer(m), split.eval_targets, ctx, eo).mrr;
    };
    const auto r = kge::train(split, init, d.train, validator);
    if (r.diverged) throw NumericError("training diverged: " + r.divergence);
    auto f = outs.open(output);
    kge::save_checkpoint(r.best, f);
    finish(f);
    cfg["model"] = kge::model_name(kind);
    cfg["dim"] = d.model.dim;
    cfg["gamma"] = d.model.gamma;
    cfg["alpha"] = d.model.alpha;
    cfg["reg"] = d.model.reg;
    cfg["dropout"] = d.model.dropout;
    cfg["psi"] = d.model.psi;
    cfg["loss"] = kge::loss_name(d.train.loss);
    cfg["negatives"] = d.train.negatives;
    cfg["lr"] = d.train.lr;
    cfg["batch_size"] = d.train.batch_size;
    res["steps"] = r.steps;
    res["best_val_mrr"] = r.best_val_mrr ? json(*r.best_val_mrr) : json(nullptr);
  } else {
    const auto kind = need(ind::parse_encoder(*a.encoder), "encoder", *a.encoder);
    const auto variant = need(ind::parse_variant(a.variant), "variant", a.variant);
    auto e = ind::paper_defaults(kind, variant);
    override(e.dim, a.dim);
    override(e.negatives, a.negatives);
    override(e.batch_size, a.batch);
    override(e.layers, a.layers);
    override(e.fanout, a.fanout);
    override(e.n_bases, a.bases);
    override(e.lr, a.lr);
    override(e.dropout, a.dropout);
    if (a.aggregator) e.aggregator = need(ind::parse_aggregator(*a.aggregator), "aggregator", *a.aggregator);
    if (a.norm) e.norm = need(ind::parse_norm(*a.norm), "norm", *a.norm);
    e.time_budget_s = a.time_budget;
    e.max_steps = a.max_steps;
    e.max_epochs = a.max_epochs;
    e.eval_every = a.eval_every;
    e.seed = c.seed;
    e.workers = c.workers;
    if (log.is_open()) e.progress = &log;
    e.validate();
    std::optional<kge::Checkpoint> pre;
    if (variant == ind::Variant::H) {
      if (a.pretrained.empty()) throw ConfigError("an H encoder needs --pretrained");
      const std::string p = resolve(a.pretrained);
      inputs.push_back(p);
      pre = kge::load_checkpoint_file(p);
    } else if (!a.pretrained.empty()) {
      throw ConfigError("--pretrained applies to H encoders only");
    }
    const auto view = ind::evaluation_view(store, split);
    auto validator = [&](const ind::Encoder& enc) {
      return eval::evaluate(ind::EncoderScorer(ind::embed_all(enc, view)), split.eval_targets, ctx, eo).mrr;
    };
    const auto r = ind::train_inductive(store, split, e, pre ? &*pre : nullptr, validator);
    if (r.diverged) throw NumericError("training diverged");
    auto f = outs.open(output);
    ind::save_encoder(r.best, f);
    finish(f);
    cfg["encoder"] = ind::encoder_name(kind);
    cfg["variant"] = ind::variant_name(variant);
    cfg["layers"] = e.layers;
    cfg["dim"] = e.dim;
    cfg["fanout"] = e.fanout;
    cfg["aggregator"] = ind::aggregator_name(e.aggregator);
    cfg["norm"] = ind::norm_name(e.norm);
    cfg["bases"] = e.n_bases;
    cfg["dropout"] = e.dropout;
    cfg["negatives"] = e.negatives;
    cfg["lr"] = e.lr;
    cfg["batch_size"] = e.batch_size;
    res["steps"] = r.steps;
    res["best_val_mrr"] = r.best_val_mrr ? json(*r.best_val_mrr) : json(nullptr);
  }
  cfg["time_budget_s"] = a.time_budget;
  cfg["max_steps"] = a.max_steps;
  cfg["max_epochs"] = a.max_epochs;
  cfg["eval_every"] = a.eval_every;
  cfg["val_negatives"] = a.val_negatives;
  cfg["seed"] = c.seed;
  cfg["workers"] = c.workers;
  if (log.is_open()) finish(log);
  write_manifest(outs, output, "train", cfg, inputs, res);
  outs.commit();
  out << res.dump() << '\n';
}

struct EvalArgs {
  std::string store, checkpoint, pretrained, output, ranks, communities;
  SplitArgs split;
  std::string strategy = "random";
  std::size_t n_neg = 1000;
  bool heads = false, fallback = false, random_init = false;
};

void cmd_eval(const EvalArgs& a, const Common& c, std::ostream& out) {
  const std::string input = resolve(a.store), output = resolve(a.output);
  std::vector<std::string> inputs = {input};
  const GraphStore store = read_store(input);
  const auto rs = resolve_split(a.split, store, inputs);
  const TemporalSplit split = build_split(store, rs);
  const auto strategy = need(eval::parse_strategy(a.strategy), "strategy", a.strategy);
  const auto loaded = load_scorer(resolve(a.checkpoint), a.pretrained.empty() ? "" : resolve(a.pretrained),
                                  store, &split, a.random_init, c.seed, c.workers, inputs);
  const eval::KnownLinks known(store.quads());
  auto ctx = strategy_context(store, known, split);
  ctx.fallback_to_random = a.fallback;
  std::vector<std::int32_t> labels;
  if (!a.communities.empty()) {
    labels = read_communities(resolve(a.communities), store, inputs);
    ctx.community = labels;
  } else if (strategy == eval::Strategy::Community) {
    throw ConfigError("the community strategy needs --communities");
  }
  eval::EvalOptions eo;
  eo.strategy = strategy;
  eo.n_neg = strategy == eval::Strategy::Full ? eval::kFullPool : a.n_neg;
  eo.seed = c.seed;
  eo.workers = c.workers;
  eo.heads = a.heads;
  const auto rep = eval::evaluate(*loaded.scorer, split.eval_targets, ctx, eo);
  json summary = report_json(rep);
  summary["side"] = a.heads ? "head" : "tail";

  Outputs outs;
  auto f = outs.open(output);
  f << summary.dump(2) << '\n';
  finish(f);
  if (!a.ranks.empty()) {
    auto r = outs.open(resolve(a.ranks));
    eval::write_ranking_jsonl(rep, split.eval_targets, store, r);
    finish(r);
  }
  json cfg = loaded.info;
  cfg["split"] = rs.to_json();
  cfg["strategy"] = a.strategy;
  cfg["n_neg"] = a.n_neg;
  cfg["heads"] = a.heads;
  cfg["fallback_to_random"] = a.fallback;
  cfg["random_init"] = a.random_init;
  cfg["seed"] = c.seed;
  cfg["workers"] = c.workers;
  write_manifest(outs, output, "eval", cfg, inputs, summary);
  outs.commit();
  summary["wall_s"] = rep.wall_s;
  out << summary.dump() << '\n';
}

struct SweepArgs {
  std::string store, checkpoint, pretrained, output, communities;
  SplitArgs split;
  std::string counts = "10,100,1000,full";
  std::string strategies = "random,entity_type,time_constrained";
};

void cmd_sweep(const SweepArgs& a, const Common& c, std::ostream& out) {
  const std::string input = resolve(a.store), output = resolve(a.output);
  std::vector<std::string> inputs = {input};
  const GraphStore store = read_store(input);
  const auto rs = resolve_split(a.split, store, inputs);
  const TemporalSplit split = build_split(store, rs);
  std::vector<std::size_t> counts;
  for (const auto& s : split_list(a.counts)) {
    if (s == "full") {
      counts.push_back(eval::kFullPool);
      continue;
    }
    try {
      std::size_t pos = 0;
      const auto v = std::stoull(s, &pos);
      if (pos != s.size() || v == 0) throw std::invalid_argument(s);
      counts.push_back(v);
    } catch (const std::logic_error&) {
      throw ConfigError("bad count '" + s + "'");
    }
  }
  if (counts.empty() || !std::is_sorted(counts.begin(), counts.end()) ||
      std::adjacent_find(counts.begin(), counts.end()) != counts.end())
    throw ConfigError("--counts must be strictly ascending");
  std::vector<eval::Strategy> strategies;
  for (const auto& s : split_list(a.strategies))
    strategies.push_back(need(eval::parse_strategy(s), "strategy", s));
  const auto loaded = load_scorer(resolve(a.checkpoint), a.pretrained.empty() ? "" : resolve(a.pretrained),
                                  store, &split, false, c.seed, c.workers, inputs);
  const eval::KnownLinks known(store.quads());
  auto ctx = strategy_context(store, known, split);
  std::vector<std::int32_t> labels;
  if (!a.communities.empty()) {
    labels = read_communities(resolve(a.communities), store, inputs);
    ctx.community = labels;
  }
  const auto points =
      eval::negative_count_sweep(*loaded.scorer, split.eval_targets, ctx, strategies, counts, c.seed, c.workers);
  Outputs outs;
  auto f = outs.open(output);
  for (const auto& p : points) {
    json j = report_json(p.report);
    j["strategy"] = eval::strategy_name(p.strategy);
    j["count"] = p.count == eval::kFullPool ? json("full") : json(p.count);
    f << j.dump() << '\n';
    out << j.dump() << '\n';
  }
  finish(f);
  json cfg = loaded.info;
  cfg["split"] = rs.to_json();
  cfg["counts"] = a.counts;
  cfg["strategies"] = a.strategies;
  cfg["seed"] = c.seed;
  cfg["workers"] = c.workers;
  write_manifest(outs, output, "sweep", cfg, inputs);
  outs.commit();
}

struct ReportArgs {
  std::string store, checkpoint, pretrained, output, query, positive;
  SplitArgs split;
  std::size_t n = 1000;
};

void cmd_report(const ReportArgs& a, const Common& c, std::ostream& out) {
  const std::string input = resolve(a.store);
  std::vector<std::string> inputs = {input};
  const GraphStore store = read_store(input);
  std::optional<TemporalSplit> split;
  if (!a.split.file.empty() || !a.split.valid.empty()) split = build_split(store, resolve_split(a.split, store, inputs));
  const auto q = store.find(a.query), p = store.find(a.positive);
  if (!q) throw ConfigError("unknown entity '" + a.query + "'");
  if (!p) throw ConfigError("unknown entity '" + a.positive + "'");
  if (store.entity_class(*q) != EntityClass::Work || store.entity_class(*p) != EntityClass::Work)
    throw ConfigError("--query and --positive must be Works");
  const auto loaded = load_scorer(resolve(a.checkpoint), a.pretrained.empty() ? "" : resolve(a.pretrained),
                                  store, split ? &*split : nullptr, false, c.seed, c.workers, inputs);
  const eval::KnownLinks known(store.quads());
  const Date t = store.publication_date(*q).value_or(store.max_time());
  Rng rng(c.seed);
  const auto rec = eval::citation_report(*loaded.scorer, store, known, *q, *p, t, a.n, rng);
  const std::string text = eval::citation_json(rec, store);
  if (!a.output.empty()) {
    const std::string output = resolve(a.output);
    Outputs outs;
    auto f = outs.open(output);
    f << text << '\n';
    finish(f);
    json cfg = loaded.info;
    cfg["query"] = a.query;
    cfg["positive"] = a.positive;
    cfg["n"] = a.n;
    cfg["seed"] = c.seed;
    write_manifest(outs, output, "report", cfg, inputs);
    outs.commit();
  }
  out << text << '\n';
}

struct CommunitiesArgs {
  std::string store, output;
  std::size_t n_labels = 3000;
  double cap = 300000;
  std::string quality = "modularity";
  double resolution = 1.0;
  std::size_t sweeps = 10;
  double randomness = 0.01;
  bool parallel = false;
};

void cmd_communities(const CommunitiesArgs& a, const Common& c, std::ostream& out) {
  using namespace community;
  const std::string input = resolve(a.store), output = resolve(a.output);
  const GraphStore store = read_store(input);
  LeidenOptions lo;
  lo.quality.kind = need(parse_quality(a.quality), "quality", a.quality);
  lo.quality.resolution = a.resolution;
  lo.max_sweeps = a.sweeps;
  lo.randomness = a.randomness;
  lo.seed = c.seed;
  lo.parallel = a.parallel;
  lo.workers = c.workers;
  const auto cg = citation_graph(store);
  Rng rng(mix_seed(c.seed, 0x696e6974));
  const auto init = init_fixed_partition(cg.graph.n, a.n_labels, a.cap, rng);
  const auto res = leiden_constrained(cg.graph, init, lo);
  const auto& label = res.partition.label;

  json q;
  q["quality"] = a.quality;
  q["trace"] = res.trace;
  q["sweeps"] = res.sweeps;
  q["moves"] = res.moves;
  q["used_labels"] = res.partition.used_labels();
  std::vector<std::size_t> sizes(res.partition.n_labels, 0);
  for (auto l : label) ++sizes[static_cast<std::size_t>(l)];
  q["max_size"] = sizes.empty() ? 0 : *std::max_element(sizes.begin(), sizes.end());
  json topics = json::array();
  for (const auto& cq : concept_quality(store, cg.works, label, res.partition.n_labels)) {
    json t;
    t["community"] = cq.community;
    t["papers"] = cq.papers;
    t["root"] = cq.root ? json(store.name(*cq.root)) : json(nullptr);
    t["percent"] = cq.percent ? json(*cq.percent) : json(nullptr);
    topics.push_back(t);
  }
  q["topic_quality"] = topics;

  Outputs outs;
  auto f = outs.open(output);
  write_partition_tsv(store, cg.works, label, f);
  finish(f);
  auto g = outs.open(output + ".quality.json");
  g << q.dump(2) << '\n';
  finish(g);
  json cfg;
  cfg["n"] = a.n_labels;
  cfg["cap"] = a.cap;
  cfg["quality"] = a.quality;
  cfg["resolution"] = a.resolution;
  cfg["sweeps"] = a.sweeps;
  cfg["randomness"] = a.randomness;
  cfg["parallel"] = a.parallel;
  cfg["seed"] = c.seed;
  cfg["workers"] = c.workers;
  json r;
  r["used_labels"] = q["used_labels"];
  r["max_size"] = q["max_size"];
  r["final_quality"] = res.trace.empty() ? json(nullptr) : json(res.trace.back());
  write_manifest(outs, output, "communities", cfg, {input}, r);
  outs.commit();
  out << r.dump() << '\n';
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"citekg: temporal citation knowledge graph benchmark toolkit", "citekg"};
  app.set_config("--config", "", "TOML or INI file with option values; flags take precedence");
  app.require_subcommand(1);
  app.fallthrough();

  IngestArgs ingest;
  auto* c_ingest = app.add_subcommand("ingest", "build a store from quad TSV or JSON-lines records");
  c_ingest->add_option("--input", ingest.input, "input file")->required();
  c_ingest->add_option("--output", ingest.output, "KGF1 store to write")->required();
  c_ingest->add_option("--format", ingest.format, "tsv | jsonl (default: by extension)");
  c_ingest->add_option("--classes", ingest.classes, "TSV of node<TAB>class rows");
  c_ingest->add_option("--mapping", ingest.mapping, "JSON field mapping for JSON-lines input");
  c_ingest->add_flag("--skip-unknown", ingest.skip_unknown, "skip rows with unknown relation labels");

  Common gen_c;
  GenerateArgs gen;
  auto* c_gen = app.add_subcommand("generate", "write a synthetic planted-community citation graph");
  c_gen->add_option("--output", gen.output, "KGF1 store to write")->required();
  c_gen->add_option("--tsv", gen.tsv, "also export quads as TSV");
  c_gen->add_option("--works", gen.planted.works)->capture_default_str();
  c_gen->add_option("--blocks", gen.planted.blocks)->capture_default_str();
  c_gen->add_option("--topics-per-block", gen.planted.topics_per_block)->capture_default_str();
  c_gen->add_option("--first-year", gen.planted.first_year)->capture_default_str();
  c_gen->add_option("--last-year", gen.planted.last_year)->capture_default_str();
  c_gen->add_option("--window-years", gen.planted.window_years)->capture_default_str();
  c_gen->add_option("--cite-prob", gen.planted.cite_prob)->capture_default_str();
  c_gen->add_option("--block-rate", gen.planted.block_rate)->capture_default_str();
  c_gen->add_option("--cross-rate", gen.planted.cross_rate)->capture_default_str();
  gen_c.add(c_gen);

  Common sample_c;
  SampleArgs sample;
  auto* c_sample = app.add_subcommand("sample", "snowball-sample a store down to a number of Works");
  c_sample->add_option("--store", sample.store)->required();
  c_sample->add_option("--output", sample.output)->required();
  c_sample->add_option("--works", sample.works, "target number of Works")->required();
  c_sample->add_option("--seeds", sample.seeds, "BFS seed Works")->capture_default_str();
  c_sample->add_flag("--keep-isolated", sample.keep_isolated, "keep Works without citations");
  sample_c.add(c_sample);

  AblateArgs ablate;
  auto* c_ablate = app.add_subcommand("ablate", "keep only some node types");
  c_ablate->add_option("--store", ablate.store)->required();
  c_ablate->add_option("--output", ablate.output)->required();
  c_ablate->add_option("--keep", ablate.keep, "kept classes, e.g. W,A,V")->required();

  SplitCmdArgs split;
  auto* c_split = app.add_subcommand("split", "classify links around temporal thresholds");
  c_split->add_option("--store", split.store)->required();
  c_split->add_option("--output", split.output, "split JSON to write")->required();
  c_split->add_option("--export-dir", split.export_dir, "also write each link class as TSV");
  split.split.add(c_split);

  QcArgs qc;
  auto* c_qc = app.add_subcommand("qc", "data-quality report");
  c_qc->add_option("--store", qc.store)->required();
  c_qc->add_option("--output", qc.output, "also write the report here");

  Common train_c;
  TrainArgs train;
  auto* c_train = app.add_subcommand("train", "train a shallow model or an inductive encoder");
  c_train->add_option("--store", train.store)->required();
  c_train->add_option("--output", train.output, "checkpoint to write")->required();
  c_train->add_option("--log", train.log, "JSON-lines progress log");
  train.split.add(c_train);
  c_train->add_option("--model", train.model, "complex | rotate | de-transe | de-distmult");
  c_train->add_option("--encoder", train.encoder, "graphsage | rgcn");
  c_train->add_option("--variant", train.variant, "E | H | D")->capture_default_str();
  c_train->add_option("--pretrained", train.pretrained, "shallow checkpoint for H encoders");
  c_train->add_option("--dim", train.dim);
  c_train->add_option("--lr", train.lr);
  c_train->add_option("--negatives", train.negatives);
  c_train->add_option("--batch-size", train.batch);
  c_train->add_option("--reg", train.reg);
  c_train->add_option("--alpha", train.alpha);
  c_train->add_option("--gamma", train.gamma);
  c_train->add_option("--psi", train.psi);
  c_train->add_option("--dropout", train.dropout);
  c_train->add_option("--loss", train.loss, "logsigmoid | cross-entropy");
  c_train->add_option("--layers", train.layers);
  c_train->add_option("--fanout", train.fanout);
  c_train->add_option("--aggregator", train.aggregator, "mean | pool");
  c_train->add_option("--norm", train.norm, "none | layer");
  c_train->add_option("--bases", train.bases);
  c_train->add_option("--time-budget", train.time_budget, "seconds")->capture_default_str();
  c_train->add_option("--max-steps", train.max_steps, "0 = unlimited")->capture_default_str();
  c_train->add_option("--max-epochs", train.max_epochs, "0 = unlimited")->capture_default_str();
  c_train->add_option("--eval-every", train.eval_every, "steps between validations")->capture_default_str();
  c_train->add_option("--val-negatives", train.val_negatives)->capture_default_str();
  train_c.add(c_train);

  Common eval_c;
  EvalArgs ev;
  auto* c_eval = app.add_subcommand("eval", "rank evaluation targets against sampled negatives");
  c_eval->add_option("--store", ev.store)->required();
  c_eval->add_option("--checkpoint", ev.checkpoint)->required();
  c_eval->add_option("--output", ev.output, "summary JSON to write")->required();
  c_eval->add_option("--ranks", ev.ranks, "per-query JSON-lines ranks");
  c_eval->add_option("--pretrained", ev.pretrained, "shallow checkpoint for H encoders");
  c_eval->add_option("--communities", ev.communities, "partition TSV for the community strategy");
  ev.split.add(c_eval);
  c_eval->add_option("--strategy", ev.strategy, "random | entity_type | time_constrained | community | full")
      ->capture_default_str();
  c_eval->add_option("-n,--n-neg", ev.n_neg)->capture_default_str();
  c_eval->add_flag("--heads", ev.heads, "rank heads instead of tails");
  c_eval->add_flag("--fallback", ev.fallback, "sample randomly when a strategy pool is empty");
  c_eval->add_flag("--random-init", ev.random_init, "re-draw unseen entity rows (random baseline)");
  eval_c.add(c_eval);

  Common sweep_c;
  SweepArgs sw;
  auto* c_sweep = app.add_subcommand("sweep", "MRR over nested negative pools of growing size");
  c_sweep->add_option("--store", sw.store)->required();
  c_sweep->add_option("--checkpoint", sw.checkpoint)->required();
  c_sweep->add_option("--output", sw.output, "JSON-lines points to write")->required();
  c_sweep->add_option("--pretrained", sw.pretrained);
  c_sweep->add_option("--communities", sw.communities);
  sw.split.add(c_sweep);
  c_sweep->add_option("--counts", sw.counts, "ascending counts; 'full' for the whole pool")->capture_default_str();
  c_sweep->add_option("--strategies", sw.strategies)->capture_default_str();
  sweep_c.add(c_sweep);

  Common report_c;
  ReportArgs rep;
  auto* c_report = app.add_subcommand("report", "anomaly record for one citation");
  c_report->add_option("--store", rep.store)->required();
  c_report->add_option("--checkpoint", rep.checkpoint)->required();
  c_report->add_option("--query", rep.query, "citing Work")->required();
  c_report->add_option("--positive", rep.positive, "cited Work")->required();
  c_report->add_option("--pretrained", rep.pretrained);
  c_report->add_option("--output", rep.output);
  c_report->add_option("-n", rep.n, "random non-cited Works to rank against")->capture_default_str();
  rep.split.add(c_report);
  report_c.add(c_report);

  Common comm_c;
  CommunitiesArgs comm;
  auto* c_comm = app.add_subcommand("communities", "fixed-budget, size-capped community detection");
  c_comm->add_option("--store", comm.store)->required();
  c_comm->add_option("--output", comm.output, "partition TSV to write")->required();
  c_comm->add_option("--n", comm.n_labels, "number of labels")->capture_default_str()->check(CLI::PositiveNumber);
  c_comm->add_option("--cap", comm.cap, "maximum community size")->capture_default_str();
  c_comm->add_option("--quality", comm.quality, "modularity | rber | significance | surprise")
      ->capture_default_str();
  c_comm->add_option("--resolution", comm.resolution)->capture_default_str();
  c_comm->add_option("--sweeps", comm.sweeps)->capture_default_str();
  c_comm->add_option("--randomness", comm.randomness)->capture_default_str();
  c_comm->add_flag("--parallel", comm.parallel, "parallel local moves");
  comm_c.add(c_comm);

  std::vector<std::string> rev(args.rbegin(), args.rend());
  try {
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  try {
    if (c_ingest->parsed()) cmd_ingest(ingest, out);
    else if (c_gen->parsed()) cmd_generate(gen, gen_c, out);
    else if (c_sample->parsed()) cmd_sample(sample, sample_c, out);
    else if (c_ablate->parsed()) cmd_ablate(ablate, out);
    else if (c_split->parsed()) cmd_split(split, out);
    else if (c_qc->parsed()) cmd_qc(qc, out);
    else if (c_train->parsed()) cmd_train(train, train_c, out);
    else if (c_eval->parsed()) cmd_eval(ev, eval_c, out);
    else if (c_sweep->parsed()) cmd_sweep(sw, sweep_c, out);
    else if (c_report->parsed()) cmd_report(rep, report_c, out);
    else if (c_comm->parsed()) cmd_communities(comm, comm_c, out);
    return 0;
  } catch (const Error& e) {
    err << "citekg: " << e.what() << '\n';
    return e.exit_code();
  } catch (const std::exception& e) {
    err << "citekg: internal error: " << e.what() << '\n';
    return 1;
  }
}

int run(int argc, const char* const* argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run(args, std::cout, std::cerr);
}

}  // namespace citekg::cli
