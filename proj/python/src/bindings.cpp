#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <memory>
#include <sstream>

#include "citekg/cli.hpp"
#include "citekg/community.hpp"
#include "citekg/dataset.hpp"
#include "citekg/evaluation.hpp"
#include "citekg/synthetic.hpp"
#include "citekg/training.hpp"

namespace py = pybind11;
using namespace citekg;

namespace {

Date date_arg(const std::string& text) {
  auto d = parse_date(text);
  if (!d) throw ConfigError("invalid date '" + text + "' (expected YYYY-MM-DD)");
  return *d;
}

template <class T, class F>
T enum_arg(F parse, const std::string& text, const char* what) {
  auto v = parse(text);
  if (!v) throw ConfigError(std::string("unknown ") + what + " '" + text + "'");
  return *v;
}

EntityId entity_arg(const GraphStore& s, EntityId e) {
  if (e >= s.num_entities()) throw ConfigError("entity id " + std::to_string(e) + " out of range");
  return e;
}

EntityClass class_arg(const std::string& text) { return enum_arg<EntityClass>(parse_class, text, "class"); }

py::tuple quad_tuple(const Quad& q) {
  return py::make_tuple(q.s, std::string(relation_label(q.r)), q.o, format_date(q.t));
}

py::list quad_list(std::span<const Quad> quads) {
  py::list out;
  for (const Quad& q : quads) out.append(quad_tuple(q));
  return out;
}

py::object optional_pct(const std::optional<double>& v) { return v ? py::cast(*v) : py::none(); }

using StorePtr = std::shared_ptr<GraphStore>;

StorePtr shared(GraphStore s) { return std::make_shared<GraphStore>(std::move(s)); }

TemporalSplit make_split(const GraphStore& store, const std::string& valid, const std::string& test,
                         const std::string& mode, const std::string& phase) {
  auto m = enum_arg<SplitMode>(parse_mode, mode, "split mode");
  auto split = temporal_split(store, date_arg(valid), date_arg(test), m);
  if (phase == "test") return merge_validation_into_train(store, split);
  if (phase != "validation") throw ConfigError("unknown phase '" + phase + "'");
  return split;
}

py::dict train_shallow(const GraphStore& store, const TemporalSplit* split, const std::string& model,
                       std::optional<std::size_t> dim, std::optional<double> lr,
                       std::optional<std::size_t> negatives, std::optional<std::size_t> batch_size,
                       std::uint64_t max_steps, double time_budget, std::uint64_t seed, std::size_t workers) {
  auto d = kge::paper_defaults(enum_arg<kge::ModelKind>(kge::parse_model, model, "model"));
  if (dim) d.model.dim = *dim;
  if (lr) d.train.lr = *lr;
  if (negatives) d.train.negatives = *negatives;
  if (batch_size) d.train.batch_size = *batch_size;
  d.train.max_steps = max_steps;
  d.train.time_budget_s = time_budget;
  d.train.seed = seed;
  d.train.workers = workers;
  d.model.validate();
  d.train.validate();

  kge::TrainResult res;
  {
    py::gil_scoped_release release;
    const auto init = kge::init_checkpoint(store, d.model, seed);
    if (split) {
      res = kge::train(*split, init, d.train);
    } else {
      const auto q = store.quads();
      res = kge::train(q, init, d.train);
    }
  }
  if (res.diverged) throw NumericError("training diverged: " + res.divergence);
  py::dict out;
  out["checkpoint"] = std::make_shared<kge::Checkpoint>(std::move(res.last));
  out["steps"] = res.steps;
  out["elapsed_s"] = res.elapsed_s;
  return out;
}

py::dict evaluate_checkpoint(const kge::Checkpoint& ckpt, const GraphStore& store, const TemporalSplit* split,
                             const std::string& strategy, std::optional<std::size_t> n_neg,
                             std::optional<std::vector<std::int32_t>> communities, bool fallback, bool heads,
                             std::uint64_t seed, std::size_t workers) {
  ckpt.validate_against(store);
  const eval::KnownLinks known(store.quads());
  eval::StrategyContext ctx{&store, &known};
  std::vector<Quad> queries;
  if (split) {
    ctx.period_begin = split->threshold();
    ctx.period_end = split->period_end();
    queries = split->eval_targets;
  } else {
    for (const Quad& q : store.quads())
      if (q.r == Relation::Cites) queries.push_back(q);
  }
  if (communities) {
    if (communities->size() != store.num_entities())
      throw ConfigError("communities must hold one label per entity");
    ctx.community = *communities;
  }
  ctx.fallback_to_random = fallback;
  eval::EvalOptions eo;
  eo.strategy = enum_arg<eval::Strategy>(eval::parse_strategy, strategy, "strategy");
  eo.n_neg = n_neg.value_or(eval::kFullPool);
  eo.seed = seed;
  eo.workers = workers;
  eo.heads = heads;
  eval::RankingReport rep;
  {
    py::gil_scoped_release release;
    rep = eval::evaluate(eval::ModelScorer(ckpt.model), queries, ctx, eo);
  }
  py::dict out;
  out["mrr"] = rep.mrr;
  out["hits1"] = rep.hits1;
  out["hits10"] = rep.hits10;
  out["hits50"] = rep.hits50;
  out["ranks"] = rep.ranks;
  out["strategy"] = rep.strategy;
  out["queries"] = queries.size();
  out["with_replacement"] = rep.with_replacement;
  out["fallbacks"] = rep.fallbacks;
  out["wall_s"] = rep.wall_s;
  return out;
}

py::dict detect_communities(const GraphStore& store, std::size_t n_labels, double cap, const std::string& quality,
                            double resolution, std::size_t sweeps, std::uint64_t seed) {
  community::LeidenOptions opts;
  opts.quality.kind = enum_arg<community::QualityKind>(community::parse_quality, quality, "quality");
  opts.quality.resolution = resolution;
  opts.max_sweeps = sweeps;
  opts.seed = seed;
  community::LeidenResult res;
  std::vector<std::int32_t> labels;
  {
    py::gil_scoped_release release;
    const auto cg = community::citation_graph(store);
    Rng rng(mix_seed(seed, 0x696e6974));
    const auto init = community::init_fixed_partition(cg.graph.n, n_labels, cap, rng);
    res = community::leiden_constrained(cg.graph, init, opts);
    labels = community::entity_labels(store, cg.works, res.partition.label);
  }
  py::dict out;
  out["labels"] = labels;
  out["trace"] = res.trace;
  out["sweeps"] = res.sweeps;
  out["moves"] = res.moves;
  out["used_labels"] = res.partition.used_labels();
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Temporal citation knowledge graphs: storage, embeddings, evaluation and communities.";

  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      switch (e.kind()) {
        case ErrorKind::Input: PyErr_SetString(PyExc_ValueError, e.what()); break;
        case ErrorKind::Numeric: PyErr_SetString(PyExc_FloatingPointError, e.what()); break;
        default: PyErr_SetString(PyExc_RuntimeError, e.what()); break;
      }
    }
  });

  py::class_<GraphStore, StorePtr>(m, "GraphStore")
      .def_property_readonly("num_entities", &GraphStore::num_entities)
      .def_property_readonly("num_quads", &GraphStore::num_quads)
      .def("count_class", [](const GraphStore& s, const std::string& c) { return s.count_class(class_arg(c)); })
      .def("name", [](const GraphStore& s, EntityId e) { return s.name(entity_arg(s, e)); })
      .def("entity_class", [](const GraphStore& s, EntityId e) { return std::string(class_name(s.entity_class(entity_arg(s, e)))); })
      .def("publication_date",
           [](const GraphStore& s, EntityId e) -> py::object {
             auto d = s.publication_date(entity_arg(s, e));
             return d ? py::cast(format_date(*d)) : py::none();
           })
      .def("find", &GraphStore::find)
      .def("quads", [](const GraphStore& s) { return quad_list(s.quads()); })
      .def("save", [](const GraphStore& s, const std::string& path) { save_store_file(s, path); })
      .def("quality_report", [](const GraphStore& s) {
        const auto r = quality_report(s);
        py::dict out;
        out["mutual_citation_pct"] = optional_pct(r.mutual_citation_pct);
        out["authorship_completeness_pct"] = optional_pct(r.authorship_completeness_pct);
        out["venue_completeness_pct"] = optional_pct(r.venue_completeness_pct);
        out["institution_completeness_pct"] = optional_pct(r.institution_completeness_pct);
        return out;
      });

  m.def("load_store", [](const std::string& path) { return shared(load_store_file(path)); }, py::arg("path"));
  m.def(
      "ingest_tsv",
      [](const std::string& path, std::optional<std::string> classes, bool skip_unknown) {
        IngestOptions opts;
        opts.skip_unknown_relations = skip_unknown;
        return shared(ingest_tsv_file(path, opts, nullptr, classes));
      },
      py::arg("path"), py::arg("classes") = py::none(), py::arg("skip_unknown") = false);
  m.def(
      "ingest_jsonl", [](const std::string& path) { return shared(ingest_jsonl_file(path, JsonlMapping{})); },
      py::arg("path"));
  m.def(
      "planted_graph",
      [](std::size_t works, std::size_t topics_per_block, std::uint64_t seed) {
        PlantedConfig pc;
        pc.works = works;
        pc.topics_per_block = topics_per_block;
        pc.seed = seed;
        auto g = planted_citation_graph(pc);
        return py::make_tuple(shared(std::move(g.store)), g.block, g.topic);
      },
      py::arg("works") = 1000, py::arg("topics_per_block") = 20, py::arg("seed") = 0,
      "Synthetic graph with planted topics. Returns (store, block per entity, topic per entity).");

  py::class_<TemporalSplit, std::shared_ptr<TemporalSplit>>(m, "TemporalSplit")
      .def_property_readonly("mode", [](const TemporalSplit& s) { return std::string(mode_name(s.mode)); })
      .def_property_readonly("phase",
                             [](const TemporalSplit& s) {
                               return std::string(s.phase == SplitPhase::Test ? "test" : "validation");
                             })
      .def_property_readonly("train", [](const TemporalSplit& s) { return quad_list(s.train); })
      .def_property_readonly("eval_targets", [](const TemporalSplit& s) { return quad_list(s.eval_targets); })
      .def_property_readonly("auxiliary_links", [](const TemporalSplit& s) { return quad_list(s.auxiliary_links()); })
      .def_property_readonly("seen", [](const TemporalSplit& s) { return s.seen; })
      .def("counts", [](const TemporalSplit& s) {
        py::dict out;
        out["train"] = s.train.size();
        out["eval_targets"] = s.eval_targets.size();
        out["exo"] = s.exo.size();
        out["unattached"] = s.unattached.size();
        out["future"] = s.future.size();
        return out;
      });

  m.def(
      "temporal_split",
      [](const GraphStore& store, const std::string& valid, const std::string& test, const std::string& mode,
         const std::string& phase) {
        return std::make_shared<TemporalSplit>(make_split(store, valid, test, mode, phase));
      },
      py::arg("store"), py::arg("valid"), py::arg("test"), py::arg("mode") = "transductive",
      py::arg("phase") = "validation");

  py::class_<kge::Checkpoint, std::shared_ptr<kge::Checkpoint>>(m, "Checkpoint")
      .def_property_readonly("model", [](const kge::Checkpoint& c) { return std::string(kge::model_name(c.model.config().kind)); })
      .def_property_readonly("dim", [](const kge::Checkpoint& c) { return c.model.config().dim; })
      .def_property_readonly("step", [](const kge::Checkpoint& c) { return c.step; })
      .def_property_readonly("num_entities", [](const kge::Checkpoint& c) { return c.model.num_entities(); })
      .def("score",
           [](const kge::Checkpoint& c, EntityId s, const std::string& rel, EntityId o, const std::string& t) {
             if (s >= c.model.num_entities() || o >= c.model.num_entities())
               throw ConfigError("entity id out of range");
             return c.model.score(s, enum_arg<Relation>(parse_relation, rel, "relation"), o, date_arg(t));
           })
      .def("save", [](const kge::Checkpoint& c, const std::string& path) { kge::save_checkpoint_file(c, path); });

  m.def(
      "load_checkpoint",
      [](const std::string& path) { return std::make_shared<kge::Checkpoint>(kge::load_checkpoint_file(path)); },
      py::arg("path"));

  m.def(
      "train",
      [](const GraphStore& store, const TemporalSplit* split, const std::string& model,
         std::optional<std::size_t> dim, std::optional<double> lr, std::optional<std::size_t> negatives,
         std::optional<std::size_t> batch_size, std::uint64_t max_steps, double time_budget, std::uint64_t seed,
         std::size_t workers) {
        return train_shallow(store, split, model, dim, lr, negatives, batch_size, max_steps, time_budget, seed,
                             workers);
      },
      py::arg("store"), py::arg("split") = nullptr, py::arg("model") = "complex", py::arg("dim") = py::none(),
      py::arg("lr") = py::none(), py::arg("negatives") = py::none(), py::arg("batch_size") = py::none(),
      py::arg("max_steps") = 0, py::arg("time_budget") = 60.0, py::arg("seed") = 0, py::arg("workers") = 1,
      "Trains a shallow model from its published defaults. Returns {checkpoint, steps, elapsed_s}.");

  m.def("evaluate", &evaluate_checkpoint, py::arg("checkpoint"), py::arg("store"), py::arg("split") = nullptr,
        py::arg("strategy") = "random", py::arg("n_neg") = 1000, py::arg("communities") = py::none(),
        py::arg("fallback") = false, py::arg("heads") = false, py::arg("seed") = 0, py::arg("workers") = 1,
        "Filtered ranking of the split's targets (or every citation). n_neg=None ranks against the full pool.");

  m.def("communities", &detect_communities, py::arg("store"), py::arg("n_labels"), py::arg("cap"),
        py::arg("quality") = "modularity", py::arg("resolution") = 1.0, py::arg("sweeps") = 10,
        py::arg("seed") = 0, "Label-budgeted, size-capped Leiden over the citation graph.");

  m.def(
      "run_cli",
      [](const std::vector<std::string>& args) {
        std::ostringstream out, err;
        int code;
        {
          py::gil_scoped_release release;
          code = cli::run(args, out, err);
        }
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), "Runs one citekg command line. Returns (exit code, stdout, stderr).");
}
