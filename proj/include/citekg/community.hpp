#pragma once
// Community detection over the citation graph under a fixed label budget and
// a hard community size cap, plus the concept-based community quality.

#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "citekg/store.hpp"

namespace citekg::community {

enum class QualityKind { Modularity, Rber, Significance, Surprise };

std::string_view quality_name(QualityKind k);
std::optional<QualityKind> parse_quality(std::string_view s);

// Weighted undirected graph. Nodes of an aggregated graph stand for groups of
// original nodes: `size` counts them and `self_weight` is the edge weight
// inside the group.
struct Graph {
  std::size_t n = 0;
  std::vector<std::uint32_t> offsets;  // n + 1
  std::vector<std::uint32_t> targets;
  std::vector<double> weights;
  std::vector<double> self_weight;
  std::vector<double> size;
  std::vector<double> strength;  // weighted degree, internal edges counted twice
  double total_weight = 0.0;     // m
  double total_size = 0.0;

  std::span<const std::uint32_t> neighbors(std::size_t v) const {
    return {targets.data() + offsets[v], offsets[v + 1] - offsets[v]};
  }
  std::span<const double> neighbor_weights(std::size_t v) const {
    return {weights.data() + offsets[v], offsets[v + 1] - offsets[v]};
  }

  // Simple graph from an edge list (duplicates and self loops dropped).
  static Graph from_edges(std::size_t n, std::span<const std::pair<std::uint32_t, std::uint32_t>> edges);
};

// Works of a store and the simple undirected graph of their citations.
struct CitationGraph {
  std::vector<EntityId> works;  // node i is works[i]
  Graph graph;
};
CitationGraph citation_graph(const GraphStore& store);

struct Partition {
  std::vector<std::int32_t> label;  // per node, in [0, n_labels)
  std::size_t n_labels = 1;
  double cap = 0;                   // max community size

  std::size_t used_labels() const;
  // Throws ContractError unless labels are in range and sizes respect the cap.
  void check(const Graph& g) const;
};

// Uniform random labels in [0, n_labels); a label that is already full is
// redrawn. Throws ConfigError when n_labels * cap cannot hold all nodes.
Partition init_fixed_partition(std::size_t n_nodes, std::size_t n_labels, double cap, Rng& rng);

struct QualityOptions {
  QualityKind kind = QualityKind::Modularity;
  double resolution = 1.0;  // modularity / RBER
};

// nullopt for graphs without edges.
std::optional<double> quality(const Graph& g, std::span<const std::int32_t> label,
                              const QualityOptions& opts);

struct LeidenOptions {
  QualityOptions quality;
  std::size_t max_sweeps = 10;
  double randomness = 0.01;  // refinement temperature, relative to the quality scale
  std::uint64_t seed = 0;
  bool parallel = false;
  std::size_t workers = 1;
};

struct LeidenResult {
  Partition partition;
  std::vector<double> trace;  // quality before the first sweep, then after each sweep
  std::size_t sweeps = 0;
  std::size_t moves = 0;
};

// Local moves restricted to the existing label budget with hard cap
// rejection, refinement inside communities and aggregation; each sweep is
// one pass over all levels. Only strictly improving moves are applied.
LeidenResult leiden_constrained(const Graph& g, const Partition& init, const LeidenOptions& opts);

// Per community: 100 * (papers under the dominant root concept) / papers.
// nullopt where no paper of the community has a concept link.
struct ConceptQuality {
  std::int32_t community = 0;
  std::size_t papers = 0;
  std::optional<EntityId> root;
  std::optional<double> percent;
};
std::vector<ConceptQuality> concept_quality(const GraphStore& store, std::span<const EntityId> works,
                                            std::span<const std::int32_t> label,
                                            std::size_t n_labels);

// Per-entity labels (-1 for entities outside the graph).
std::vector<std::int32_t> entity_labels(const GraphStore& store, std::span<const EntityId> works,
                                        std::span<const std::int32_t> label);

void write_partition_tsv(const GraphStore& store, std::span<const EntityId> works,
                         std::span<const std::int32_t> label, std::ostream& out);
// Reads `node<TAB>community` rows into per-entity labels.
std::vector<std::int32_t> read_partition_tsv(const GraphStore& store, std::istream& in,
                                             const std::string& source);

}  // namespace citekg::community
