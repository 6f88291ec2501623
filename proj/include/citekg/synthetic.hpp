#pragma once
// Planted-community citation graphs for tests and desk-scale experiments.

#include <vector>

#include "citekg/store.hpp"

namespace citekg {

// Works fall into blocks and, inside a block, into topics. A work cites the
// earlier works of its topic (within `window_years`), a few random earlier
// works of its block and occasionally a work of another block. Authors,
// venues, institutions and concepts follow the topic, so every relation
// carries the same community structure.
struct PlantedConfig {
  std::size_t works = 1000;
  std::size_t blocks = 2;
  std::size_t topics_per_block = 20;
  int first_year = 2010;
  int last_year = 2021;
  double window_years = 100.0;
  double cite_prob = 1.0;    // per earlier work of the same topic
  double block_rate = 0.5;   // expected other-topic citations inside the block, per work
  double cross_rate = 0.05;  // expected cross-block citations per work
  std::size_t authors_per_topic = 3;
  std::size_t authors_per_work = 2;
  std::size_t venues_per_block = 4;
  std::size_t institutions_per_block = 2;
  std::size_t concepts_per_block = 4;
  std::uint64_t seed = 0;
};

struct PlantedGraph {
  GraphStore store;
  std::vector<std::int32_t> block;  // per entity, -1 for concepts
  std::vector<std::int32_t> topic;  // per entity (global topic id), -1 where not tied to one
};

PlantedGraph planted_citation_graph(const PlantedConfig& config);

}  // namespace citekg
