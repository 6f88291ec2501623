#include "citekg/synthetic.hpp"

#include <algorithm>
#include <cmath>

namespace citekg {

namespace {

std::string tag(char prefix, std::size_t block, std::size_t i) {
  return std::string(1, prefix) + std::to_string(block) + "_" + std::to_string(i);
}

// Poisson draw by inversion; rates here are small.
std::size_t poisson(Rng& rng, double rate) {
  const double limit = std::exp(-rate);
  std::size_t k = 0;
  for (double p = uniform01(rng); p > limit; p *= uniform01(rng)) ++k;
  return k;
}

}  // namespace

PlantedGraph planted_citation_graph(const PlantedConfig& c) {
  if (c.works == 0 || c.blocks == 0 || c.topics_per_block == 0 || c.last_year < c.first_year ||
      c.authors_per_topic == 0 || c.venues_per_block == 0 || c.institutions_per_block == 0 ||
      c.concepts_per_block == 0)
    throw ConfigError("planted graph needs works, blocks, topics and at least one entity of each class");
  Rng rng(c.seed);
  const std::int32_t begin = make_date(c.first_year, 1, 1).days;
  const std::int32_t end = make_date(c.last_year + 1, 1, 1).days;
  const double window = c.window_years * 365.25;
  const std::size_t T = c.topics_per_block;
  auto share = [](std::size_t i, std::size_t from, std::size_t to) { return i * to / from; };

  struct Work {
    std::string name;
    std::size_t block, topic;  // topic is local to the block
    Date date;
  };
  std::vector<Work> works(c.works);
  for (std::size_t i = 0; i < c.works; ++i) {
    works[i].name = "W" + std::to_string(i);
    works[i].block = i % c.blocks;
    works[i].topic = uniform_index(rng, T);
    works[i].date =
        Date{begin + static_cast<std::int32_t>(uniform_index(rng, static_cast<std::uint64_t>(end - begin)))};
  }

  GraphStoreBuilder b;
  for (const auto& w : works) {
    b.entity(w.name, EntityClass::Work);
    b.set_date(w.name, w.date);
  }
  for (std::size_t k = 0; k < c.blocks; ++k) {
    const std::string root = "Field" + std::to_string(k);
    b.entity(root, EntityClass::Concept);
    for (std::size_t j = 0; j < c.concepts_per_block; ++j) {
      b.entity(tag('C', k, j), EntityClass::Concept);
      b.add_concept_parent(tag('C', k, j), root);
    }
    for (std::size_t a = 0; a < T * c.authors_per_topic; ++a)
      b.add_quad(tag('A', k, a), Relation::Affiliation,
                 tag('I', k, share(a, T * c.authors_per_topic, c.institutions_per_block)), Date{begin});
  }

  std::vector<std::vector<std::size_t>> by_block(c.blocks);
  for (std::size_t i = 0; i < c.works; ++i) by_block[works[i].block].push_back(i);

  auto cite_random = [&](const Work& w, const std::vector<std::size_t>& pool) {
    const Work& o = works[pool[uniform_index(rng, pool.size())]];
    if (o.date.days < w.date.days && o.topic != w.topic)
      b.add_quad(w.name, Relation::Cites, o.name, w.date);
  };
  for (const Work& w : works) {
    for (std::size_t j : by_block[w.block]) {
      const Work& o = works[j];
      if (o.topic != w.topic || o.date.days >= w.date.days || w.date.days - o.date.days > window) continue;
      if (uniform01(rng) < c.cite_prob) b.add_quad(w.name, Relation::Cites, o.name, w.date);
    }
    for (std::size_t k = poisson(rng, c.block_rate); k > 0; --k) cite_random(w, by_block[w.block]);
    if (c.blocks > 1)
      for (std::size_t k = poisson(rng, c.cross_rate); k > 0; --k)
        cite_random(w, by_block[(w.block + 1 + uniform_index(rng, c.blocks - 1)) % c.blocks]);

    for (std::size_t k = 0; k < c.authors_per_work; ++k) {
      const std::size_t a = w.topic * c.authors_per_topic + uniform_index(rng, c.authors_per_topic);
      b.add_quad(w.name, Relation::Author, tag('A', w.block, a), w.date);
    }
    b.add_quad(w.name, Relation::PublishedIn, tag('V', w.block, share(w.topic, T, c.venues_per_block)), w.date);
    b.add_concept_link(w.name, tag('C', w.block, share(w.topic, T, c.concepts_per_block)));
  }

  PlantedGraph g{b.finish(), {}, {}};
  g.block.assign(g.store.num_entities(), -1);
  g.topic.assign(g.store.num_entities(), -1);
  for (EntityId e = 0; e < g.store.num_entities(); ++e) {
    const std::string& name = g.store.name(e);
    const auto cls = g.store.entity_class(e);
    if (cls == EntityClass::Concept) continue;
    if (cls == EntityClass::Work) {
      const Work& w = works[std::stoul(name.substr(1))];
      g.block[e] = static_cast<std::int32_t>(w.block);
      g.topic[e] = static_cast<std::int32_t>(w.block * T + w.topic);
      continue;
    }
    const auto us = name.find('_');
    const std::size_t blk = std::stoul(name.substr(1, us - 1));
    g.block[e] = static_cast<std::int32_t>(blk);
    if (cls == EntityClass::Author)
      g.topic[e] = static_cast<std::int32_t>(blk * T + std::stoul(name.substr(us + 1)) / c.authors_per_topic);
  }
  return g;
}

}  // namespace citekg
