#pragma once
// Dataset construction: pruning, snowball sampling, node-type ablations,
// temporal splitting and data-quality metrics.

#include <optional>
#include <string>
#include <vector>

#include "citekg/store.hpp"

namespace citekg {

// Removes Works that neither cite nor are cited, along with their links;
// authors / venues / institutions left dangling go with them.
GraphStore drop_isolated_works(const GraphStore& store);

struct SampleResult {
  GraphStore store;
  bool target_reached = true;  // false: seeds' closure was smaller than the target
  std::size_t sampled_works = 0;
};

// BFS over undirected citation edges from `seeds` uniformly drawn Works until
// `target_works` Works are visited. Each expansion visits neighbors in an
// rng-shuffled order. Sampled Works keep all their author/venue links and their
// authors' affiliations; undated Works are then removed.
SampleResult snowball_sample(const GraphStore& store, std::size_t target_works,
                             std::size_t seeds, std::uint64_t rng_seed);

// Subset of the entity classes participating in an ablation variant.
class ClassSet {
 public:
  ClassSet() = default;
  static ClassSet all();
  // Parses "W,A,V,I" / "works,authors,..." style lists.
  static ClassSet parse(const std::string& text);
  ClassSet& insert(EntityClass c) {
    bits_ |= bit(c);
    return *this;
  }
  ClassSet& erase(EntityClass c) {
    bits_ &= static_cast<std::uint8_t>(~bit(c));
    return *this;
  }
  bool contains(EntityClass c) const { return (bits_ & bit(c)) != 0; }
  // "Full", "-V", "-A-I", ... relative to {Works, Authors, Venues, Institutions}.
  std::string variant_name() const;
  friend bool operator==(ClassSet, ClassSet) = default;

 private:
  static std::uint8_t bit(EntityClass c) { return static_cast<std::uint8_t>(1u << static_cast<int>(c)); }
  std::uint8_t bits_ = 0;
};

// Throws ConfigError naming the violated rule when the combination is invalid:
// Works must be kept, and Institutions require Authors.
void validate_ablation(ClassSet keep);
GraphStore ablation_variant(const GraphStore& store, ClassSet keep);

// ---------------------------------------------------------------------------

enum class SplitMode { Transductive, Inductive };
enum class SplitPhase { Validation, Test };

std::string_view mode_name(SplitMode m);
std::optional<SplitMode> parse_mode(std::string_view s);

// Classification of every quad relative to a temporal threshold
// (t_valid in the validation phase, t_test in the test phase). A Work is
// unseen iff its publication date is >= the threshold. The evaluation period
// is [t_valid, t_test) during validation and [t_test, inf) during test.
struct TemporalSplit {
  Date t_valid;
  Date t_test;
  SplitMode mode = SplitMode::Transductive;
  SplitPhase phase = SplitPhase::Validation;

  std::vector<Quad> train;         // before the threshold, between seen entities
  std::vector<Quad> eval_targets;  // in-period cites between two unseen Works
  std::vector<Quad> exo;           // in-period links touching a seen entity
  std::vector<Quad> unattached;    // in-period non-target links among unseen entities
  std::vector<Quad> future;        // validation phase only: at or after t_test
  std::vector<bool> seen;          // per entity

  Date threshold() const { return phase == SplitPhase::Validation ? t_valid : t_test; }
  std::optional<Date> period_end() const {
    return phase == SplitPhase::Validation ? std::optional<Date>(t_test) : std::nullopt;
  }
  bool in_period(Date d) const {
    return d >= threshold() && (!period_end() || d < *period_end());
  }

  // Links used for training: exo links are merged in transductive mode.
  std::vector<Quad> training_quads() const;
  // Auxiliary links available at evaluation time (inductive mode only).
  std::vector<Quad> auxiliary_links() const;
  std::size_t period_size() const { return eval_targets.size() + exo.size() + unattached.size(); }
};

// Validation-phase split. Throws ConfigError when t_valid >= t_test or when
// the train or eval-target set comes out empty.
TemporalSplit temporal_split(const GraphStore& store, Date t_valid, Date t_test, SplitMode mode);

// Same classification without the emptiness checks.
TemporalSplit classify_split(const GraphStore& store, Date t_valid, Date t_test, SplitMode mode,
                             SplitPhase phase);

// Test-phase split: every validation-period link joins the training set.
TemporalSplit merge_validation_into_train(const GraphStore& store, const TemporalSplit& split);

// ---------------------------------------------------------------------------

// Percentages in [0, 100]; nullopt when the denominator is zero.
struct QualityReport {
  std::optional<double> mutual_citation_pct;
  std::optional<double> authorship_completeness_pct;
  std::optional<double> venue_completeness_pct;
  std::optional<double> institution_completeness_pct;
};

QualityReport quality_report(const GraphStore& store);

}  // namespace citekg
