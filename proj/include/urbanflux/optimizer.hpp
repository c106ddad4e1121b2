#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "urbanflux/features.hpp"
#include "urbanflux/json_io.hpp"
#include "urbanflux/nets.hpp"
#include "urbanflux/regressor.hpp"
#include "urbanflux/rng.hpp"

namespace urbanflux {

struct ConstraintSet {
  PoiCounts base{};
  bool fixed_total = true;
  std::vector<int> fixed_indices{12};
  std::int64_t delta_bound = 50;

  /// ConfigError on fixed indices outside 0..15.
  void validate() const;
  bool is_fixed(std::size_t j) const;
  std::int64_t lower(std::size_t j) const;
  std::int64_t upper(std::size_t j) const;
  std::int64_t base_total() const;
  /// Throws Infeasible when no count vector satisfies the constraints.
  void check_satisfiable() const;
};

/// Every constraint, checked directly: bounds, fixed indices, total and
/// non-negativity.
bool is_feasible(const PoiCounts& counts, const ConstraintSet& cs);

/// Projects `counts` onto the feasible set: clamp to bounds, restore fixed
/// indices, then move the total discrepancy in +-1 steps round-robin over the
/// non-fixed indices in an order drawn from `rng`. Feasible input comes back
/// unchanged. Throws Infeasible.
PoiCounts repair(PoiCounts counts, const ConstraintSet& cs, Rng& rng);

/// As above with an explicit order: indices in `first` absorb the
/// discrepancy before those in `second`.
PoiCounts repair_ordered(PoiCounts counts, const ConstraintSet& cs, std::span<const int> first,
                         std::span<const int> second);

enum class ObjectiveKind { MinHourlyVariance, MinPeak, CustomWeighted, MinProportionVariance };

const char* to_string(ObjectiveKind k);
ObjectiveKind objective_from_string(const std::string& s);

struct Objective {
  ObjectiveKind kind = ObjectiveKind::MinHourlyVariance;
  /// CustomWeighted: sum_h weights[h] * hourly_vht[h].
  HourlyVector weights{};

  /// Lower is better.
  double evaluate(const HybridPrediction& p) const;
};

/// Population variance of 24 values.
double hourly_variance(const HourlyVector& v);

using FitnessFn = std::function<double(const PoiCounts&)>;

/// Fitness through predict_hybrid; +inf for an all-zero count vector.
FitnessFn model_fitness(const Regressor& total_model, const Regressor& hourly_model,
                        const Objective& objective);

HybridPrediction predict_counts(const Regressor& total_model, const Regressor& hourly_model,
                                const PoiCounts& counts);

struct GaConfig {
  std::size_t population = 64;
  std::size_t generations = 200;
  std::size_t tournament_k = 3;
  double crossover_rate = 0.9;
  double mutation_rate = 0.2;
  std::size_t elitism = 2;
  std::uint64_t seed = 0;
  unsigned threads = 1;

  void validate() const;
};

using Genome = std::vector<std::int64_t>;

struct Individual {
  Genome genome;
  PoiCounts counts{};  ///< decoded, always feasible
  double fitness = 0.0;
};

using Population = std::vector<Individual>;

/// Genome representation: 16 counts, or one delta per category group.
class GenomeCodec {
 public:
  /// Full mode: the genome is the 16 counts.
  explicit GenomeCodec(ConstraintSet cs);
  /// Grouped mode: one delta per group, applied to every index in it.
  GenomeCodec(ConstraintSet cs, std::vector<std::vector<int>> groups);

  bool grouped() const { return !groups_.empty(); }
  std::size_t genes() const { return grouped() ? groups_.size() : kCategoryCount; }
  const ConstraintSet& constraints() const { return cs_; }
  const std::vector<std::vector<int>>& groups() const { return groups_; }

  Genome base() const;
  Genome random(Rng& rng) const;
  Genome crossover(const Genome& a, const Genome& b, Rng& rng) const;
  void mutate(Genome& g, Rng& rng) const;
  /// Feasible counts for a genome; a pure function of the genome.
  PoiCounts decode(const Genome& g) const;

 private:
  ConstraintSet cs_;
  std::vector<std::vector<int>> groups_;
  std::vector<int> free_ungrouped_;
  std::vector<int> free_grouped_;
};

/// Default grouped mapping: eating, housing, work, public transport.
std::vector<std::vector<int>> default_groups();

/// Memoizing evaluator keyed by decoded counts.
class FitnessCache {
 public:
  explicit FitnessCache(FitnessFn fn) : fn_(std::move(fn)) {}
  /// Fills `fitness` of every individual; evaluates misses on `threads`.
  void evaluate(Population& pop, unsigned threads);
  std::size_t evaluations() const { return evaluations_; }

 private:
  FitnessFn fn_;
  std::map<PoiCounts, double> memo_;
  std::size_t evaluations_ = 0;
};

/// Sorts by fitness, ties broken by genome, so order is reproducible.
void rank(Population& pop);

/// One generation. Elites are copied verbatim from the ranked population;
/// the rest come from tournament selection, uniform crossover and mutation.
/// With elitism >= population the population is returned unchanged.
Population step(const Population& pop, const GenomeCodec& codec, const GaConfig& cfg,
                FitnessCache& fitness, Rng& rng);

using GaObserver = std::function<void(std::size_t generation, const Population& pop)>;

struct GaResult {
  PoiCounts base_counts{};
  PoiCounts best_counts{};
  Genome best_genome;
  double base_fitness = 0.0;
  double best_fitness = 0.0;
  std::vector<double> history;  ///< best fitness per generation, initial population first
  std::size_t evaluations = 0;
  double seconds = 0.0;
  std::optional<HybridPrediction> base_prediction;
  std::optional<HybridPrediction> best_prediction;
};

/// Runs the GA with an arbitrary fitness. The base genome is part of the
/// initial population.
GaResult run_ga_with(const GenomeCodec& codec, const GaConfig& cfg, const FitnessFn& fitness,
                     const GaObserver& observer = {});

GaResult run_ga(const ConstraintSet& cs, const GaConfig& cfg, const Regressor& total_model,
                const Regressor& hourly_model, const Objective& objective,
                const GaObserver& observer = {});

GaResult run_grouped_ga(const ConstraintSet& cs, const GaConfig& cfg, const Regressor& total_model,
                        const Regressor& hourly_model, const Objective& objective,
                        std::vector<std::vector<int>> groups = default_groups(),
                        const GaObserver& observer = {});

struct Edit {
  enum class Op { Add, Set, Equalize, Scale };
  Op op = Op::Add;
  int index = -1;      ///< category for Add / Set
  double value = 0.0;  ///< amount, new value, equal level (<= 0: keep the total) or factor
};

using RealCounts = std::array<double, kCategoryCount>;

/// Applies edits in order. NegativeCount if any count ends up negative.
RealCounts apply_edits(const RealCounts& base, std::span<const Edit> edits);

struct WhatIfResult {
  RealCounts base_counts{};
  RealCounts edited_counts{};
  HybridPrediction base;
  HybridPrediction edited;
  double l1_divergence = 0.0;  ///< sum_h |base share - edited share|
};

WhatIfResult what_if(const RealCounts& base, std::span<const Edit> edits, const Regressor& total_model,
                     const Regressor& hourly_model);

HybridPrediction predict_real_counts(const Regressor& total_model, const Regressor& hourly_model,
                                     const RealCounts& counts);

/// Scenario file: constraints, objective, GA settings and mode.
struct Scenario {
  ConstraintSet constraints;
  Objective objective;
  GaConfig ga;
  bool grouped = false;
  std::vector<std::vector<int>> groups = default_groups();
};

Scenario scenario_from_json(const Json& j);
Json to_json(const Scenario& s);
Json to_json(const HybridPrediction& p);
Json to_json(const GaResult& r);

}  // namespace urbanflux
