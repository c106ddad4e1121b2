#include "urbanflux/optimizer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <thread>

#include "urbanflux/errors.hpp"

namespace urbanflux {

void ConstraintSet::validate() const {
  for (int j : fixed_indices) {
    if (j < 0 || j >= static_cast<int>(kCategoryCount)) {
      throw ConfigError("fixed index " + std::to_string(j) + " is outside 0..15");
    }
  }
}

bool ConstraintSet::is_fixed(std::size_t j) const {
  return std::find(fixed_indices.begin(), fixed_indices.end(), static_cast<int>(j)) != fixed_indices.end();
}

std::int64_t ConstraintSet::lower(std::size_t j) const {
  return is_fixed(j) ? base[j] : std::max<std::int64_t>(0, base[j] - delta_bound);
}

std::int64_t ConstraintSet::upper(std::size_t j) const {
  return is_fixed(j) ? base[j] : base[j] + delta_bound;
}

std::int64_t ConstraintSet::base_total() const {
  return std::accumulate(base.begin(), base.end(), std::int64_t{0});
}

void ConstraintSet::check_satisfiable() const {
  validate();
  if (delta_bound < 0) throw Infeasible("delta_bound must be >= 0");
  std::int64_t lo = 0, hi = 0;
  for (std::size_t j = 0; j < kCategoryCount; ++j) {
    if (lower(j) > upper(j) || upper(j) < 0) {
      throw Infeasible("category " + std::to_string(j) + " has no admissible count");
    }
    lo += lower(j);
    hi += upper(j);
  }
  if (fixed_total && (base_total() < lo || base_total() > hi)) {
    throw Infeasible("the fixed total " + std::to_string(base_total()) + " is outside the reachable range [" +
                     std::to_string(lo) + ", " + std::to_string(hi) + "]");
  }
}

bool is_feasible(const PoiCounts& counts, const ConstraintSet& cs) {
  std::int64_t total = 0;
  for (std::size_t j = 0; j < kCategoryCount; ++j) {
    if (counts[j] < 0) return false;
    if (cs.is_fixed(j) && counts[j] != cs.base[j]) return false;
    if (std::abs(counts[j] - cs.base[j]) > cs.delta_bound && !cs.is_fixed(j)) return false;
    total += counts[j];
  }
  return !cs.fixed_total || total == cs.base_total();
}

namespace {

// Round-robin +-1 steps over `order`, computed in closed form: k full passes
// then one extra step for the first indices that still have slack.
void distribute(PoiCounts& c, std::int64_t& diff, const ConstraintSet& cs, std::span<const int> order) {
  if (diff == 0 || order.empty()) return;
  const bool down = diff > 0;
  std::vector<std::int64_t> slack;
  slack.reserve(order.size());
  for (int j : order) {
    const auto u = static_cast<std::size_t>(j);
    slack.push_back(down ? c[u] - cs.lower(u) : cs.upper(u) - c[u]);
  }
  const std::int64_t need = std::abs(diff);
  auto moved = [&](std::int64_t k) {
    std::int64_t s = 0;
    for (auto v : slack) s += std::min(v, k);
    return s;
  };
  const std::int64_t max_slack = *std::max_element(slack.begin(), slack.end());
  std::int64_t lo = 0, hi = max_slack;
  while (lo < hi) {
    const std::int64_t mid = lo + (hi - lo + 1) / 2;
    if (moved(mid) <= need) lo = mid; else hi = mid - 1;
  }
  std::int64_t rem = need - moved(lo);
  for (std::size_t i = 0; i < order.size(); ++i) {
    std::int64_t step = std::min(slack[i], lo);
    if (rem > 0 && slack[i] > lo) {
      ++step;
      --rem;
    }
    const auto u = static_cast<std::size_t>(order[i]);
    c[u] += down ? -step : step;
    diff += down ? -step : step;
  }
}

}  // namespace

PoiCounts repair_ordered(PoiCounts counts, const ConstraintSet& cs, std::span<const int> first,
                         std::span<const int> second) {
  cs.check_satisfiable();
  for (std::size_t j = 0; j < kCategoryCount; ++j) {
    counts[j] = cs.is_fixed(j) ? cs.base[j] : std::clamp(counts[j], cs.lower(j), cs.upper(j));
  }
  if (cs.fixed_total) {
    std::int64_t diff = std::accumulate(counts.begin(), counts.end(), std::int64_t{0}) - cs.base_total();
    distribute(counts, diff, cs, first);
    distribute(counts, diff, cs, second);
    if (diff != 0) throw Infeasible("could not restore the fixed total");
  }
  return counts;
}

PoiCounts repair(PoiCounts counts, const ConstraintSet& cs, Rng& rng) {
  std::vector<int> order;
  for (std::size_t j = 0; j < kCategoryCount; ++j) {
    if (!cs.is_fixed(j)) order.push_back(static_cast<int>(j));
  }
  rng.shuffle(std::span<int>(order));
  return repair_ordered(counts, cs, order, {});
}

const char* to_string(ObjectiveKind k) {
  switch (k) {
    case ObjectiveKind::MinHourlyVariance: return "min_hourly_variance";
    case ObjectiveKind::MinPeak: return "min_peak";
    case ObjectiveKind::CustomWeighted: return "custom_weighted";
    case ObjectiveKind::MinProportionVariance: return "min_proportion_variance";
  }
  return "?";
}

ObjectiveKind objective_from_string(const std::string& s) {
  for (auto k : {ObjectiveKind::MinHourlyVariance, ObjectiveKind::MinPeak, ObjectiveKind::CustomWeighted,
                 ObjectiveKind::MinProportionVariance}) {
    if (s == to_string(k)) return k;
  }
  throw ConfigError("unknown objective '" + s + "'");
}

double hourly_variance(const HourlyVector& v) {
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(kHours);
  double s = 0.0;
  for (double x : v) s += (x - mean) * (x - mean);
  return s / static_cast<double>(kHours);
}

double Objective::evaluate(const HybridPrediction& p) const {
  switch (kind) {
    case ObjectiveKind::MinHourlyVariance: return hourly_variance(p.hourly_vht);
    case ObjectiveKind::MinPeak: return *std::max_element(p.hourly_vht.begin(), p.hourly_vht.end());
    case ObjectiveKind::CustomWeighted: {
      double s = 0.0;
      for (std::size_t h = 0; h < kHours; ++h) s += weights[h] * p.hourly_vht[h];
      return s;
    }
    case ObjectiveKind::MinProportionVariance: return hourly_variance(p.proportions);
  }
  return 0.0;
}

HybridPrediction predict_counts(const Regressor& total_model, const Regressor& hourly_model,
                                const PoiCounts& counts) {
  return predict_hybrid(total_model, hourly_model, env_from_counts(counts, total_model.norm_info()));
}

HybridPrediction predict_real_counts(const Regressor& total_model, const Regressor& hourly_model,
                                     const RealCounts& counts) {
  const EnvFeatures env =
      env_from_counts(std::span<const double, kCategoryCount>(counts), total_model.norm_info());
  return predict_hybrid(total_model, hourly_model, env);
}

FitnessFn model_fitness(const Regressor& total_model, const Regressor& hourly_model,
                        const Objective& objective) {
  return [&total_model, &hourly_model, objective](const PoiCounts& counts) {
    if (std::all_of(counts.begin(), counts.end(), [](std::int64_t c) { return c == 0; })) {
      return std::numeric_limits<double>::infinity();
    }
    return objective.evaluate(predict_counts(total_model, hourly_model, counts));
  };
}

void GaConfig::validate() const {
  if (population < 2) throw ConfigError("ga: population must be >= 2");
  if (tournament_k < 1) throw ConfigError("ga: tournament_k must be >= 1");
  if (elitism < 1 || elitism >= population) throw ConfigError("ga: elitism must be in [1, population)");
  if (!(crossover_rate >= 0.0 && crossover_rate <= 1.0)) throw ConfigError("ga: crossover_rate must be in [0, 1]");
  if (!(mutation_rate >= 0.0 && mutation_rate <= 1.0)) throw ConfigError("ga: mutation_rate must be in [0, 1]");
}

std::vector<std::vector<int>> default_groups() { return {{1}, {8}, {9}, {13}}; }

GenomeCodec::GenomeCodec(ConstraintSet cs) : cs_(std::move(cs)) {
  cs_.check_satisfiable();
  for (std::size_t j = 0; j < kCategoryCount; ++j) {
    if (!cs_.is_fixed(j)) free_ungrouped_.push_back(static_cast<int>(j));
  }
}

GenomeCodec::GenomeCodec(ConstraintSet cs, std::vector<std::vector<int>> groups)
    : cs_(std::move(cs)), groups_(std::move(groups)) {
  cs_.check_satisfiable();
  if (groups_.empty()) throw ConfigError("grouped mode needs at least one group");
  std::array<bool, kCategoryCount> in_group{};
  for (const auto& g : groups_) {
    if (g.empty()) throw ConfigError("empty category group");
    for (int j : g) {
      if (j < 0 || j >= static_cast<int>(kCategoryCount)) throw ConfigError("group index outside 0..15");
      if (in_group[static_cast<std::size_t>(j)]) throw ConfigError("category in more than one group");
      in_group[static_cast<std::size_t>(j)] = true;
    }
  }
  for (std::size_t j = 0; j < kCategoryCount; ++j) {
    if (cs_.is_fixed(j)) continue;
    (in_group[j] ? free_grouped_ : free_ungrouped_).push_back(static_cast<int>(j));
  }
}

Genome GenomeCodec::base() const {
  if (grouped()) return Genome(groups_.size(), 0);
  return Genome(cs_.base.begin(), cs_.base.end());
}

Genome GenomeCodec::random(Rng& rng) const {
  const std::int64_t b = cs_.delta_bound;
  if (grouped()) {
    Genome g(groups_.size());
    for (auto& v : g) v = rng.between(-b, b);
    return g;
  }
  PoiCounts c = cs_.base;
  for (int j : free_ungrouped_) c[static_cast<std::size_t>(j)] += rng.between(-b, b);
  c = repair(c, cs_, rng);
  return Genome(c.begin(), c.end());
}

Genome GenomeCodec::crossover(const Genome& a, const Genome& b, Rng& rng) const {
  Genome child(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) child[i] = rng.bernoulli(0.5) ? a[i] : b[i];
  if (grouped()) return child;
  PoiCounts c{};
  std::copy(child.begin(), child.end(), c.begin());
  c = repair(c, cs_, rng);
  return Genome(c.begin(), c.end());
}

void GenomeCodec::mutate(Genome& g, Rng& rng) const {
  const std::int64_t delta = rng.between(1, 5);
  if (grouped()) {
    auto& v = g[rng.below(g.size())];
    v = std::clamp(v + (rng.bernoulli(0.5) ? delta : -delta), -cs_.delta_bound, cs_.delta_bound);
    return;
  }
  if (free_ungrouped_.size() < 2) return;
  const auto from = static_cast<std::size_t>(free_ungrouped_[rng.below(free_ungrouped_.size())]);
  std::size_t to = from;
  while (to == from) to = static_cast<std::size_t>(free_ungrouped_[rng.below(free_ungrouped_.size())]);
  PoiCounts c{};
  std::copy(g.begin(), g.end(), c.begin());
  c[from] -= delta;
  c[to] += delta;
  if (!is_feasible(c, cs_)) c = repair(c, cs_, rng);
  g.assign(c.begin(), c.end());
}

PoiCounts GenomeCodec::decode(const Genome& g) const {
  if (g.size() != genes()) throw ShapeError("genome has " + std::to_string(g.size()) + " genes");
  PoiCounts c = cs_.base;
  if (grouped()) {
    for (std::size_t k = 0; k < groups_.size(); ++k) {
      for (int j : groups_[k]) c[static_cast<std::size_t>(j)] += g[k];
    }
  } else {
    std::copy(g.begin(), g.end(), c.begin());
  }
  return repair_ordered(c, cs_, free_ungrouped_, free_grouped_);
}

void FitnessCache::evaluate(Population& pop, unsigned threads) {
  std::vector<PoiCounts> missing;
  for (const auto& ind : pop) {
    if (!memo_.count(ind.counts) &&
        std::find(missing.begin(), missing.end(), ind.counts) == missing.end()) {
      missing.push_back(ind.counts);
    }
  }
  std::vector<double> values(missing.size());
  auto work = [&](std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) {
      const double v = fn_(missing[i]);
      values[i] = std::isnan(v) ? std::numeric_limits<double>::infinity() : v;
    }
  };
  const std::size_t t = std::clamp<std::size_t>(threads, 1, std::max<std::size_t>(1, missing.size()));
  if (t == 1) {
    work(0, missing.size());
  } else {
    std::vector<std::thread> pool;
    const std::size_t chunk = (missing.size() + t - 1) / t;
    for (std::size_t i = 0; i < t; ++i) {
      const std::size_t b = i * chunk, e = std::min(missing.size(), b + chunk);
      if (b < e) pool.emplace_back(work, b, e);
    }
    for (auto& th : pool) th.join();
  }
  for (std::size_t i = 0; i < missing.size(); ++i) memo_.emplace(missing[i], values[i]);
  evaluations_ += missing.size();
  for (auto& ind : pop) ind.fitness = memo_.at(ind.counts);
}

void rank(Population& pop) {
  std::stable_sort(pop.begin(), pop.end(), [](const Individual& a, const Individual& b) {
    if (a.fitness != b.fitness) return a.fitness < b.fitness;
    return a.genome < b.genome;
  });
}

namespace {

const Individual& tournament(const Population& ranked, std::size_t k, Rng& rng) {
  std::size_t best = ranked.size();
  for (std::size_t i = 0; i < k; ++i) best = std::min<std::size_t>(best, rng.below(ranked.size()));
  return ranked[best];
}

Individual make_individual(const GenomeCodec& codec, Genome g) {
  Individual ind;
  ind.counts = codec.decode(g);
  if (!codec.grouped()) g.assign(ind.counts.begin(), ind.counts.end());
  ind.genome = std::move(g);
  return ind;
}

}  // namespace

Population step(const Population& pop, const GenomeCodec& codec, const GaConfig& cfg,
                FitnessCache& fitness, Rng& rng) {
  if (cfg.elitism >= pop.size()) return pop;
  Population ranked = pop;
  rank(ranked);
  Population next(ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(cfg.elitism));
  Population children;
  while (next.size() + children.size() < pop.size()) {
    const Individual& a = tournament(ranked, cfg.tournament_k, rng);
    const Individual& b = tournament(ranked, cfg.tournament_k, rng);
    Genome child = rng.uniform() < cfg.crossover_rate ? codec.crossover(a.genome, b.genome, rng) : a.genome;
    if (rng.uniform() < cfg.mutation_rate) codec.mutate(child, rng);
    children.push_back(make_individual(codec, std::move(child)));
  }
  fitness.evaluate(children, cfg.threads);
  next.insert(next.end(), children.begin(), children.end());
  return next;
}

GaResult run_ga_with(const GenomeCodec& codec, const GaConfig& cfg, const FitnessFn& fn,
                     const GaObserver& observer) {
  cfg.validate();
  const auto start = std::chrono::steady_clock::now();
  Rng rng(cfg.seed);
  FitnessCache cache(fn);
  Population pop;
  pop.push_back(make_individual(codec, codec.base()));
  while (pop.size() < cfg.population) pop.push_back(make_individual(codec, codec.random(rng)));
  cache.evaluate(pop, cfg.threads);
  rank(pop);

  GaResult res;
  res.base_counts = codec.constraints().base;
  res.base_fitness = pop.front().fitness;
  for (const auto& ind : pop) {
    if (ind.genome == codec.base()) res.base_fitness = ind.fitness;
  }
  res.history.push_back(pop.front().fitness);
  if (observer) observer(0, pop);
  for (std::size_t gen = 1; gen <= cfg.generations; ++gen) {
    pop = step(pop, codec, cfg, cache, rng);
    rank(pop);
    res.history.push_back(pop.front().fitness);
    if (observer) observer(gen, pop);
  }
  res.best_counts = pop.front().counts;
  res.best_genome = pop.front().genome;
  res.best_fitness = pop.front().fitness;
  res.evaluations = cache.evaluations();
  res.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return res;
}

GaResult run_ga(const ConstraintSet& cs, const GaConfig& cfg, const Regressor& total_model,
                const Regressor& hourly_model, const Objective& objective, const GaObserver& observer) {
  const GenomeCodec codec(cs);
  GaResult r = run_ga_with(codec, cfg, model_fitness(total_model, hourly_model, objective), observer);
  r.base_prediction = predict_counts(total_model, hourly_model, r.base_counts);
  r.best_prediction = predict_counts(total_model, hourly_model, r.best_counts);
  return r;
}

GaResult run_grouped_ga(const ConstraintSet& cs, const GaConfig& cfg, const Regressor& total_model,
                        const Regressor& hourly_model, const Objective& objective,
                        std::vector<std::vector<int>> groups, const GaObserver& observer) {
  const GenomeCodec codec(cs, std::move(groups));
  GaResult r = run_ga_with(codec, cfg, model_fitness(total_model, hourly_model, objective), observer);
  r.base_prediction = predict_counts(total_model, hourly_model, r.base_counts);
  r.best_prediction = predict_counts(total_model, hourly_model, r.best_counts);
  return r;
}

RealCounts apply_edits(const RealCounts& base, std::span<const Edit> edits) {
  RealCounts c = base;
  for (const auto& e : edits) {
    const bool indexed = e.op == Edit::Op::Add || e.op == Edit::Op::Set;
    if (indexed && (e.index < 0 || e.index >= static_cast<int>(kCategoryCount))) {
      throw RangeError("edit index " + std::to_string(e.index) + " is outside 0..15");
    }
    switch (e.op) {
      case Edit::Op::Add: c[static_cast<std::size_t>(e.index)] += e.value; break;
      case Edit::Op::Set: c[static_cast<std::size_t>(e.index)] = e.value; break;
      case Edit::Op::Equalize: {
        const double level = e.value > 0.0 ? e.value
                                           : std::accumulate(c.begin(), c.end(), 0.0) / static_cast<double>(kCategoryCount);
        c.fill(level);
        break;
      }
      case Edit::Op::Scale:
        for (double& v : c) v *= e.value;
        break;
    }
  }
  for (std::size_t j = 0; j < kCategoryCount; ++j) {
    if (c[j] < 0.0 || !std::isfinite(c[j])) {
      throw NegativeCount("edit leaves category " + std::to_string(j) + " negative");
    }
  }
  return c;
}

WhatIfResult what_if(const RealCounts& base, std::span<const Edit> edits, const Regressor& total_model,
                     const Regressor& hourly_model) {
  WhatIfResult r;
  r.base_counts = base;
  r.edited_counts = apply_edits(base, edits);
  r.base = predict_real_counts(total_model, hourly_model, r.base_counts);
  r.edited = predict_real_counts(total_model, hourly_model, r.edited_counts);
  for (std::size_t h = 0; h < kHours; ++h) r.l1_divergence += std::abs(r.base.proportions[h] - r.edited.proportions[h]);
  return r;
}

Scenario scenario_from_json(const Json& j) {
  const std::string ctx = "scenario";
  Scenario s;
  const auto base = require<std::vector<std::int64_t>>(j, "base_counts", ctx);
  if (base.size() != kCategoryCount) {
    throw ShapeError("scenario: base_counts needs 16 entries, got " + std::to_string(base.size()));
  }
  std::copy(base.begin(), base.end(), s.constraints.base.begin());
  s.constraints.fixed_indices = optional_field<std::vector<int>>(j, "fixed_indices", {12}, ctx);
  s.constraints.delta_bound = optional_field<std::int64_t>(j, "delta_bound", 50, ctx);
  s.constraints.fixed_total = optional_field<bool>(j, "fixed_total", true, ctx);
  s.objective.kind = objective_from_string(optional_field<std::string>(j, "objective", "min_hourly_variance", ctx));
  if (j.contains("objective_weights")) {
    const auto w = require<std::vector<double>>(j, "objective_weights", ctx);
    if (w.size() != kHours) throw ShapeError("scenario: objective_weights needs 24 entries");
    std::copy(w.begin(), w.end(), s.objective.weights.begin());
  }
  const std::string mode = optional_field<std::string>(j, "mode", "full", ctx);
  if (mode != "full" && mode != "grouped") throw ConfigError("scenario: mode must be full or grouped");
  s.grouped = mode == "grouped";
  s.groups = optional_field<std::vector<std::vector<int>>>(j, "groups", default_groups(), ctx);
  if (j.contains("ga")) {
    const Json& g = j.at("ga");
    const std::string gctx = "scenario.ga";
    s.ga.population = optional_field<std::size_t>(g, "population", s.ga.population, gctx);
    s.ga.generations = optional_field<std::size_t>(g, "generations", s.ga.generations, gctx);
    s.ga.tournament_k = optional_field<std::size_t>(g, "tournament_k", s.ga.tournament_k, gctx);
    s.ga.crossover_rate = optional_field<double>(g, "crossover_rate", s.ga.crossover_rate, gctx);
    s.ga.mutation_rate = optional_field<double>(g, "mutation_rate", s.ga.mutation_rate, gctx);
    s.ga.elitism = optional_field<std::size_t>(g, "elitism", s.ga.elitism, gctx);
    s.ga.seed = optional_field<std::uint64_t>(g, "seed", s.ga.seed, gctx);
  }
  s.constraints.validate();
  s.ga.validate();
  return s;
}

Json to_json(const Scenario& s) {
  return {{"base_counts", s.constraints.base},
          {"fixed_indices", s.constraints.fixed_indices},
          {"delta_bound", s.constraints.delta_bound},
          {"fixed_total", s.constraints.fixed_total},
          {"objective", to_string(s.objective.kind)},
          {"objective_weights", s.objective.weights},
          {"mode", s.grouped ? "grouped" : "full"},
          {"groups", s.groups},
          {"ga",
           {{"population", s.ga.population},
            {"generations", s.ga.generations},
            {"tournament_k", s.ga.tournament_k},
            {"crossover_rate", s.ga.crossover_rate},
            {"mutation_rate", s.ga.mutation_rate},
            {"elitism", s.ga.elitism},
            {"seed", s.ga.seed}}}};
}

Json to_json(const HybridPrediction& p) {
  return {{"total_vht", p.total_vht}, {"hourly_vht", p.hourly_vht}, {"proportions", p.proportions}};
}

Json to_json(const GaResult& r) {
  Json j = {{"base_counts", r.base_counts},
            {"best_counts", r.best_counts},
            {"base_fitness", r.base_fitness},
            {"best_fitness", r.best_fitness},
            {"history", r.history},
            {"evaluations", r.evaluations}};
  if (r.base_prediction) j["base_prediction"] = to_json(*r.base_prediction);
  if (r.best_prediction) j["best_prediction"] = to_json(*r.best_prediction);
  return j;
}

}  // namespace urbanflux
