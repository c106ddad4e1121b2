#include "urbanflux/evalx.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include "urbanflux/errors.hpp"
#include "urbanflux/rng.hpp"

namespace urbanflux {

CvCandidate forest_candidate(const ForestConfig& cfg, Target target) {
  CvCandidate c;
  c.label = "rf depth " + std::to_string(cfg.max_depth) + " x" + std::to_string(cfg.n_trees);
  c.target = target;
  c.fit = [cfg, target](const Dataset& train, const Dataset*, TrainHistory*) -> std::unique_ptr<Regressor> {
    return std::make_unique<ForestModel>(train_forest(train, target, cfg));
  };
  return c;
}

CvCandidate svr_candidate(const SvrConfig& cfg, Target target) {
  CvCandidate c;
  c.label = "linear svr";
  c.target = target;
  c.fit = [cfg, target](const Dataset& train, const Dataset*, TrainHistory*) -> std::unique_ptr<Regressor> {
    return std::make_unique<SvrModel>(train_svr(train, target, cfg));
  };
  return c;
}

HoldoutSplit holdout_split(std::size_t n, double train_share, std::uint64_t seed) {
  if (!(train_share > 0.0 && train_share < 1.0)) throw ConfigError("train share must be in (0, 1)");
  if (n < 5) throw ConfigError("holdout evaluation needs at least 5 samples");
  const auto test = static_cast<std::size_t>(std::floor(static_cast<double>(n) * (1.0 - train_share) + 1e-9));
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  Rng rng(seed);
  rng.shuffle(std::span<std::size_t>(perm));
  HoldoutSplit s;
  s.test.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(test));
  s.train.assign(perm.begin() + static_cast<std::ptrdiff_t>(test), perm.end());
  std::sort(s.test.begin(), s.test.end());
  std::sort(s.train.begin(), s.train.end());
  return s;
}

HoldoutReport holdout_eval(const Dataset& dataset, double train_share, std::uint64_t seed,
                           std::span<const CvCandidate> candidates) {
  const HoldoutSplit split = holdout_split(dataset.size(), train_share, seed);
  const Dataset train = dataset.subset(split.train);
  const Dataset test = dataset.subset(split.test);
  HoldoutReport report;
  report.train_size = train.size();
  report.test_size = test.size();
  for (const auto& cand : candidates) {
    HoldoutRow row;
    row.label = cand.label;
    row.target = cand.target;
    TrainHistory history;
    const auto model = cand.fit(train, &test, &history);
    row.train_median = median_accuracy(*model, train);
    row.test_median = median_accuracy(*model, test);
    if (!history.epochs.empty()) row.history = std::move(history);
    report.rows.push_back(std::move(row));
  }
  return report;
}

Dataset refeaturize(const Dataset& dataset, const NormalizationInfo& norm) {
  std::vector<RawSample> raw;
  raw.reserve(dataset.size());
  for (const auto& r : dataset.rows) raw.push_back(r.raw);
  Dataset out = normalize_with(raw, norm);
  out.grid = dataset.grid;
  out.provenance = dataset.provenance;
  return out;
}

TransferReport transfer_eval(const Regressor& model, const std::string& train_region,
                             const Region& test_region, const TransferOptions& opts) {
  if (opts.renormalize && !opts.allow_renormalize) {
    throw NormMismatch("re-normalizing the test region needs the explicit override");
  }
  TransferReport r;
  r.train_region = train_region;
  r.test_region = test_region.name;
  r.algorithm = model.algorithm();
  r.target = model.target();
  const bool same = test_region.dataset.norm == model.norm_info();
  if (opts.renormalize || same) {
    r.scores = score(model, test_region.dataset);
    for (const auto& s : r.scores.samples) r.sample_ids.push_back(test_region.dataset.rows[s.row].sample_id);
  } else {
    const Dataset frozen = refeaturize(test_region.dataset, model.norm_info());
    r.scores = score(model, frozen);
    for (const auto& s : r.scores.samples) r.sample_ids.push_back(frozen.rows[s.row].sample_id);
  }
  r.accuracies = r.scores.accuracies();
  r.median_accuracy = r.scores.median_accuracy;
  r.excluded = r.scores.excluded;
  return r;
}

ActivitySplit split_by_activity(const Dataset& dataset, double threshold_hours, int period_days) {
  const int days = period_days > 0 ? period_days : dataset.norm.days;
  // Slack for totals rebuilt from daily averages.
  const double limit = threshold_hours * (1.0 + 1e-12);
  std::vector<std::size_t> low, high;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const double period_vht = dataset.rows[i].raw.vht_total * static_cast<double>(days);
    (period_vht <= limit ? low : high).push_back(i);
  }
  return {dataset.subset(low), dataset.subset(high)};
}

std::vector<SurfaceCell> error_surface(const Regressor& model, const Dataset& dataset) {
  std::vector<SurfaceCell> cells;
  cells.reserve(dataset.size());
  const Target target = model.target();
  for (const auto& row : dataset.rows) {
    SurfaceCell c;
    c.sample_id = row.sample_id;
    c.center = row.center;
    c.prediction = scored_prediction(model, row.env.to_vector());
    c.defined = has_target(row, target) && !(target == Target::Total && row.demand.total_norm == 0.0);
    if (has_target(row, target)) c.ground_truth = target_of(row, target);
    if (c.defined) {
      c.accuracy = target == Target::Total ? accuracy_total(c.ground_truth[0], c.prediction[0])
                                           : accuracy_dist(c.ground_truth, c.prediction);
    } else {
      c.accuracy = std::numeric_limits<double>::quiet_NaN();
    }
    cells.push_back(std::move(c));
  }
  return cells;
}

namespace {

Json nullable(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

}  // namespace

Json to_json(const TrainHistory& h) {
  Json out = Json::array();
  for (const auto& e : h.epochs) {
    out.push_back({{"epoch", e.epoch},
                   {"loss", nullable(e.loss)},
                   {"mse", nullable(e.mse)},
                   {"train_error", nullable(e.train_error)},
                   {"heldout_error", nullable(e.heldout_error)}});
  }
  return out;
}

Json to_json(const HoldoutReport& r) {
  Json rows = Json::array();
  for (const auto& row : r.rows) {
    Json j = {{"label", row.label},
              {"target", to_string(row.target)},
              {"train_median", nullable(row.train_median)},
              {"test_median", nullable(row.test_median)}};
    if (row.history) j["history"] = to_json(*row.history);
    rows.push_back(std::move(j));
  }
  return {{"train_size", r.train_size}, {"test_size", r.test_size}, {"rows", std::move(rows)}};
}

Json to_json(const TransferReport& r) {
  Json acc = Json::array();
  for (double a : r.accuracies) acc.push_back(nullable(a));
  return {{"direction", r.train_region + " -> " + r.test_region},
          {"train_region", r.train_region},
          {"test_region", r.test_region},
          {"algorithm", r.algorithm},
          {"target", to_string(r.target)},
          {"median_accuracy", nullable(r.median_accuracy)},
          {"scored", r.accuracies.size()},
          {"excluded", r.excluded},
          {"sample_ids", r.sample_ids},
          {"accuracies", std::move(acc)}};
}

Json to_json(const std::vector<CvRow>& rows) {
  Json out = Json::array();
  for (const auto& r : rows) {
    Json folds = Json::array();
    for (double m : r.fold_medians) folds.push_back(nullable(m));
    out.push_back({{"label", r.label},
                   {"target", to_string(r.target)},
                   {"fold_medians", std::move(folds)},
                   {"median_accuracy", nullable(r.median_accuracy)}});
  }
  return out;
}

void write_surface_csv(const std::filesystem::path& path, std::span<const SurfaceCell> cells) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  auto join = [](const std::vector<double>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (i) s += ';';
      s += format_double(v[i]);
    }
    return s;
  };
  out << "sample_id,gt,pred,accuracy\n";
  for (const auto& c : cells) {
    out << c.sample_id << ',' << join(c.ground_truth) << ',' << join(c.prediction) << ','
        << (std::isfinite(c.accuracy) ? format_double(c.accuracy) : std::string("nan")) << '\n';
  }
  if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace urbanflux
