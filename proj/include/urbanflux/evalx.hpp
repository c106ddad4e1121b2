#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "urbanflux/baselines.hpp"
#include "urbanflux/features.hpp"
#include "urbanflux/json_io.hpp"
#include "urbanflux/nets.hpp"
#include "urbanflux/regressor.hpp"

namespace urbanflux {

struct Region {
  std::string name;
  GridSpec grid;
  Dataset dataset;
};

CvCandidate forest_candidate(const ForestConfig& cfg, Target target);
CvCandidate svr_candidate(const SvrConfig& cfg, Target target);

struct HoldoutSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

/// Seeded random split; the test share is floor(n * (1 - train_share)).
HoldoutSplit holdout_split(std::size_t n, double train_share, std::uint64_t seed);

struct HoldoutRow {
  std::string label;
  Target target = Target::Total;
  double train_median = 0.0;
  double test_median = 0.0;
  std::optional<TrainHistory> history;  ///< iterative learners only
};

struct HoldoutReport {
  std::size_t train_size = 0;
  std::size_t test_size = 0;
  std::vector<HoldoutRow> rows;
};

HoldoutReport holdout_eval(const Dataset& dataset, double train_share, std::uint64_t seed,
                           std::span<const CvCandidate> candidates);

struct TransferOptions {
  /// Score with the test region's own normalization instead of the model's.
  bool renormalize = false;
  /// Required alongside `renormalize`; guards against doing it by accident.
  bool allow_renormalize = false;
};

struct TransferReport {
  std::string train_region;
  std::string test_region;
  std::string algorithm;
  Target target = Target::Total;
  double median_accuracy = 0.0;
  std::size_t excluded = 0;
  std::vector<std::size_t> sample_ids;
  std::vector<double> accuracies;
  Scores scores;
};

/// Test-region rows re-featurized with `norm` from their raw counts.
Dataset refeaturize(const Dataset& dataset, const NormalizationInfo& norm);

TransferReport transfer_eval(const Regressor& model, const std::string& train_region,
                             const Region& test_region, const TransferOptions& opts = {});

struct ActivitySplit {
  Dataset low;   ///< period VHT <= threshold
  Dataset high;  ///< the rest
};

/// Partitions by accumulated VHT over `period_days` (daily average times
/// the period). Zero means the dataset's own day count.
ActivitySplit split_by_activity(const Dataset& dataset, double threshold_hours = 2000.0,
                                int period_days = 0);

struct SurfaceCell {
  std::size_t sample_id = 0;
  GeoPoint center;
  std::vector<double> ground_truth;
  std::vector<double> prediction;
  double accuracy = 0.0;  ///< NaN where the sample has no usable target
  bool defined = true;
};

/// One cell per dataset row, in row order.
std::vector<SurfaceCell> error_surface(const Regressor& model, const Dataset& dataset);

Json to_json(const HoldoutReport& r);
Json to_json(const TransferReport& r);
Json to_json(const std::vector<CvRow>& rows);
Json to_json(const TrainHistory& h);

/// CSV with one row per sample: sample_id, gt, pred, accuracy. Hourly
/// vectors are written as 24 values joined by ';'.
void write_surface_csv(const std::filesystem::path& path, std::span<const SurfaceCell> cells);

}  // namespace urbanflux
