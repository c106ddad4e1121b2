#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "urbanflux/features.hpp"

namespace urbanflux {

/// What a model predicts: the normalized daily total (one output) or the
/// 24 hourly shares.
enum class Target { Total, Hourly };

const char* to_string(Target t);
/// "total" or "hourly"; ConfigError otherwise.
Target target_from_string(const std::string& s);

/// Common interface of every model the scoring harness accepts.
class Regressor {
 public:
  virtual ~Regressor() = default;

  virtual Target target() const = 0;
  /// "ann", "rf" or "svr".
  virtual std::string algorithm() const = 0;
  virtual const NormalizationInfo& norm_info() const = 0;
  /// Raw model outputs: width 1 for Target::Total, 24 for Target::Hourly.
  virtual std::vector<double> predict(const EnvVector& x) const = 0;

  std::size_t output_width() const { return target() == Target::Total ? 1 : kHours; }
};

/// Clamps negatives to zero and rescales to sum 1. A vector with no
/// positive mass maps to the uniform distribution.
std::vector<double> renormalize(std::span<const double> v);

/// Outputs as they are scored: hourly outputs renormalized, totals as is.
std::vector<double> scored_prediction(const Regressor& model, const EnvVector& x);

/// 1 - |gt - pred| / gt. Not clamped. Throws ZeroGroundTruth when gt == 0.
double accuracy_total(double gt, double pred);

/// 1 - sum_i |gt_i - pred_i| over 24 hours. ShapeError on other widths;
/// RangeError when gt does not sum to 1 within 1e-6.
double accuracy_dist(std::span<const double> gt, std::span<const double> pred);

/// Median; even counts average the middle two. Empty input gives NaN.
double median(std::vector<double> values);

struct SampleScore {
  std::size_t row = 0;  ///< index into the dataset rows
  std::vector<double> ground_truth;
  std::vector<double> prediction;
  double accuracy = 0.0;
};

struct Scores {
  std::vector<SampleScore> samples;
  std::size_t excluded = 0;  ///< zero ground truth (Total) or undefined demand (Hourly)
  double median_accuracy = 0.0;

  std::vector<double> accuracies() const;
};

/// Per-sample accuracy of `model` over `dataset` (relative error accuracy for
/// totals, L1 accuracy for hourly shares), plus the median.
Scores score(const Regressor& model, const Dataset& dataset);

double median_accuracy(const Regressor& model, const Dataset& dataset);

/// Ground-truth target of a row for the given model target.
std::vector<double> target_of(const DatasetRow& row, Target target);

/// Whether a row carries a usable target for training and scoring.
bool has_target(const DatasetRow& row, Target target);

}  // namespace urbanflux
