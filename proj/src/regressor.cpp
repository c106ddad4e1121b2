#include "urbanflux/regressor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "urbanflux/errors.hpp"

namespace urbanflux {

const char* to_string(Target t) { return t == Target::Total ? "total" : "hourly"; }

Target target_from_string(const std::string& s) {
  if (s == "total") return Target::Total;
  if (s == "hourly") return Target::Hourly;
  throw ConfigError("unknown target '" + s + "' (expected total or hourly)");
}

std::vector<double> renormalize(std::span<const double> v) {
  std::vector<double> out(v.size(), 0.0);
  double sum = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    out[i] = v[i] > 0.0 ? v[i] : 0.0;
    sum += out[i];
  }
  if (!(sum > 0.0) || !std::isfinite(sum)) {
    std::fill(out.begin(), out.end(), 1.0 / static_cast<double>(v.size()));
    return out;
  }
  for (double& x : out) x /= sum;
  return out;
}

std::vector<double> scored_prediction(const Regressor& model, const EnvVector& x) {
  auto raw = model.predict(x);
  if (model.target() == Target::Hourly) return renormalize(raw);
  return raw;
}

double accuracy_total(double gt, double pred) {
  if (gt == 0.0) throw ZeroGroundTruth("ground-truth total is zero");
  return 1.0 - std::abs(gt - pred) / gt;
}

double accuracy_dist(std::span<const double> gt, std::span<const double> pred) {
  if (gt.size() != kHours || pred.size() != kHours) {
    throw ShapeError("hourly accuracy needs two 24-vectors, got " + std::to_string(gt.size()) +
                     " and " + std::to_string(pred.size()));
  }
  double gt_sum = 0.0;
  for (double g : gt) gt_sum += g;
  if (std::abs(gt_sum - 1.0) > 1e-6) throw RangeError("ground-truth distribution does not sum to 1");
  double err = 0.0;
  for (std::size_t i = 0; i < kHours; ++i) err += std::abs(gt[i] - pred[i]);
  return 1.0 - err;
}

double median(std::vector<double> values) {
  if (values.empty()) return std::numeric_limits<double>::quiet_NaN();
  const std::size_t n = values.size();
  const std::size_t mid = n / 2;
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid), values.end());
  const double upper = values[mid];
  if (n % 2 == 1) return upper;
  const double lower = *std::max_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lower + upper);
}

std::vector<double> Scores::accuracies() const {
  std::vector<double> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(s.accuracy);
  return out;
}

std::vector<double> target_of(const DatasetRow& row, Target target) {
  if (target == Target::Total) return {row.demand.total_norm};
  return {row.demand.hourly.begin(), row.demand.hourly.end()};
}

bool has_target(const DatasetRow& row, Target target) {
  if (target == Target::Total) return true;
  return row.demand_defined;
}

Scores score(const Regressor& model, const Dataset& dataset) {
  Scores out;
  const Target target = model.target();
  for (std::size_t i = 0; i < dataset.rows.size(); ++i) {
    const DatasetRow& row = dataset.rows[i];
    if (!has_target(row, target) || (target == Target::Total && row.demand.total_norm == 0.0)) {
      ++out.excluded;
      continue;
    }
    SampleScore s;
    s.row = i;
    s.ground_truth = target_of(row, target);
    s.prediction = scored_prediction(model, row.env.to_vector());
    s.accuracy = target == Target::Total ? accuracy_total(s.ground_truth[0], s.prediction[0])
                                         : accuracy_dist(s.ground_truth, s.prediction);
    out.samples.push_back(std::move(s));
  }
  out.median_accuracy = median(out.accuracies());
  return out;
}

double median_accuracy(const Regressor& model, const Dataset& dataset) {
  return score(model, dataset).median_accuracy;
}

}  // namespace urbanflux
