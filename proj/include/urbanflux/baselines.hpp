#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "urbanflux/features.hpp"
#include "urbanflux/regressor.hpp"

namespace urbanflux {

struct ForestConfig {
  std::size_t n_trees = 100;
  std::size_t max_depth = 5;  ///< 0 means unlimited
  std::size_t min_leaf = 5;
  double feature_subsample = 1.0 / 3.0;
  bool bootstrap = true;
  std::uint64_t seed = 0;
  unsigned threads = 1;

  void validate() const;
};

/// Flat regression tree. A node with feature < 0 is a leaf holding `value`;
/// otherwise rows with x[feature] <= threshold go to `left`.
struct TreeNode {
  int feature = -1;
  double threshold = 0.0;
  std::int32_t left = -1;
  std::int32_t right = -1;
  double value = 0.0;
};

struct RegressionTree {
  std::vector<TreeNode> nodes;

  double predict(const EnvVector& x) const;
  std::size_t depth() const;
};

/// Fits one CART tree on rows `sample` of (xs, ys) with variance-reduction
/// splits. Exposed for tests; forests call it once per tree.
RegressionTree fit_tree(std::span<const EnvVector> xs, std::span<const double> ys,
                        std::span<const std::size_t> sample, const ForestConfig& cfg,
                        std::uint64_t seed);

class ForestModel final : public Regressor {
 public:
  ForestModel() = default;
  ForestModel(Target target, NormalizationInfo norm, ForestConfig cfg);

  Target target() const override { return target_; }
  std::string algorithm() const override { return "rf"; }
  const NormalizationInfo& norm_info() const override { return norm_; }
  std::vector<double> predict(const EnvVector& x) const override;

  const ForestConfig& config() const { return cfg_; }
  /// One ensemble per output dimension.
  std::vector<std::vector<RegressionTree>>& outputs() { return outputs_; }
  const std::vector<std::vector<RegressionTree>>& outputs() const { return outputs_; }

  Provenance provenance;

 private:
  Target target_ = Target::Total;
  NormalizationInfo norm_;
  ForestConfig cfg_;
  std::vector<std::vector<RegressionTree>> outputs_;
};

ForestModel train_forest(const Dataset& dataset, Target target, const ForestConfig& cfg);

struct SvrConfig {
  double epsilon = 0.01;
  double c_penalty = 1.0;
  double learning_rate = 0.05;
  std::size_t epochs = 300;
  std::size_t batch_size = 0;  ///< 0 means full batch
  /// Step size lr / sqrt(1 + epoch) instead of a fixed lr.
  bool decay = true;
  std::uint64_t seed = 0;

  void validate() const;
};

class SvrModel final : public Regressor {
 public:
  SvrModel() = default;
  SvrModel(Target target, NormalizationInfo norm, SvrConfig cfg);

  Target target() const override { return target_; }
  std::string algorithm() const override { return "svr"; }
  const NormalizationInfo& norm_info() const override { return norm_; }
  std::vector<double> predict(const EnvVector& x) const override;

  const SvrConfig& config() const { return cfg_; }
  /// Per output dimension: kEnvWidth weights then the intercept.
  std::vector<std::vector<double>>& coefficients() { return coef_; }
  const std::vector<std::vector<double>>& coefficients() const { return coef_; }
  /// Objective after each epoch, summed over output dimensions.
  std::vector<double> objective_history;

  Provenance provenance;

 private:
  Target target_ = Target::Total;
  NormalizationInfo norm_;
  SvrConfig cfg_;
  std::vector<std::vector<double>> coef_;
};

/// lambda/2 |w|^2 + mean max(0, |y - w.x - b| - eps), lambda = 1 / (C n).
double svr_objective(std::span<const EnvVector> xs, std::span<const double> ys,
                     std::span<const double> coef, const SvrConfig& cfg);

/// Fits one output dimension starting from `coef` (kEnvWidth + 1 values).
/// Appends the objective after each epoch to `history` when non-null.
void fit_svr_dim(std::span<const EnvVector> xs, std::span<const double> ys, std::vector<double>& coef,
                 const SvrConfig& cfg, std::uint64_t seed, std::vector<double>* history);

SvrModel train_svr(const Dataset& dataset, Target target, const SvrConfig& cfg);

/// Inputs and per-dimension targets of the rows that carry `target`.
void regression_columns(const Dataset& dataset, Target target, std::vector<EnvVector>& xs,
                        std::vector<std::vector<double>>& ys);

}  // namespace urbanflux
