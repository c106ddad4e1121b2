#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "urbanflux/features.hpp"
#include "urbanflux/regressor.hpp"

namespace urbanflux {

/// Sigmoid, Tanh and Relu apply at every layer including the output.
/// SoftmaxOutput uses sigmoid hidden layers and a softmax output layer.
enum class Activation { Sigmoid, Tanh, Relu, SoftmaxOutput };

const char* to_string(Activation a);
Activation activation_from_string(const std::string& s);

/// Network T predicts the normalized daily total, network D the hourly shares.
enum class ModelKind { T, D };

const char* to_string(ModelKind k);
ModelKind model_kind_from_string(const std::string& s);
Target target_of(ModelKind k);

struct MlpSpec {
  std::size_t input_width = kEnvWidth;
  std::vector<std::size_t> hidden_widths;
  std::size_t output_width = 1;
  Activation activation = Activation::Sigmoid;

  void validate() const;
  /// e.g. "17-36x6-1 sigmoid"
  std::string label() const;

  /// Six hidden layers of 36, one output.
  static MlpSpec network_t();
  /// Seven hidden layers of 82, 24 outputs.
  static MlpSpec network_d();
  /// `layers` hidden layers of `width` for the given kind.
  static MlpSpec for_kind(ModelKind kind, std::size_t layers, std::size_t width);

  friend bool operator==(const MlpSpec&, const MlpSpec&) = default;
};

/// Parses "7x82" or "36,36,36" into hidden widths.
std::vector<std::size_t> parse_hidden(const std::string& s);

struct DenseLayer {
  Eigen::MatrixXd weights;  ///< out x in
  Eigen::VectorXd biases;   ///< out
};

class MlpModel final : public Regressor {
 public:
  MlpModel() = default;
  MlpModel(MlpSpec spec, ModelKind kind, NormalizationInfo norm);

  const MlpSpec& spec() const { return spec_; }
  ModelKind kind() const { return kind_; }
  std::vector<DenseLayer>& layers() { return layers_; }
  const std::vector<DenseLayer>& layers() const { return layers_; }

  Target target() const override { return target_of(kind_); }
  std::string algorithm() const override { return "ann"; }
  const NormalizationInfo& norm_info() const override { return norm_; }
  void set_norm_info(const NormalizationInfo& n) { norm_ = n; }

  std::vector<double> predict(const EnvVector& x) const override;

  /// Forward pass on any input width; ShapeError on mismatch.
  std::vector<double> forward(std::span<const double> x) const;
  /// Column-per-sample batch forward pass: in x n -> out x n.
  Eigen::MatrixXd forward_batch(const Eigen::MatrixXd& inputs) const;

  std::size_t parameter_count() const;
  /// Flat view over all parameters: per layer, weights (row-major) then biases.
  double& parameter(std::size_t index);
  double parameter(std::size_t index) const;

  bool all_finite() const;

  Provenance provenance;

  friend bool operator==(const MlpModel& a, const MlpModel& b);

 private:
  MlpSpec spec_;
  ModelKind kind_ = ModelKind::T;
  NormalizationInfo norm_;
  std::vector<DenseLayer> layers_;
};

/// Glorot-uniform weights (bound sqrt(6 / (fan_in + fan_out))), zero
/// biases. Bit-identical for equal (spec, seed).
MlpModel init_model(const MlpSpec& spec, ModelKind kind, const NormalizationInfo& norm,
                    std::uint64_t seed);

/// Objective: mean over the batch of 0.5 * ||output - target||^2.
/// `inputs` is in x n, `targets` out x n. Gradients share the layer layout.
double loss_and_gradient(const MlpModel& model, const Eigen::MatrixXd& inputs,
                         const Eigen::MatrixXd& targets, std::vector<DenseLayer>& gradients);

double batch_loss(const MlpModel& model, const Eigen::MatrixXd& inputs,
                  const Eigen::MatrixXd& targets);

enum class OptimizerKind { Sgd, Adam };

const char* to_string(OptimizerKind k);
OptimizerKind optimizer_from_string(const std::string& s);

struct TrainConfig {
  std::size_t epochs = 1000;
  std::size_t batch_size = 100;
  double learning_rate = 0.1;
  std::uint64_t seed = 0;
  bool shuffle = true;
  /// Evaluate median accuracies every this many epochs (1 = every epoch).
  std::size_t eval_every = 1;
  /// Plain minibatch SGD unless Adam is requested.
  OptimizerKind optimizer = OptimizerKind::Sgd;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;

  void validate() const;
};

struct EpochRecord {
  std::size_t epoch = 0;          ///< 1-based
  double loss = 0.0;              ///< objective averaged over the epoch's batches
  double mse = 0.0;               ///< mean squared error per output on the training set
  double train_error = 0.0;       ///< 1 - median accuracy on the training set
  double heldout_error = 0.0;     ///< 1 - median accuracy on the held-out set (NaN if none)
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
};

struct TrainResult {
  MlpModel model;
  TrainHistory history;
};

/// Design matrix (17 x n) and targets (1 x n or 24 x n) of the rows that
/// carry a target for `target`.
void training_matrices(const Dataset& dataset, Target target, Eigen::MatrixXd& inputs,
                       Eigen::MatrixXd& targets);

/// Minibatch gradient descent (SGD or Adam) on the objective above. Throws
/// DivergenceError when the loss stops being finite.
TrainResult train(MlpModel model, const Dataset& train_set, const TrainConfig& cfg,
                  const Dataset* heldout = nullptr);

struct HybridPrediction {
  double total_vht = 0.0;      ///< hours per day
  HourlyVector hourly_vht{};   ///< hours per day and pickup hour
  HourlyVector proportions{};  ///< shares summing to 1
};

/// Composes a total model and an hourly model. NormMismatch when their
/// normalization constants differ.
HybridPrediction predict_hybrid(const Regressor& total_model, const Regressor& hourly_model,
                                const EnvFeatures& env);

// --- cross-validation -----------------------------------------------------

/// Seeded partition of 0..n-1 into k folds whose sizes differ by at most one
/// (the first n % k folds are the larger ones).
std::vector<std::vector<std::size_t>> kfold_partition(std::size_t n, std::size_t k,
                                                      std::uint64_t seed);

struct CvCandidate {
  std::string label;
  Target target = Target::Total;
  /// Fits on `train`. When `history` is non-null an iterative learner
  /// records its per-epoch errors there, evaluated on `heldout` if given.
  std::function<std::unique_ptr<Regressor>(const Dataset& train, const Dataset* heldout,
                                           TrainHistory* history)>
      fit;
};

CvCandidate mlp_candidate(const MlpSpec& spec, ModelKind kind, const TrainConfig& cfg);

struct CvRow {
  std::string label;
  Target target = Target::Total;
  std::vector<double> fold_medians;
  /// Median over the pooled out-of-fold per-sample accuracies.
  double median_accuracy = 0.0;
};

/// Every candidate sees the same seeded partition.
std::vector<CvRow> kfold_cv(const Dataset& dataset, std::size_t k,
                            std::span<const CvCandidate> candidates, std::uint64_t seed);

// --- model files ----------------------------------------------------------

inline constexpr int kModelFormatVersion = 1;

void save_model(const std::filesystem::path& path, const MlpModel& model);
MlpModel load_mlp(const std::filesystem::path& path);

}  // namespace urbanflux
