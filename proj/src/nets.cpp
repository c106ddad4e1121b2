#include "urbanflux/nets.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "urbanflux/errors.hpp"
#include "urbanflux/json_io.hpp"
#include "urbanflux/rng.hpp"

namespace urbanflux {

namespace {

enum class Fn { Sigmoid, Tanh, Relu, Softmax };

Fn hidden_fn(Activation a) {
  switch (a) {
    case Activation::Tanh: return Fn::Tanh;
    case Activation::Relu: return Fn::Relu;
    default: return Fn::Sigmoid;
  }
}

Fn output_fn(Activation a) {
  switch (a) {
    case Activation::Tanh: return Fn::Tanh;
    case Activation::Relu: return Fn::Relu;
    case Activation::SoftmaxOutput: return Fn::Softmax;
    default: return Fn::Sigmoid;
  }
}

void apply(Fn fn, Eigen::MatrixXd& z) {
  switch (fn) {
    case Fn::Sigmoid:
      z = (1.0 + (-z.array()).exp()).inverse().matrix();
      break;
    case Fn::Tanh:
      z = z.array().tanh().matrix();
      break;
    case Fn::Relu:
      z = z.array().max(0.0).matrix();
      break;
    case Fn::Softmax:
      for (Eigen::Index c = 0; c < z.cols(); ++c) {
        auto col = z.col(c);
        const double m = col.maxCoeff();
        col = (col.array() - m).exp().matrix();
        col /= col.sum();
      }
      break;
  }
}

// f'(z) written in terms of a = f(z); not used for softmax.
Eigen::ArrayXXd derivative(Fn fn, const Eigen::MatrixXd& a) {
  switch (fn) {
    case Fn::Tanh: return 1.0 - a.array().square();
    case Fn::Relu: return (a.array() > 0.0).cast<double>();
    default: return a.array() * (1.0 - a.array());
  }
}

// Activations of every layer; acts[0] is the input.
std::vector<Eigen::MatrixXd> forward_all(const MlpModel& m, const Eigen::MatrixXd& inputs) {
  const auto& layers = m.layers();
  std::vector<Eigen::MatrixXd> acts;
  acts.reserve(layers.size() + 1);
  acts.push_back(inputs);
  for (std::size_t l = 0; l < layers.size(); ++l) {
    Eigen::MatrixXd z = layers[l].weights * acts.back();
    z.colwise() += layers[l].biases;
    apply(l + 1 == layers.size() ? output_fn(m.spec().activation) : hidden_fn(m.spec().activation), z);
    acts.push_back(std::move(z));
  }
  return acts;
}

void check_input_rows(const MlpModel& m, Eigen::Index rows) {
  if (static_cast<std::size_t>(rows) != m.spec().input_width) {
    throw ShapeError("model expects " + std::to_string(m.spec().input_width) + " inputs, got " +
                     std::to_string(rows));
  }
}

// Median accuracy computed from batch outputs; mirrors score().
double batch_median_accuracy(Target target, const Eigen::MatrixXd& outputs,
                             const Eigen::MatrixXd& targets) {
  std::vector<double> acc;
  acc.reserve(static_cast<std::size_t>(outputs.cols()));
  std::vector<double> gt(static_cast<std::size_t>(targets.rows()));
  std::vector<double> pred(static_cast<std::size_t>(outputs.rows()));
  for (Eigen::Index c = 0; c < outputs.cols(); ++c) {
    if (target == Target::Total) {
      const double g = targets(0, c);
      if (g == 0.0) continue;
      acc.push_back(accuracy_total(g, outputs(0, c)));
    } else {
      for (Eigen::Index r = 0; r < outputs.rows(); ++r) {
        gt[static_cast<std::size_t>(r)] = targets(r, c);
        pred[static_cast<std::size_t>(r)] = outputs(r, c);
      }
      acc.push_back(accuracy_dist(gt, renormalize(pred)));
    }
  }
  return median(std::move(acc));
}

}  // namespace

const char* to_string(Activation a) {
  switch (a) {
    case Activation::Sigmoid: return "sigmoid";
    case Activation::Tanh: return "tanh";
    case Activation::Relu: return "relu";
    case Activation::SoftmaxOutput: return "softmax_output";
  }
  return "sigmoid";
}

Activation activation_from_string(const std::string& s) {
  if (s == "sigmoid") return Activation::Sigmoid;
  if (s == "tanh") return Activation::Tanh;
  if (s == "relu") return Activation::Relu;
  if (s == "softmax_output" || s == "softmax") return Activation::SoftmaxOutput;
  throw ConfigError("unknown activation '" + s + "'");
}

const char* to_string(ModelKind k) { return k == ModelKind::T ? "T" : "D"; }

ModelKind model_kind_from_string(const std::string& s) {
  if (s == "T" || s == "t") return ModelKind::T;
  if (s == "D" || s == "d") return ModelKind::D;
  throw ConfigError("unknown model kind '" + s + "' (expected T or D)");
}

Target target_of(ModelKind k) { return k == ModelKind::T ? Target::Total : Target::Hourly; }

void MlpSpec::validate() const {
  if (input_width < 1 || output_width < 1) throw ConfigError("layer widths must be >= 1");
  for (auto w : hidden_widths) {
    if (w < 1) throw ConfigError("hidden widths must be >= 1");
  }
}

std::string MlpSpec::label() const {
  std::ostringstream os;
  os << input_width << '-';
  if (hidden_widths.empty()) {
    os << "0";
  } else if (std::all_of(hidden_widths.begin(), hidden_widths.end(),
                         [&](std::size_t w) { return w == hidden_widths.front(); })) {
    os << hidden_widths.front() << 'x' << hidden_widths.size();
  } else {
    for (std::size_t i = 0; i < hidden_widths.size(); ++i) os << (i ? "," : "") << hidden_widths[i];
  }
  os << '-' << output_width << ' ' << to_string(activation);
  return os.str();
}

MlpSpec MlpSpec::network_t() { return for_kind(ModelKind::T, 6, 36); }
MlpSpec MlpSpec::network_d() { return for_kind(ModelKind::D, 7, 82); }

MlpSpec MlpSpec::for_kind(ModelKind kind, std::size_t layers, std::size_t width) {
  MlpSpec s;
  s.hidden_widths.assign(layers, width);
  s.output_width = kind == ModelKind::T ? 1 : kHours;
  return s;
}

std::vector<std::size_t> parse_hidden(const std::string& s) {
  std::vector<std::size_t> out;
  const auto x = s.find('x');
  try {
    if (x != std::string::npos) {
      const auto layers = std::stoul(s.substr(0, x));
      const auto width = std::stoul(s.substr(x + 1));
      out.assign(layers, width);
    } else {
      std::stringstream ss(s);
      std::string tok;
      while (std::getline(ss, tok, ',')) out.push_back(std::stoul(tok));
    }
  } catch (const std::exception&) {
    throw UsageError("cannot parse hidden layer spec '" + s + "' (use e.g. 7x82 or 36,36)");
  }
  if (out.empty() || std::find(out.begin(), out.end(), 0u) != out.end()) {
    throw UsageError("hidden layer spec '" + s + "' has no layers or a zero width");
  }
  return out;
}

MlpModel::MlpModel(MlpSpec spec, ModelKind kind, NormalizationInfo norm)
    : spec_(std::move(spec)), kind_(kind), norm_(norm) {
  spec_.validate();
  std::size_t in = spec_.input_width;
  auto add = [&](std::size_t out) {
    layers_.push_back({Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(out), static_cast<Eigen::Index>(in)),
                       Eigen::VectorXd::Zero(static_cast<Eigen::Index>(out))});
    in = out;
  };
  for (auto w : spec_.hidden_widths) add(w);
  add(spec_.output_width);
}

std::vector<double> MlpModel::predict(const EnvVector& x) const { return forward(x); }

std::vector<double> MlpModel::forward(std::span<const double> x) const {
  check_input_rows(*this, static_cast<Eigen::Index>(x.size()));
  Eigen::MatrixXd in(static_cast<Eigen::Index>(x.size()), 1);
  for (std::size_t i = 0; i < x.size(); ++i) in(static_cast<Eigen::Index>(i), 0) = x[i];
  const Eigen::MatrixXd out = forward_batch(in);
  return {out.data(), out.data() + out.size()};
}

Eigen::MatrixXd MlpModel::forward_batch(const Eigen::MatrixXd& inputs) const {
  check_input_rows(*this, inputs.rows());
  return forward_all(*this, inputs).back();
}

std::size_t MlpModel::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers_) n += static_cast<std::size_t>(l.weights.size() + l.biases.size());
  return n;
}

double& MlpModel::parameter(std::size_t index) {
  for (auto& l : layers_) {
    const auto nw = static_cast<std::size_t>(l.weights.size());
    if (index < nw) {
      const auto cols = static_cast<std::size_t>(l.weights.cols());
      return l.weights(static_cast<Eigen::Index>(index / cols), static_cast<Eigen::Index>(index % cols));
    }
    index -= nw;
    const auto nb = static_cast<std::size_t>(l.biases.size());
    if (index < nb) return l.biases(static_cast<Eigen::Index>(index));
    index -= nb;
  }
  throw RangeError("parameter index out of range");
}

double MlpModel::parameter(std::size_t index) const {
  return const_cast<MlpModel*>(this)->parameter(index);
}

bool MlpModel::all_finite() const {
  return std::all_of(layers_.begin(), layers_.end(), [](const DenseLayer& l) {
    return l.weights.allFinite() && l.biases.allFinite();
  });
}

bool operator==(const MlpModel& a, const MlpModel& b) {
  if (!(a.spec_ == b.spec_) || a.kind_ != b.kind_ || !(a.norm_ == b.norm_) ||
      a.layers_.size() != b.layers_.size()) {
    return false;
  }
  for (std::size_t l = 0; l < a.layers_.size(); ++l) {
    if (a.layers_[l].weights != b.layers_[l].weights || a.layers_[l].biases != b.layers_[l].biases) {
      return false;
    }
  }
  return true;
}

MlpModel init_model(const MlpSpec& spec, ModelKind kind, const NormalizationInfo& norm,
                    std::uint64_t seed) {
  MlpModel m(spec, kind, norm);
  const Rng root(seed);
  for (std::size_t l = 0; l < m.layers().size(); ++l) {
    auto& w = m.layers()[l].weights;
    const double bound = std::sqrt(6.0 / static_cast<double>(w.rows() + w.cols()));
    Rng rng = root.stream(l);
    for (Eigen::Index r = 0; r < w.rows(); ++r) {
      for (Eigen::Index c = 0; c < w.cols(); ++c) w(r, c) = rng.uniform(-bound, bound);
    }
  }
  return m;
}

double loss_and_gradient(const MlpModel& model, const Eigen::MatrixXd& inputs,
                         const Eigen::MatrixXd& targets, std::vector<DenseLayer>& gradients) {
  check_input_rows(model, inputs.rows());
  const auto& layers = model.layers();
  if (targets.rows() != layers.back().weights.rows() || targets.cols() != inputs.cols()) {
    throw ShapeError("target matrix does not match model outputs");
  }
  const double n = static_cast<double>(inputs.cols());
  const auto acts = forward_all(model, inputs);
  const Eigen::MatrixXd diff = acts.back() - targets;
  const double loss = 0.5 * diff.squaredNorm() / n;

  Eigen::MatrixXd delta;
  const Fn out_fn = output_fn(model.spec().activation);
  if (out_fn == Fn::Softmax) {
    const Eigen::MatrixXd& y = acts.back();
    const Eigen::RowVectorXd s = (y.array() * diff.array()).colwise().sum();
    delta = (y.array() * (diff.rowwise() - s).array()).matrix() / n;
  } else {
    delta = (diff.array() * derivative(out_fn, acts.back())).matrix() / n;
  }

  gradients.resize(layers.size());
  const Fn hid = hidden_fn(model.spec().activation);
  for (std::size_t l = layers.size(); l-- > 0;) {
    gradients[l].weights.noalias() = delta * acts[l].transpose();
    gradients[l].biases = delta.rowwise().sum();
    if (l > 0) {
      Eigen::MatrixXd back = layers[l].weights.transpose() * delta;
      delta = (back.array() * derivative(hid, acts[l])).matrix();
    }
  }
  return loss;
}

double batch_loss(const MlpModel& model, const Eigen::MatrixXd& inputs,
                  const Eigen::MatrixXd& targets) {
  const Eigen::MatrixXd out = model.forward_batch(inputs);
  return 0.5 * (out - targets).squaredNorm() / static_cast<double>(inputs.cols());
}

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("epochs must be positive");
  if (batch_size < 1) throw ConfigError("batch size must be positive");
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw ConfigError("learning rate must be a non-negative number");
  }
  if (eval_every < 1) throw ConfigError("eval_every must be positive");
  if (optimizer == OptimizerKind::Adam) {
    if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) {
      throw ConfigError("adam betas must be in [0, 1)");
    }
    if (!(adam_epsilon > 0.0)) throw ConfigError("adam epsilon must be positive");
  }
}

const char* to_string(OptimizerKind k) { return k == OptimizerKind::Adam ? "adam" : "sgd"; }

OptimizerKind optimizer_from_string(const std::string& s) {
  if (s == "sgd") return OptimizerKind::Sgd;
  if (s == "adam") return OptimizerKind::Adam;
  throw ConfigError("unknown optimizer '" + s + "'");
}

namespace {

// First and second moment estimates, laid out like the layers.
struct AdamState {
  std::vector<DenseLayer> m;
  std::vector<DenseLayer> v;
  double steps = 0.0;

  void apply(std::vector<DenseLayer>& layers, const std::vector<DenseLayer>& grads, const TrainConfig& cfg) {
    if (m.empty()) {
      for (const auto& g : grads) {
        DenseLayer z{Eigen::MatrixXd::Zero(g.weights.rows(), g.weights.cols()), Eigen::VectorXd::Zero(g.biases.size())};
        m.push_back(z);
        v.push_back(z);
      }
    }
    steps += 1.0;
    const double b1 = cfg.adam_beta1, b2 = cfg.adam_beta2;
    const double c1 = 1.0 - std::pow(b1, steps), c2 = 1.0 - std::pow(b2, steps);
    const double lr = cfg.learning_rate;
    const double eps = cfg.adam_epsilon;
    auto update = [&](auto& param, auto& mm, auto& vv, const auto& g) {
      mm = b1 * mm + (1.0 - b1) * g;
      vv = b2 * vv + (1.0 - b2) * g.cwiseAbs2();
      param.array() -= lr * (mm.array() / c1) / ((vv.array() / c2).sqrt() + eps);
    };
    for (std::size_t l = 0; l < grads.size(); ++l) {
      update(layers[l].weights, m[l].weights, v[l].weights, grads[l].weights);
      update(layers[l].biases, m[l].biases, v[l].biases, grads[l].biases);
    }
  }
};

}  // namespace

void training_matrices(const Dataset& dataset, Target target, Eigen::MatrixXd& inputs,
                       Eigen::MatrixXd& targets) {
  std::vector<const DatasetRow*> rows;
  for (const auto& r : dataset.rows) {
    if (has_target(r, target)) rows.push_back(&r);
  }
  const auto n = static_cast<Eigen::Index>(rows.size());
  const Eigen::Index out = target == Target::Total ? 1 : static_cast<Eigen::Index>(kHours);
  inputs.resize(static_cast<Eigen::Index>(kEnvWidth), n);
  targets.resize(out, n);
  for (Eigen::Index c = 0; c < n; ++c) {
    const DatasetRow& r = *rows[static_cast<std::size_t>(c)];
    const EnvVector x = r.env.to_vector();
    for (std::size_t i = 0; i < kEnvWidth; ++i) inputs(static_cast<Eigen::Index>(i), c) = x[i];
    if (target == Target::Total) {
      targets(0, c) = r.demand.total_norm;
    } else {
      for (std::size_t h = 0; h < kHours; ++h) targets(static_cast<Eigen::Index>(h), c) = r.demand.hourly[h];
    }
  }
}

TrainResult train(MlpModel model, const Dataset& train_set, const TrainConfig& cfg,
                  const Dataset* heldout) {
  cfg.validate();
  const Target target = model.target();
  Eigen::MatrixXd x;
  Eigen::MatrixXd y;
  training_matrices(train_set, target, x, y);
  if (x.cols() == 0) throw EmptyDataset("training set has no usable samples");
  Eigen::MatrixXd hx;
  Eigen::MatrixXd hy;
  if (heldout) training_matrices(*heldout, target, hx, hy);

  const auto n = static_cast<std::size_t>(x.cols());
  std::vector<Eigen::Index> order(n);
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  Rng rng(cfg.seed);
  std::vector<DenseLayer> grads;
  Eigen::MatrixXd bx;
  Eigen::MatrixXd by;
  AdamState adam;

  TrainResult result;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    if (cfg.shuffle) rng.shuffle(std::span<Eigen::Index>(order));
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < n; start += cfg.batch_size) {
      const std::size_t end = std::min(n, start + cfg.batch_size);
      const std::vector<Eigen::Index> idx(order.begin() + static_cast<std::ptrdiff_t>(start),
                                          order.begin() + static_cast<std::ptrdiff_t>(end));
      bx = x(Eigen::all, idx);
      by = y(Eigen::all, idx);
      const double loss = loss_and_gradient(model, bx, by, grads);
      if (!std::isfinite(loss)) {
        throw DivergenceError("loss became non-finite in epoch " + std::to_string(epoch));
      }
      loss_sum += loss * static_cast<double>(end - start);
      if (cfg.optimizer == OptimizerKind::Adam) {
        adam.apply(model.layers(), grads, cfg);
        continue;
      }
      for (std::size_t l = 0; l < grads.size(); ++l) {
        model.layers()[l].weights.noalias() -= cfg.learning_rate * grads[l].weights;
        model.layers()[l].biases.noalias() -= cfg.learning_rate * grads[l].biases;
      }
    }
    if (!model.all_finite()) {
      throw DivergenceError("parameters became non-finite in epoch " + std::to_string(epoch));
    }
    if (epoch % cfg.eval_every != 0 && epoch != cfg.epochs) continue;

    EpochRecord rec;
    rec.epoch = epoch;
    rec.loss = loss_sum / static_cast<double>(n);
    const Eigen::MatrixXd out = model.forward_batch(x);
    rec.mse = (out - y).squaredNorm() / static_cast<double>(out.size());
    rec.train_error = 1.0 - batch_median_accuracy(target, out, y);
    rec.heldout_error = std::numeric_limits<double>::quiet_NaN();
    if (heldout && hx.cols() > 0) {
      rec.heldout_error = 1.0 - batch_median_accuracy(target, model.forward_batch(hx), hy);
    }
    result.history.epochs.push_back(rec);
  }
  result.model = std::move(model);
  return result;
}

HybridPrediction predict_hybrid(const Regressor& total_model, const Regressor& hourly_model,
                                const EnvFeatures& env) {
  if (total_model.target() != Target::Total || hourly_model.target() != Target::Hourly) {
    throw ShapeError("hybrid prediction needs a total model and an hourly model");
  }
  if (!(total_model.norm_info() == hourly_model.norm_info())) {
    throw NormMismatch("total and hourly models were trained with different normalization");
  }
  const EnvVector x = env.to_vector();
  HybridPrediction p;
  p.total_vht = denormalize_total(total_model.predict(x).at(0), total_model.norm_info());
  const auto shares = renormalize(hourly_model.predict(x));
  for (std::size_t h = 0; h < kHours; ++h) {
    p.proportions[h] = shares[h];
    p.hourly_vht[h] = p.total_vht * shares[h];
  }
  return p;
}

std::vector<std::vector<std::size_t>> kfold_partition(std::size_t n, std::size_t k,
                                                      std::uint64_t seed) {
  if (k < 2) throw ConfigError("k-fold needs k >= 2");
  if (n < k) throw ConfigError("k-fold needs at least k samples");
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  Rng rng(seed);
  rng.shuffle(std::span<std::size_t>(perm));
  std::vector<std::vector<std::size_t>> folds(k);
  std::size_t pos = 0;
  for (std::size_t f = 0; f < k; ++f) {
    const std::size_t size = n / k + (f < n % k ? 1 : 0);
    folds[f].assign(perm.begin() + static_cast<std::ptrdiff_t>(pos),
                    perm.begin() + static_cast<std::ptrdiff_t>(pos + size));
    std::sort(folds[f].begin(), folds[f].end());
    pos += size;
  }
  return folds;
}

CvCandidate mlp_candidate(const MlpSpec& spec, ModelKind kind, const TrainConfig& cfg) {
  CvCandidate c;
  c.label = "ann " + spec.label();
  c.target = target_of(kind);
  c.fit = [spec, kind, cfg](const Dataset& train_set, const Dataset* heldout,
                            TrainHistory* history) -> std::unique_ptr<Regressor> {
    TrainConfig run = cfg;
    if (!history) run.eval_every = cfg.epochs;
    auto res = train(init_model(spec, kind, train_set.norm, cfg.seed), train_set, run, heldout);
    if (history) *history = std::move(res.history);
    return std::make_unique<MlpModel>(std::move(res.model));
  };
  return c;
}

std::vector<CvRow> kfold_cv(const Dataset& dataset, std::size_t k,
                            std::span<const CvCandidate> candidates, std::uint64_t seed) {
  const auto folds = kfold_partition(dataset.size(), k, seed);
  std::vector<CvRow> rows;
  for (const auto& cand : candidates) {
    CvRow row;
    row.label = cand.label;
    row.target = cand.target;
    std::vector<double> pooled;
    for (std::size_t f = 0; f < k; ++f) {
      std::vector<std::size_t> train_idx;
      for (std::size_t g = 0; g < k; ++g) {
        if (g != f) train_idx.insert(train_idx.end(), folds[g].begin(), folds[g].end());
      }
      std::sort(train_idx.begin(), train_idx.end());
      const Dataset train_set = dataset.subset(train_idx);
      const Dataset test_set = dataset.subset(folds[f]);
      const auto model = cand.fit(train_set, nullptr, nullptr);
      const Scores s = score(*model, test_set);
      row.fold_medians.push_back(s.median_accuracy);
      const auto acc = s.accuracies();
      pooled.insert(pooled.end(), acc.begin(), acc.end());
    }
    row.median_accuracy = median(std::move(pooled));
    rows.push_back(std::move(row));
  }
  return rows;
}

void save_model(const std::filesystem::path& path, const MlpModel& model) {
  Json j;
  j["format_version"] = kModelFormatVersion;
  j["kind"] = to_string(model.kind());
  j["target"] = to_string(model.target());
  j["spec"] = {{"input_width", model.spec().input_width},
               {"hidden_widths", model.spec().hidden_widths},
               {"output_width", model.spec().output_width},
               {"activation", to_string(model.spec().activation)}};
  Json layers = Json::array();
  for (const auto& l : model.layers()) {
    Json w = Json::array();
    for (Eigen::Index r = 0; r < l.weights.rows(); ++r) {
      Json row = Json::array();
      for (Eigen::Index c = 0; c < l.weights.cols(); ++c) row.push_back(l.weights(r, c));
      w.push_back(std::move(row));
    }
    layers.push_back({{"weights", std::move(w)},
                      {"biases", std::vector<double>(l.biases.data(), l.biases.data() + l.biases.size())}});
  }
  j["layers"] = std::move(layers);
  j["norm_info"] = model.norm_info();
  j["provenance"] = model.provenance;
  write_json_file(path, j);
}

MlpModel load_mlp(const std::filesystem::path& path) {
  const Json j = read_json_file(path);
  const std::string ctx = "model " + path.string();
  const int version = require<int>(j, "format_version", ctx);
  if (version != kModelFormatVersion) {
    throw ConfigError(ctx + ": unsupported format_version " + std::to_string(version));
  }
  const ModelKind kind = model_kind_from_string(require<std::string>(j, "kind", ctx));
  const Json& js = j.at("spec");
  MlpSpec spec;
  spec.input_width = require<std::size_t>(js, "input_width", ctx);
  spec.hidden_widths = require<std::vector<std::size_t>>(js, "hidden_widths", ctx);
  spec.output_width = require<std::size_t>(js, "output_width", ctx);
  spec.activation = activation_from_string(require<std::string>(js, "activation", ctx));
  MlpModel m(spec, kind, require<NormalizationInfo>(j, "norm_info", ctx));
  if (j.contains("provenance")) m.provenance = j.at("provenance").get<Provenance>();
  const Json& layers = j.at("layers");
  if (layers.size() != m.layers().size()) throw ShapeError(ctx + ": layer count does not match spec");
  for (std::size_t l = 0; l < m.layers().size(); ++l) {
    auto& dst = m.layers()[l];
    const auto w = layers[l].at("weights").get<std::vector<std::vector<double>>>();
    const auto b = layers[l].at("biases").get<std::vector<double>>();
    if (w.size() != static_cast<std::size_t>(dst.weights.rows()) ||
        b.size() != static_cast<std::size_t>(dst.biases.size())) {
      throw ShapeError(ctx + ": layer " + std::to_string(l) + " has the wrong shape");
    }
    for (std::size_t r = 0; r < w.size(); ++r) {
      if (w[r].size() != static_cast<std::size_t>(dst.weights.cols())) {
        throw ShapeError(ctx + ": layer " + std::to_string(l) + " has the wrong shape");
      }
      for (std::size_t c = 0; c < w[r].size(); ++c) {
        dst.weights(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = w[r][c];
      }
    }
    for (std::size_t i = 0; i < b.size(); ++i) dst.biases(static_cast<Eigen::Index>(i)) = b[i];
  }
  if (!m.all_finite()) throw RangeError(ctx + ": non-finite parameters");
  return m;
}

}  // namespace urbanflux
