#include <doctest.h>

#include <chrono>
#include <cmath>
#include <numeric>
#include <set>

#include "helpers.hpp"
#include "urbanflux/errors.hpp"
#include "urbanflux/nets.hpp"

using namespace urbanflux;
using testutil::TempDir;

namespace {

std::vector<double> flat_gradient(const std::vector<DenseLayer>& g) {
  std::vector<double> out;
  for (const auto& l : g) {
    for (Eigen::Index i = 0; i < l.weights.rows(); ++i) {
      for (Eigen::Index j = 0; j < l.weights.cols(); ++j) out.push_back(l.weights(i, j));
    }
    for (Eigen::Index i = 0; i < l.biases.size(); ++i) out.push_back(l.biases(i));
  }
  return out;
}

// Sign pattern of every pre-activation; differences mark a ReLU kink.
std::vector<bool> preactivation_signs(const MlpModel& m, const Eigen::MatrixXd& x) {
  std::vector<bool> signs;
  Eigen::MatrixXd a = x;
  for (const auto& l : m.layers()) {
    Eigen::MatrixXd z = l.weights * a;
    z.colwise() += l.biases;
    for (Eigen::Index i = 0; i < z.size(); ++i) signs.push_back(z.data()[i] > 0.0);
    a = z.array().max(0.0).matrix();
  }
  return signs;
}

// Worst relative error between backprop and central differences over all
// parameters whose gradient is not negligible. For ReLU, parameters whose
// perturbation crosses a kink are skipped.
double worst_fd_error(Activation act, std::uint64_t seed) {
  MlpSpec spec;
  spec.hidden_widths = {5};
  spec.output_width = 24;
  spec.activation = act;
  MlpModel m = init_model(spec, ModelKind::D, NormalizationInfo{}, seed);
  Rng rng(seed + 100);
  const int n = 6;
  Eigen::MatrixXd x(17, n);
  Eigen::MatrixXd y(24, n);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.uniform();
  for (Eigen::Index i = 0; i < y.size(); ++i) y.data()[i] = rng.uniform();
  std::vector<DenseLayer> g;
  loss_and_gradient(m, x, y, g);
  const auto grad = flat_gradient(g);
  REQUIRE(grad.size() == m.parameter_count());
  double worst = 0.0;
  const double eps = 1e-5;
  for (std::size_t p = 0; p < m.parameter_count(); ++p) {
    const double orig = m.parameter(p);
    const auto signs = act == Activation::Relu ? preactivation_signs(m, x) : std::vector<bool>{};
    m.parameter(p) = orig + eps;
    const double up = batch_loss(m, x, y);
    const bool kink_up = act == Activation::Relu && preactivation_signs(m, x) != signs;
    m.parameter(p) = orig - eps;
    const double down = batch_loss(m, x, y);
    const bool kink_down = act == Activation::Relu && preactivation_signs(m, x) != signs;
    m.parameter(p) = orig;
    if (kink_up || kink_down) continue;
    const double fd = (up - down) / (2.0 * eps);
    const double scale = std::abs(fd) + std::abs(grad[p]);
    if (scale < 1e-7) continue;
    worst = std::max(worst, std::abs(fd - grad[p]) / scale);
  }
  return worst;
}

}  // namespace

TEST_SUITE("nets") {
  TEST_CASE("init is deterministic with Glorot bounds") {
    MlpSpec spec;
    spec.hidden_widths = {36};
    const MlpModel a = init_model(spec, ModelKind::T, NormalizationInfo{}, 4);
    const MlpModel b = init_model(spec, ModelKind::T, NormalizationInfo{}, 4);
    CHECK(a == b);
    REQUIRE(a.layers().size() == 2);
    CHECK(a.layers()[0].weights.rows() == 36);
    CHECK(a.layers()[0].weights.cols() == 17);
    CHECK(a.layers()[1].weights.rows() == 1);
    CHECK(a.layers()[1].weights.cols() == 36);
    CHECK(a.layers()[0].weights.cwiseAbs().maxCoeff() <= std::sqrt(6.0 / 53.0));
    CHECK(std::sqrt(6.0 / 53.0) == doctest::Approx(0.3365).epsilon(1e-4));
    CHECK(a.layers()[0].biases.isZero(0.0));
    const MlpModel c = init_model(spec, ModelKind::T, NormalizationInfo{}, 5);
    CHECK_FALSE(a == c);
  }

  TEST_CASE("standard specs") {
    const MlpSpec t = MlpSpec::network_t();
    const MlpSpec d = MlpSpec::network_d();
    CHECK(t.hidden_widths == std::vector<std::size_t>(6, 36));
    CHECK(t.output_width == 1);
    CHECK(d.hidden_widths == std::vector<std::size_t>(7, 82));
    CHECK(d.output_width == 24);
    CHECK(t.label() == "17-36x6-1 sigmoid");
    CHECK(parse_hidden("7x82") == std::vector<std::size_t>(7, 82));
    CHECK(parse_hidden("36,12") == std::vector<std::size_t>{36, 12});
    CHECK_THROWS(parse_hidden("7x"));
  }

  TEST_CASE("forward pass") {
    MlpSpec spec = MlpSpec::for_kind(ModelKind::D, 2, 8);
    MlpModel zero(spec, ModelKind::D, NormalizationInfo{});
    for (auto& l : zero.layers()) {
      l.weights.setZero();
      l.biases.setZero();
    }
    EnvVector x{};
    x.fill(0.3);
    const auto out = zero.predict(x);
    REQUIRE(out.size() == 24);
    for (double v : out) CHECK(v == 0.5);
    const MlpModel m = init_model(spec, ModelKind::D, NormalizationInfo{}, 1);
    Rng rng(2);
    for (int i = 0; i < 50; ++i) {
      for (auto& v : x) v = rng.uniform();
      for (double v : m.predict(x)) {
        CHECK(v > 0.0);
        CHECK(v < 1.0);
      }
    }
    const std::vector<double> wrong(16, 0.1);
    CHECK_THROWS_AS(m.forward(wrong), ShapeError);
    CHECK(init_model(MlpSpec::network_t(), ModelKind::T, NormalizationInfo{}, 1).predict(x).size() == 1);
  }

  TEST_CASE("backprop matches finite differences for every activation") {
    for (Activation act : {Activation::Sigmoid, Activation::Tanh, Activation::Relu, Activation::SoftmaxOutput}) {
      const std::string name = to_string(act);
      CAPTURE(name);
      CHECK(worst_fd_error(act, 3) < 1e-4);
    }
  }

  TEST_CASE("zero learning rate leaves parameters unchanged") {
    const Dataset ds = testutil::random_dataset(1, 3);
    const MlpModel m = init_model(MlpSpec::for_kind(ModelKind::T, 2, 4), ModelKind::T, ds.norm, 2);
    TrainConfig cfg;
    cfg.epochs = 1;
    cfg.learning_rate = 0.0;
    const TrainResult r = train(m, ds, cfg);
    CHECK(r.model == m);
    CHECK(r.history.epochs.size() == 1);
  }

  TEST_CASE("one full batch epoch equals one gradient step") {
    const Dataset ds = testutil::random_dataset(40, 5);
    const MlpModel m = init_model(MlpSpec::for_kind(ModelKind::D, 2, 6), ModelKind::D, ds.norm, 9);
    TrainConfig cfg;
    cfg.epochs = 1;
    cfg.batch_size = ds.size();
    cfg.learning_rate = 0.3;
    cfg.shuffle = false;
    const TrainResult r = train(m, ds, cfg);
    Eigen::MatrixXd x;
    Eigen::MatrixXd y;
    training_matrices(ds, Target::Hourly, x, y);
    std::vector<DenseLayer> g;
    loss_and_gradient(m, x, y, g);
    MlpModel manual = m;
    for (std::size_t l = 0; l < g.size(); ++l) {
      manual.layers()[l].weights -= 0.3 * g[l].weights;
      manual.layers()[l].biases -= 0.3 * g[l].biases;
    }
    for (std::size_t p = 0; p < m.parameter_count(); ++p) {
      CHECK(std::abs(r.model.parameter(p) - manual.parameter(p)) <= 1e-12);
    }
  }

  TEST_CASE("training is reproducible and records history") {
    const Dataset ds = testutil::random_dataset(60, 8);
    const Dataset held = testutil::random_dataset(20, 9);
    for (OptimizerKind opt : {OptimizerKind::Sgd, OptimizerKind::Adam}) {
      const MlpModel m = init_model(MlpSpec::for_kind(ModelKind::T, 2, 8), ModelKind::T, ds.norm, 1);
      TrainConfig cfg;
      cfg.epochs = 20;
      cfg.batch_size = 16;
      cfg.seed = 4;
      cfg.optimizer = opt;
      cfg.learning_rate = opt == OptimizerKind::Adam ? 1e-3 : 0.1;
      const TrainResult a = train(m, ds, cfg, &held);
      const TrainResult b = train(m, ds, cfg, &held);
      CHECK(a.model == b.model);
      REQUIRE(a.history.epochs.size() == 20);
      for (std::size_t e = 0; e < 20; ++e) {
        CHECK(a.history.epochs[e].epoch == e + 1);
        CHECK(a.history.epochs[e].loss == b.history.epochs[e].loss);
        CHECK(a.history.epochs[e].heldout_error == b.history.epochs[e].heldout_error);
        CHECK(std::isfinite(a.history.epochs[e].heldout_error));
      }
      CHECK_FALSE(a.model == m);
    }
  }

  TEST_CASE("divergence is reported") {
    const Dataset ds = testutil::random_dataset(30, 2);
    MlpSpec spec = MlpSpec::for_kind(ModelKind::T, 1, 4);
    spec.activation = Activation::Relu;
    const MlpModel m = init_model(spec, ModelKind::T, ds.norm, 1);
    TrainConfig cfg;
    cfg.epochs = 50;
    cfg.learning_rate = 1e200;
    CHECK_THROWS_AS(train(m, ds, cfg), DivergenceError);
  }

  TEST_CASE("total accuracy") {
    CHECK(accuracy_total(100.0, 100.0) == 1.0);
    CHECK(accuracy_total(100.0, 85.0) == doctest::Approx(0.85).epsilon(1e-15));
    CHECK(accuracy_total(1.0, 3.7832) < 0.0);
    CHECK(accuracy_total(1.0, 3.7832) == doctest::Approx(-1.7832));
    CHECK_THROWS_AS(accuracy_total(0.0, 1.0), ZeroGroundTruth);
  }

  TEST_CASE("distribution accuracy") {
    std::vector<double> uniform(24, 1.0 / 24.0);
    std::vector<double> e0(24, 0.0);
    e0[0] = 1.0;
    CHECK(accuracy_dist(e0, e0) == 1.0);
    CHECK(accuracy_dist(uniform, uniform) == 1.0);
    CHECK(std::abs(accuracy_dist(e0, uniform) - (-11.0 / 12.0)) <= 1e-12);
    CHECK_THROWS_AS(accuracy_dist(std::vector<double>(23, 1.0 / 23), std::vector<double>(23, 0.0)), ShapeError);
    std::vector<double> bad(24, 0.05);
    CHECK_THROWS_AS(accuracy_dist(bad, uniform), RangeError);
    Rng rng(7);
    for (int t = 0; t < 100; ++t) {
      std::vector<double> a(24);
      for (auto& v : a) v = rng.uniform();
      a = renormalize(a);
      std::vector<double> b(24);
      for (auto& v : b) v = rng.uniform();
      CHECK(accuracy_dist(a, renormalize(b)) < 1.0);
    }
  }

  TEST_CASE("median rule") {
    CHECK(median({0.9, 0.8, 0.7}) == doctest::Approx(0.8));
    CHECK(median({0.9, 0.7}) == doctest::Approx(0.8));
    CHECK(std::isnan(median({})));
  }

  TEST_CASE("renormalized outputs are distributions") {
    const auto r = renormalize(std::vector<double>(24, 0.37));
    for (double v : r) CHECK(v == doctest::Approx(1.0 / 24.0));
    Rng rng(1);
    for (int t = 0; t < 50; ++t) {
      std::vector<double> v(24);
      for (auto& x : v) x = rng.uniform(-0.2, 1.0);
      const auto p = renormalize(v);
      double s = 0.0;
      for (double x : p) {
        CHECK(x >= 0.0);
        s += x;
      }
      CHECK(std::abs(s - 1.0) <= 1e-9);
    }
  }

  TEST_CASE("k-fold partition") {
    const auto folds = kfold_partition(898, 5, 3);
    REQUIRE(folds.size() == 5);
    std::vector<std::size_t> sizes;
    std::set<std::size_t> all;
    for (const auto& f : folds) {
      sizes.push_back(f.size());
      all.insert(f.begin(), f.end());
    }
    CHECK(sizes == std::vector<std::size_t>{180, 180, 180, 179, 179});
    CHECK(all.size() == 898);
    CHECK(*all.rbegin() == 897);
    CHECK(kfold_partition(898, 5, 3) == folds);
    CHECK_THROWS_AS(kfold_partition(3, 5, 1), ConfigError);
  }

  TEST_CASE("cross-validation pools out-of-fold scores") {
    const Dataset ds = testutil::random_dataset(50, 4);
    TrainConfig cfg;
    cfg.epochs = 5;
    const std::vector<CvCandidate> cands{mlp_candidate(MlpSpec::for_kind(ModelKind::T, 2, 4), ModelKind::T, cfg),
                                         mlp_candidate(MlpSpec::for_kind(ModelKind::D, 2, 4), ModelKind::D, cfg)};
    const auto rows = kfold_cv(ds, 5, cands, 1);
    REQUIRE(rows.size() == 2);
    CHECK(rows[0].fold_medians.size() == 5);
    CHECK(rows[1].target == Target::Hourly);
    CHECK(std::isfinite(rows[0].median_accuracy));
  }

  TEST_CASE("hybrid prediction") {
    const NormalizationInfo norm{100.0, 50.0, 30};
    MlpModel t = init_model(MlpSpec::for_kind(ModelKind::T, 2, 8), ModelKind::T, norm, 1);
    MlpModel d = init_model(MlpSpec::for_kind(ModelKind::D, 2, 8), ModelKind::D, norm, 2);
    PoiCounts counts{88, 19, 10, 18, 72, 103, 112, 3, 122, 44, 108, 71, 0, 27, 90, 16};
    const EnvFeatures env = env_from_counts(counts, norm);
    const HybridPrediction p = predict_hybrid(t, d, env);
    double s = 0.0;
    double sp = 0.0;
    for (std::size_t h = 0; h < kHours; ++h) {
      CHECK(p.hourly_vht[h] >= 0.0);
      s += p.hourly_vht[h];
      sp += p.proportions[h];
    }
    CHECK(std::abs(s - p.total_vht) <= 1e-9);
    CHECK(std::abs(sp - 1.0) <= 1e-9);
    for (auto& l : d.layers()) {
      l.weights.setZero();
      l.biases.setZero();
    }
    const HybridPrediction flat = predict_hybrid(t, d, env);
    for (double v : flat.proportions) CHECK(v == doctest::Approx(1.0 / 24.0).epsilon(1e-15));
    MlpModel other = d;
    other.set_norm_info({101.0, 50.0, 30});
    CHECK_THROWS_AS(predict_hybrid(t, other, env), NormMismatch);
    CHECK_THROWS_AS(predict_hybrid(d, t, env), ShapeError);
  }

  TEST_CASE("hybrid prediction latency") {
    const NormalizationInfo norm{100.0, 50.0, 30};
    const MlpModel t = init_model(MlpSpec::network_t(), ModelKind::T, norm, 1);
    const MlpModel d = init_model(MlpSpec::network_d(), ModelKind::D, norm, 2);
    const EnvFeatures env = env_from_counts(PoiCounts{1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15, 16}, norm);
    double worst = 0.0;
    for (int i = 0; i < 200; ++i) {
      const auto t0 = std::chrono::steady_clock::now();
      const HybridPrediction p = predict_hybrid(t, d, env);
      const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
      worst = std::max(worst, ms);
      CHECK(p.total_vht > 0.0);
    }
    CHECK(worst < 10.0);
  }

  TEST_CASE("model file round trip is bit exact") {
    TempDir dir;
    const NormalizationInfo norm{123.0, 45.6, 30};
    MlpModel m = init_model(MlpSpec::for_kind(ModelKind::D, 3, 7), ModelKind::D, norm, 6);
    m.provenance = {"0123456789abcdef", 7};
    save_model(dir / "m.json", m);
    const MlpModel back = load_mlp(dir / "m.json");
    CHECK(back == m);
    CHECK(back.provenance == m.provenance);
    CHECK(back.norm_info() == norm);
    save_model(dir / "again.json", back);
    CHECK(testutil::read_file(dir / "again.json") == testutil::read_file(dir / "m.json"));
    testutil::write_file(dir / "bad.json", "{\"format_version\": 1}");
    CHECK_THROWS_AS(load_mlp(dir / "bad.json"), ConfigError);
  }

  TEST_CASE("enum names") {
    CHECK(optimizer_from_string("adam") == OptimizerKind::Adam);
    CHECK(optimizer_from_string("sgd") == OptimizerKind::Sgd);
    CHECK_THROWS_AS(optimizer_from_string("rmsprop"), ConfigError);
    CHECK(model_kind_from_string("D") == ModelKind::D);
    CHECK(activation_from_string("tanh") == Activation::Tanh);
  }
}
