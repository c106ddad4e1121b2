#include "fixtures.hpp"

namespace testutil {

using namespace urbanflux;

const SynthSpec& synth_spec_small() {
  static const SynthSpec spec = [] {
    GridSpec g;
    g.min = {110.30, 19.98};
    g.max = unproject({5000.0, 4000.0}, g.min);
    SynthSpec s = SynthSpec::defaults(5, g);
    s.n_poi = 2500;
    s.noise = 0.05;
    return s;
  }();
  return spec;
}

const Dataset& synth_dataset() {
  static const Dataset ds = [] {
    const SynthSpec& spec = synth_spec_small();
    const SynthCity city = gen_city(spec);
    const auto centers = generate_centers(spec.grid);
    const auto raw = build_raw_samples(centers, city.pois, city.orders, spec.grid, spec.n_days);
    Dataset d = normalize(clean(raw).samples, spec.n_days);
    d.grid = spec.grid;
    return d;
  }();
  return ds;
}

namespace {

MlpModel quick_train(ModelKind kind, std::uint64_t seed) {
  const Dataset& ds = synth_dataset();
  TrainConfig cfg;
  cfg.epochs = 150;
  cfg.batch_size = 32;
  cfg.learning_rate = 3e-3;
  cfg.optimizer = OptimizerKind::Adam;
  cfg.seed = seed;
  cfg.eval_every = 150;
  const MlpModel m = init_model(MlpSpec::for_kind(kind, 2, 24), kind, ds.norm, seed);
  return train(m, ds, cfg).model;
}

}  // namespace

const MlpModel& trained_t() {
  static const MlpModel m = quick_train(ModelKind::T, 1);
  return m;
}

const MlpModel& trained_d() {
  static const MlpModel m = quick_train(ModelKind::D, 2);
  return m;
}

}  // namespace testutil
