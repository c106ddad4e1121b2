#include "urbanflux/pipeline.hpp"

#include <algorithm>
#include <cinttypes>
#include <cstdio>
#include <memory>

#include "urbanflux/baselines.hpp"
#include "urbanflux/errors.hpp"
#include "urbanflux/evalx.hpp"
#include "urbanflux/model_io.hpp"
#include "urbanflux/render.hpp"

namespace urbanflux {

std::string fnv1a_hex(const std::string& bytes) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016" PRIx64, h);
  return buf;
}

namespace {

NetStage parse_net(const Json& j, const MlpSpec& fallback, std::uint64_t seed, const std::string& ctx) {
  NetStage n;
  n.spec = fallback;
  if (j.contains("hidden")) n.spec.hidden_widths = parse_hidden(require<std::string>(j, "hidden", ctx));
  if (j.contains("activation")) n.spec.activation = activation_from_string(require<std::string>(j, "activation", ctx));
  n.spec.validate();
  n.train.epochs = optional_field<std::size_t>(j, "epochs", n.train.epochs, ctx);
  n.train.batch_size = optional_field<std::size_t>(j, "batch_size", n.train.batch_size, ctx);
  n.train.learning_rate = optional_field<double>(j, "learning_rate", n.train.learning_rate, ctx);
  n.train.shuffle = optional_field<bool>(j, "shuffle", n.train.shuffle, ctx);
  n.train.seed = optional_field<std::uint64_t>(j, "seed", seed, ctx);
  n.train.eval_every =
      optional_field<std::size_t>(j, "eval_every", std::max<std::size_t>(1, n.train.epochs / 100), ctx);
  if (j.contains("optimizer")) n.train.optimizer = optimizer_from_string(require<std::string>(j, "optimizer", ctx));
  n.init_seed = optional_field<std::uint64_t>(j, "init_seed", seed + 1, ctx);
  n.train.validate();
  return n;
}

Json net_json(const NetStage& n) {
  return {{"spec", n.spec.label()},
          {"epochs", n.train.epochs},
          {"batch_size", n.train.batch_size},
          {"learning_rate", n.train.learning_rate},
          {"optimizer", to_string(n.train.optimizer)},
          {"seed", n.train.seed},
          {"init_seed", n.init_seed}};
}

}  // namespace

RunConfig RunConfig::from_json(const Json& j) {
  if (!j.is_object()) throw ConfigError("config: expected a JSON object");
  RunConfig c;
  c.source = j;
  const std::string ctx = "config";
  c.seed = optional_field<std::uint64_t>(j, "seed", c.seed, ctx);
  c.out = optional_field<std::string>(j, "out", c.out.string(), ctx);
  c.threads = optional_field<unsigned>(j, "threads", c.threads, ctx);
  c.grid = require<GridSpec>(j, "grid", ctx);
  c.grid.validate();

  const Json input = require<Json>(j, "input", ctx);
  if (input.contains("synth")) {
    const Json& s = input.at("synth");
    SynthInput in;
    in.seed = optional_field<std::uint64_t>(s, "seed", c.seed, "config.input.synth");
    in.noise = optional_field<double>(s, "noise", in.noise, "config.input.synth");
    in.n_poi = optional_field<std::size_t>(s, "n_poi", in.n_poi, "config.input.synth");
    in.n_days = optional_field<int>(s, "n_days", in.n_days, "config.input.synth");
    c.synth = in;
  } else {
    FileInput f;
    f.poi = require<std::string>(input, "poi", "config.input");
    f.orders = require<std::string>(input, "orders", "config.input");
    f.days = require<int>(input, "days", "config.input");
    const std::string policy = optional_field<std::string>(input, "order_policy", "strict", "config.input");
    if (policy == "lenient") {
      f.order_policy = OrderPolicy::Lenient;
    } else if (policy != "strict") {
      throw ConfigError("config.input: order_policy must be 'strict' or 'lenient'");
    }
    if (f.days < 1) throw ConfigError("config.input: days must be positive");
    c.files = f;
  }

  if (j.contains("clean")) {
    c.clean.min_orders_per_hour =
        optional_field<double>(j.at("clean"), "min_orders_per_hour", c.clean.min_orders_per_hour, "config.clean");
  }
  if (j.contains("split")) {
    c.train_share = optional_field<double>(j.at("split"), "train_share", c.train_share, "config.split");
    c.split_seed = optional_field<std::uint64_t>(j.at("split"), "seed", c.seed, "config.split");
  } else {
    c.split_seed = c.seed;
  }
  if (!(c.train_share > 0.0 && c.train_share < 1.0)) throw ConfigError("config.split: train_share must be in (0, 1)");
  const Json train = optional_field<Json>(j, "train", Json::object(), ctx);
  c.net_t = parse_net(optional_field<Json>(train, "T", Json::object(), "config.train"), MlpSpec::network_t(), c.seed,
                      "config.train.T");
  c.net_d = parse_net(optional_field<Json>(train, "D", Json::object(), "config.train"), MlpSpec::network_d(),
                      c.seed + 2, "config.train.D");
  if (c.net_t.spec.output_width != 1 || c.net_d.spec.output_width != kHours) {
    throw ConfigError("config.train: output widths are fixed by the model kind");
  }
  c.baselines = optional_field<bool>(j, "baselines", false, ctx);
  if (j.contains("transfer")) {
    if (!c.synth) throw ConfigError("config.transfer: needs a synthetic input to derive the shifted region");
    TransferStage t;
    t.shift = optional_field<double>(j.at("transfer"), "shift", t.shift, "config.transfer");
    t.seed = optional_field<std::uint64_t>(j.at("transfer"), "seed", c.seed + 1, "config.transfer");
    c.transfer = t;
  }
  if (j.contains("optimize")) c.scenario = j.at("optimize");
  if (j.contains("render")) {
    c.ramp = optional_field<std::string>(j.at("render"), "ramp", c.ramp, "config.render");
    c.cell_px = optional_field<std::size_t>(j.at("render"), "cell_px", c.cell_px, "config.render");
  }
  ColorRamp::by_name(c.ramp);
  if (c.cell_px < 1) throw ConfigError("config.render: cell_px must be positive");
  return c;
}

std::string RunConfig::hash() const {
  Json canon = source;
  canon.erase("out");
  canon.erase("threads");
  return fnv1a_hex(canon.dump());
}

Provenance RunConfig::provenance() const { return {hash(), seed}; }

SynthSpec synth_spec(const SynthInput& in, const GridSpec& grid) {
  SynthSpec s = SynthSpec::defaults(in.seed, grid);
  s.noise = in.noise;
  s.n_poi = in.n_poi;
  s.n_days = in.n_days;
  return s;
}

SampleResult sample_city(const GridSpec& grid, std::span<const PoiRecord> pois, std::span<const TripOrder> orders,
                         int days, const CleanPolicy& policy, unsigned threads) {
  SampleResult r;
  const std::vector<GeoPoint> centers = generate_centers(grid);
  r.raw = build_raw_samples(centers, pois, orders, grid, days, threads);
  r.cleaned = clean(r.raw, policy);
  r.dataset = normalize(r.cleaned.samples, days);
  r.dataset.grid = grid;
  return r;
}

namespace {

struct Paths {
  std::filesystem::path out;
  std::filesystem::path city() const { return out / "city"; }
  std::filesystem::path city_b() const { return out / "city_b"; }
  std::filesystem::path raw() const { return out / "raw_samples.csv"; }
  std::filesystem::path dataset() const { return out / "dataset.csv"; }
  std::filesystem::path dataset_b() const { return out / "dataset_b.csv"; }
  std::filesystem::path model_t() const { return out / "model_T.json"; }
  std::filesystem::path model_d() const { return out / "model_D.json"; }
  std::filesystem::path history() const { return out / "train_history.json"; }
  std::filesystem::path report() const { return out / "report.json"; }
  std::filesystem::path surface() const { return out / "surface_D.csv"; }
  std::filesystem::path transfer() const { return out / "transfer.json"; }
  std::filesystem::path optimize() const { return out / "optimize.json"; }
  std::filesystem::path heatmap() const { return out / "heatmap_vht.png"; }
  std::filesystem::path error_map() const { return out / "error_D.png"; }
  std::filesystem::path curves() const { return out / "curves_D.svg"; }
  std::filesystem::path training() const { return out / "training.svg"; }
};

class Runner {
 public:
  Runner(const RunConfig& cfg, const PipelineOptions& opts) : cfg_(cfg), opts_(opts), p_{cfg.out}, prov_(cfg.provenance()) {}

  std::vector<StageOutcome> run() {
    std::filesystem::create_directories(p_.out);
    if (cfg_.synth) stage("synth", {p_.city() / "poi.csv", p_.city() / "orders.csv", p_.city() / "truth.json"}, [&] { synth(); });
    stage("sample", {p_.raw(), p_.dataset(), dataset_sidecar_path(p_.dataset())}, [&] { sample(); });
    stage("train", {p_.model_t(), p_.model_d(), p_.history()}, [&] { train(); });
    stage("eval", {p_.report(), p_.surface()}, [&] { eval(); });
    if (cfg_.transfer) stage("transfer", {p_.city_b() / "orders.csv", p_.dataset_b(), p_.transfer()}, [&] { transfer(); });
    if (cfg_.scenario) stage("optimize", {p_.optimize()}, [&] { optimize(); });
    stage("render", {p_.heatmap(), p_.error_map(), p_.curves(), p_.training()}, [&] { render(); });
    return outcomes_;
  }

 private:
  template <typename Fn>
  void stage(const std::string& name, std::vector<std::filesystem::path> outputs, Fn&& fn) {
    StageOutcome o{name, false, outputs};
    o.skipped = !opts_.force && std::all_of(outputs.begin(), outputs.end(),
                                            [](const auto& p) { return std::filesystem::exists(p); });
    if (opts_.on_stage) opts_.on_stage(o);
    if (!o.skipped) {
      try {
        fn();
      } catch (const Error& e) {
        rethrow(e, name);
      }
    }
    outcomes_.push_back(std::move(o));
  }

  [[noreturn]] static void rethrow(const Error& e, const std::string& stage) {
    const std::string msg = "stage " + stage + ": " + e.what();
    switch (e.kind()) {
      case ErrorKind::Usage: throw UsageError(msg);
      case ErrorKind::Config: throw ConfigError(msg);
      case ErrorKind::Io: throw IoError(msg);
      case ErrorKind::Divergence: throw DivergenceError(msg);
      case ErrorKind::EmptyDataset: throw EmptyDataset(msg);
      case ErrorKind::Shape: throw ShapeError(msg);
      case ErrorKind::NormMismatch: throw NormMismatch(msg);
      case ErrorKind::Infeasible: throw Infeasible(msg);
      case ErrorKind::NegativeCount: throw NegativeCount(msg);
      case ErrorKind::DegenerateExtent: throw DegenerateExtent(msg);
      case ErrorKind::ZeroGroundTruth: throw ZeroGroundTruth(msg);
      case ErrorKind::Parse:
      case ErrorKind::Range:
      case ErrorKind::OrderTime: throw IoError(msg);
    }
    throw IoError(msg);
  }

  void synth() {
    const SynthSpec spec = synth_spec(*cfg_.synth, cfg_.grid);
    std::filesystem::create_directories(p_.city());
    write_city(p_.city(), gen_city(spec), spec);
  }

  int days() const { return cfg_.synth ? cfg_.synth->n_days : cfg_.files->days; }

  void sample() {
    std::filesystem::path poi, orders;
    OrderPolicy policy = OrderPolicy::Strict;
    if (cfg_.synth) {
      poi = p_.city() / "poi.csv";
      orders = p_.city() / "orders.csv";
    } else {
      poi = cfg_.files->poi;
      orders = cfg_.files->orders;
      policy = cfg_.files->order_policy;
    }
    const auto pois = parse_poi_csv(poi);
    const auto ords = parse_orders_csv(orders, policy);
    SampleResult r = sample_city(cfg_.grid, pois, ords, days(), cfg_.clean, cfg_.threads);
    r.dataset.provenance = prov_;
    write_raw_samples(p_.raw(), r.raw);
    write_dataset(p_.dataset(), r.dataset);
  }

  const Dataset& dataset() {
    if (!dataset_) dataset_ = read_dataset(p_.dataset());
    return *dataset_;
  }

  std::pair<Dataset, Dataset> split() {
    const HoldoutSplit s = holdout_split(dataset().size(), cfg_.train_share, cfg_.split_seed);
    return {dataset().subset(s.train), dataset().subset(s.test)};
  }

  MlpModel fit(const NetStage& n, ModelKind kind, const Dataset& train, const Dataset& test, TrainHistory& history) {
    MlpModel m = init_model(n.spec, kind, dataset().norm, n.init_seed);
    TrainResult r = urbanflux::train(std::move(m), train, n.train, &test);
    r.model.provenance = prov_;
    history = std::move(r.history);
    return std::move(r.model);
  }

  void train() {
    const auto [tr, te] = split();
    TrainHistory ht, hd;
    const MlpModel t = fit(cfg_.net_t, ModelKind::T, tr, te, ht);
    const MlpModel d = fit(cfg_.net_d, ModelKind::D, tr, te, hd);
    save_model(p_.model_t(), t);
    save_model(p_.model_d(), d);
    write_json_file(p_.history(), Json{{"provenance", prov_}, {"T", to_json(ht)}, {"D", to_json(hd)}});
  }

  void eval() {
    const auto [tr, te] = split();
    const auto t = load_regressor(p_.model_t());
    const auto d = load_regressor(p_.model_d());
    Json rows = Json::array();
    auto add = [&](const std::string& label, const Regressor& m) {
      rows.push_back({{"label", label},
                      {"algorithm", m.algorithm()},
                      {"target", to_string(m.target())},
                      {"train_median", median_accuracy(m, tr)},
                      {"test_median", median_accuracy(m, te)}});
    };
    add(cfg_.net_t.spec.label(), *t);
    add(cfg_.net_d.spec.label(), *d);
    if (cfg_.baselines) {
      ForestConfig fc;
      fc.seed = cfg_.seed;
      fc.threads = cfg_.threads;
      SvrConfig sc;
      sc.seed = cfg_.seed;
      for (Target target : {Target::Total, Target::Hourly}) {
        add("rf", ForestModel(train_forest(tr, target, fc)));
        add("svr", SvrModel(train_svr(tr, target, sc)));
      }
    }
    const ActivitySplit act = split_by_activity(dataset(), 2000.0, 0);
    Json report = {{"provenance", prov_},
                   {"config", {{"T", net_json(cfg_.net_t)}, {"D", net_json(cfg_.net_d)}}},
                   {"dataset", {{"samples", dataset().size()}, {"train", tr.size()}, {"test", te.size()}}},
                   {"holdout", std::move(rows)},
                   {"activity_split", {{"threshold_hours", 2000.0}, {"low", act.low.size()}, {"high", act.high.size()}}}};
    write_json_file(p_.report(), report);
    write_surface_csv(p_.surface(), error_surface(*d, dataset()));
  }

  void transfer() {
    const SynthSpec base = synth_spec(*cfg_.synth, cfg_.grid);
    const SynthSpec shifted = base.shifted(cfg_.transfer->shift, cfg_.transfer->seed);
    std::filesystem::create_directories(p_.city_b());
    const SynthCity city = gen_city(shifted);
    write_city(p_.city_b(), city, shifted);
    SampleResult b = sample_city(cfg_.grid, city.pois, city.orders, shifted.n_days, cfg_.clean, cfg_.threads);
    b.dataset.provenance = prov_;
    write_dataset(p_.dataset_b(), b.dataset);

    const auto [tr, te] = split();
    const auto t = load_regressor(p_.model_t());
    const auto d = load_regressor(p_.model_d());
    const Region region_b{"B", cfg_.grid, b.dataset};
    Json rows = Json::array();
    for (const Regressor* m : {t.get(), d.get()}) {
      const TransferReport r = transfer_eval(*m, "A", region_b, {});
      rows.push_back({{"target", to_string(m->target())},
                      {"heldout_A_median", median_accuracy(*m, te)},
                      {"region_B_median", r.median_accuracy},
                      {"region_B_scored", r.accuracies.size()},
                      {"region_B_excluded", r.excluded}});
    }
    write_json_file(p_.transfer(), Json{{"provenance", prov_},
                                        {"shift", cfg_.transfer->shift},
                                        {"direction", "A -> B"},
                                        {"results", std::move(rows)}});
  }

  void optimize() {
    Json sj = *cfg_.scenario;
    if (!sj.contains("base_counts") && sj.contains("sample_id")) {
      const auto id = require<std::size_t>(sj, "sample_id", "config.optimize");
      const DatasetRow* row = dataset().find(id);
      if (!row) throw ConfigError("config.optimize: sample " + std::to_string(id) + " is not in the dataset");
      sj["base_counts"] = row->raw.poi_counts;
    }
    const Scenario s = scenario_from_json(sj);
    const auto t = load_regressor(p_.model_t());
    const auto d = load_regressor(p_.model_d());
    GaConfig ga = s.ga;
    ga.threads = cfg_.threads;
    const GaResult r = s.grouped ? run_grouped_ga(s.constraints, ga, *t, *d, s.objective, s.groups)
                                 : run_ga(s.constraints, ga, *t, *d, s.objective);
    Json out = to_json(r);
    out["provenance"] = prov_;
    out["scenario"] = to_json(s);
    write_json_file(p_.optimize(), out);
  }

  void render() {
    const std::string prov = "config_hash=" + prov_.config_hash + " seed=" + std::to_string(prov_.seed);
    RenderOptions ro;
    ro.cell_px = cfg_.cell_px;
    ro.provenance = prov;
    const Dataset& ds = dataset();
    std::vector<std::size_t> ids;
    std::vector<double> vht;
    for (const auto& r : ds.rows) {
      ids.push_back(r.sample_id);
      vht.push_back(r.raw.vht_total);
    }
    render_heatmap(raster_from_samples(cfg_.grid, ids, vht), ColorRamp::by_name(cfg_.ramp), p_.heatmap(), ro);

    const auto d = load_regressor(p_.model_d());
    render_error_map(cfg_.grid, error_surface(*d, ds), p_.error_map(), ro);

    const auto [tr, te] = split();
    std::vector<Series> curves;
    for (std::size_t i = 0; i < std::min<std::size_t>(3, te.size()); ++i) {
      const DatasetRow& row = te.rows[i];
      const std::string id = std::to_string(row.sample_id);
      curves.push_back({"truth " + id, {row.demand.hourly.begin(), row.demand.hourly.end()}, true});
      curves.push_back({"predicted " + id, scored_prediction(*d, row.env.to_vector()), false});
    }
    ChartOptions co;
    co.title = "hourly VHT shares, held-out samples";
    co.y_label = "share";
    co.provenance = prov;
    render_curves(curves, p_.curves(), co);

    const Json hist = read_json_file(p_.history());
    std::vector<Series> lines;
    for (const char* k : {"T", "D"}) {
      std::vector<double> err;
      for (const auto& e : hist.at(k)) err.push_back(e.at("heldout_error").is_number() ? e.at("heldout_error").get<double>() : 1.0);
      if (!err.empty()) lines.push_back({std::string("network ") + k + " held-out error", std::move(err), false});
    }
    if (lines.size() == 2 && lines[0].values.size() != lines[1].values.size()) lines.erase(lines.begin());
    if (lines.empty()) throw ShapeError("no training history to plot");
    ChartOptions to;
    to.title = "error rate during training";
    to.x_label = "evaluation";
    to.y_label = "1 - median accuracy";
    to.provenance = prov;
    render_lines(lines, p_.training(), to);
  }

  const RunConfig& cfg_;
  const PipelineOptions& opts_;
  Paths p_;
  Provenance prov_;
  std::optional<Dataset> dataset_;
  std::vector<StageOutcome> outcomes_;
};

}  // namespace

std::vector<StageOutcome> run_pipeline(const RunConfig& cfg, const PipelineOptions& opts) {
  return Runner(cfg, opts).run();
}

}  // namespace urbanflux
