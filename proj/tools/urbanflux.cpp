#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "urbanflux/baselines.hpp"
#include "urbanflux/errors.hpp"
#include "urbanflux/evalx.hpp"
#include "urbanflux/features.hpp"
#include "urbanflux/ingest.hpp"
#include "urbanflux/json_io.hpp"
#include "urbanflux/model_io.hpp"
#include "urbanflux/nets.hpp"
#include "urbanflux/optimizer.hpp"
#include "urbanflux/pipeline.hpp"
#include "urbanflux/render.hpp"
#include "urbanflux/service.hpp"
#include "urbanflux/synth.hpp"

namespace fs = std::filesystem;
using namespace urbanflux;

namespace {

struct Globals {
  std::uint64_t seed = 7;
  std::string out = "out";
  bool force = false;
  unsigned threads = 1;
};

void print_json(const Json& j) { std::cout << j.dump(2) << '\n'; }

void ensure_out(const Globals& g) { fs::create_directories(g.out); }

fs::path out_path(const Globals& g, const std::string& name) { return fs::path(g.out) / name; }

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> parts;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep)) parts.push_back(item);
  return parts;
}

double parse_number(const std::string& s, const std::string& what) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw UsageError(what + ": '" + s + "' is not a number");
  }
}

GridSpec parse_bbox(const std::string& bbox, double step, double radius) {
  const auto parts = split(bbox, ',');
  if (parts.size() != 4) throw UsageError("--bbox expects min_lon,min_lat,max_lon,max_lat");
  GridSpec g;
  g.min = {parse_number(parts[0], "--bbox"), parse_number(parts[1], "--bbox")};
  g.max = {parse_number(parts[2], "--bbox"), parse_number(parts[3], "--bbox")};
  g.step_m = step;
  g.buffer_radius_m = radius;
  g.validate();
  return g;
}

PoiCounts parse_counts(const std::string& s) {
  const auto parts = split(s, ',');
  if (parts.size() != kCategoryCount) {
    throw ShapeError("--counts expects 16 comma-separated integers, got " + std::to_string(parts.size()));
  }
  PoiCounts c{};
  for (std::size_t i = 0; i < kCategoryCount; ++i) {
    const double v = parse_number(parts[i], "--counts");
    if (v < 0) throw NegativeCount("count " + std::to_string(i) + " is negative");
    if (v != static_cast<double>(static_cast<std::int64_t>(v))) throw UsageError("--counts must be integers");
    c[i] = static_cast<std::int64_t>(v);
  }
  return c;
}

// Calendar days touched by the orders' pickup times.
int order_days(std::span<const TripOrder> orders) {
  if (orders.empty()) throw EmptyDataset("no orders");
  std::int64_t lo = orders.front().pickup_ts, hi = lo;
  for (const auto& o : orders) {
    lo = std::min(lo, o.pickup_ts);
    hi = std::max(hi, o.pickup_ts);
  }
  auto day = [](std::int64_t ts) { return ts >= 0 ? ts / 86400 : (ts - 86399) / 86400; };
  return static_cast<int>(day(hi) - day(lo) + 1);
}

TrainConfig train_config(std::size_t epochs, std::size_t batch, double lr, const std::string& optimizer,
                         std::uint64_t seed, std::size_t eval_every) {
  TrainConfig c;
  c.epochs = epochs;
  c.batch_size = batch;
  c.learning_rate = lr;
  c.optimizer = optimizer_from_string(optimizer);
  c.seed = seed;
  c.eval_every = eval_every ? eval_every : std::max<std::size_t>(1, epochs / 100);
  return c;
}

std::unique_ptr<Regressor> load_checked(const std::string& path, Target expected) {
  auto m = load_regressor(path);
  if (m->target() != expected) {
    throw ConfigError(path + " predicts " + to_string(m->target()) + ", expected " + to_string(expected));
  }
  return m;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"urbanflux: travel demand from urban function mix"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--seed", g.seed, "base random seed");
  app.add_option("--out", g.out, "output directory");
  app.add_flag("--force", g.force, "rerun pipeline stages whose outputs exist");
  app.add_option("--threads", g.threads, "worker threads")->check(CLI::Range(1u, 256u));

  // synth
  auto* synth = app.add_subcommand("synth", "generate a synthetic city");
  double noise = 0.0, shift = 0.0;
  std::size_t n_poi = 9000;
  int n_days = 30;
  std::uint64_t shift_seed = 8;
  synth->add_option("--noise", noise, "log-sd of per-POI demand multipliers");
  synth->add_option("--n-poi", n_poi);
  synth->add_option("--days", n_days);
  synth->add_option("--shift", shift, "distribution shift amount in [0, 1]");
  synth->add_option("--shift-seed", shift_seed);
  std::string synth_bbox;
  synth->add_option("--bbox", synth_bbox, "min_lon,min_lat,max_lon,max_lat (default: a 12 x 9 km box)");

  // sample
  auto* sample = app.add_subcommand("sample", "build, clean and normalize buffer samples");
  std::string poi_path, orders_path, bbox;
  double step = 200.0, radius = 1000.0, min_rate = 1.0;
  int sample_days = 0;
  bool lenient = false;
  sample->add_option("--poi", poi_path)->required();
  sample->add_option("--orders", orders_path)->required();
  sample->add_option("--bbox", bbox, "min_lon,min_lat,max_lon,max_lat")->required();
  sample->add_option("--step", step, "lattice step, meters");
  sample->add_option("--radius", radius, "buffer radius, meters");
  sample->add_option("--days", sample_days, "days covered (default: from order timestamps)");
  sample->add_option("--min-orders-per-hour", min_rate);
  sample->add_flag("--lenient", lenient, "drop orders with invalid durations instead of failing");

  // train
  auto* train_cmd = app.add_subcommand("train", "train network T or D (or a baseline)");
  std::string dataset_path, kind = "T", hidden, activation = "sigmoid", optimizer = "sgd", algorithm = "ann";
  std::string model_out;
  std::size_t epochs = 1000, batch = 100, eval_every = 0;
  double lr = 0.1, train_share = 0.8;
  train_cmd->add_option("--dataset", dataset_path)->required();
  train_cmd->add_option("--kind", kind, "T or D")->check(CLI::IsMember({"T", "D"}));
  train_cmd->add_option("--hidden", hidden, "e.g. 7x82 (default: 6x36 for T, 7x82 for D)");
  train_cmd->add_option("--activation", activation);
  train_cmd->add_option("--optimizer", optimizer)->check(CLI::IsMember({"sgd", "adam"}));
  train_cmd->add_option("--algorithm", algorithm)->check(CLI::IsMember({"ann", "rf", "svr"}));
  train_cmd->add_option("--epochs", epochs);
  train_cmd->add_option("--batch", batch);
  train_cmd->add_option("--lr", lr);
  train_cmd->add_option("--eval-every", eval_every);
  train_cmd->add_option("--train-share", train_share, "holdout split; 1 trains on everything");
  train_cmd->add_option("--model", model_out, "model file (default: <out>/model_<kind>.json)");

  // cv
  auto* cv = app.add_subcommand("cv", "k-fold cross-validation of several layouts");
  std::vector<std::string> layouts;
  std::size_t folds = 5;
  bool with_baselines = false;
  cv->add_option("--dataset", dataset_path)->required();
  cv->add_option("--kind", kind)->check(CLI::IsMember({"T", "D"}));
  cv->add_option("--hidden", layouts, "one or more layouts, e.g. 2x36 6x36")->expected(1, -1);
  cv->add_option("--k", folds);
  cv->add_option("--epochs", epochs);
  cv->add_option("--batch", batch);
  cv->add_option("--lr", lr);
  cv->add_option("--optimizer", optimizer)->check(CLI::IsMember({"sgd", "adam"}));
  cv->add_flag("--baselines", with_baselines, "add random forest and linear SVR rows");

  // eval
  auto* eval = app.add_subcommand("eval", "score a model on a dataset");
  std::string model_path, surface_out;
  eval->add_option("--model", model_path)->required();
  eval->add_option("--dataset", dataset_path)->required();
  eval->add_option("--surface", surface_out, "write per-sample predictions to this CSV");

  // transfer
  auto* transfer = app.add_subcommand("transfer", "score a model on another region");
  std::string test_dataset, train_name = "A", test_name = "B";
  bool renorm = false, allow_renorm = false, activity = false;
  double threshold = 2000.0;
  transfer->add_option("--model", model_path)->required();
  transfer->add_option("--dataset", test_dataset, "test region dataset")->required();
  transfer->add_option("--train-name", train_name);
  transfer->add_option("--test-name", test_name);
  transfer->add_flag("--renormalize", renorm, "use the test region's own normalization");
  transfer->add_flag("--allow-renormalize", allow_renorm);
  transfer->add_flag("--activity-split", activity, "also report the low/high activity partition");
  transfer->add_option("--threshold", threshold, "activity threshold, VHT hours per period");

  // predict
  auto* predict = app.add_subcommand("predict", "hybrid prediction for one count vector");
  std::string model_t, model_d, counts_text;
  std::vector<std::string> edits;
  predict->add_option("--model-t", model_t)->required();
  predict->add_option("--model-d", model_d)->required();
  predict->add_option("--counts", counts_text, "16 comma-separated integers")->required();
  predict->add_option("--edit", edits, "what-if edits: add:I:V, set:I:V, equalize[:V], scale:F");

  // optimize
  auto* optimize = app.add_subcommand("optimize", "genetic search over POI counts");
  std::string scenario_path;
  optimize->add_option("--model-t", model_t)->required();
  optimize->add_option("--model-d", model_d)->required();
  optimize->add_option("--scenario", scenario_path)->required();

  // render
  auto* render = app.add_subcommand("render", "heatmaps and charts");
  std::string ramp = "inferno";
  std::size_t cell_px = 4;
  render->add_option("--dataset", dataset_path)->required();
  render->add_option("--model-d", model_d, "adds the error map and hourly curves");
  render->add_option("--ramp", ramp)->check(CLI::IsMember({"inferno", "viridis", "gray"}));
  render->add_option("--cell-px", cell_px);

  // serve
  auto* serve_cmd = app.add_subcommand("serve", "HTTP JSON service");
  std::string host = "127.0.0.1";
  int port = 8080;
  std::size_t workers = 1;
  serve_cmd->add_option("--model-t", model_t, "or URBANFLUX_MODEL_T");
  serve_cmd->add_option("--model-d", model_d, "or URBANFLUX_MODEL_D");
  serve_cmd->add_option("--dataset", dataset_path, "or URBANFLUX_DATASET");
  serve_cmd->add_option("--host", host);
  serve_cmd->add_option("--port", port);
  serve_cmd->add_option("--job-workers", workers);

  // run
  auto* run = app.add_subcommand("run", "full pipeline from a config file");
  std::string config_path;
  run->add_option("--config", config_path)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << Json{{"error", "UsageError"}, {"message", e.what()}}.dump() << '\n';
    return 1;
  }

  try {
    if (*synth) {
      ensure_out(g);
      SynthSpec spec = synth_bbox.empty() ? SynthSpec::defaults(g.seed)
                                          : SynthSpec::defaults(g.seed, parse_bbox(synth_bbox, 200.0, 1000.0));
      spec.noise = noise;
      spec.n_poi = n_poi;
      spec.n_days = n_days;
      if (shift > 0.0) spec = spec.shifted(shift, shift_seed);
      const SynthCity city = gen_city(spec);
      write_city(g.out, city, spec);
      print_json({{"pois", city.pois.size()}, {"orders", city.orders.size()}, {"out", g.out}});
    } else if (*sample) {
      ensure_out(g);
      const GridSpec grid = parse_bbox(bbox, step, radius);
      ParseReport report;
      const auto pois = parse_poi_csv(poi_path);
      const auto orders = parse_orders_csv(orders_path, lenient ? OrderPolicy::Lenient : OrderPolicy::Strict, &report);
      const int days = sample_days > 0 ? sample_days : order_days(orders);
      SampleResult r = sample_city(grid, pois, orders, days, CleanPolicy{min_rate}, g.threads);
      r.dataset.provenance.seed = g.seed;
      write_raw_samples(out_path(g, "raw_samples.csv"), r.raw);
      write_dataset(out_path(g, "dataset.csv"), r.dataset);
      print_json({{"centers", r.raw.size()},
                  {"retained", r.dataset.size()},
                  {"removed_no_poi", r.cleaned.removed_no_poi},
                  {"removed_low_activity", r.cleaned.removed_low_activity},
                  {"rejected_orders", report.rejected_time},
                  {"days", days},
                  {"dataset", out_path(g, "dataset.csv").string()}});
    } else if (*train_cmd) {
      ensure_out(g);
      const Dataset ds = read_dataset(dataset_path);
      const ModelKind mk = model_kind_from_string(kind);
      Dataset train_set = ds, test_set;
      const bool holdout = train_share < 1.0;
      if (holdout) {
        const HoldoutSplit s = holdout_split(ds.size(), train_share, g.seed);
        train_set = ds.subset(s.train);
        test_set = ds.subset(s.test);
      }
      const fs::path path = model_out.empty() ? out_path(g, std::string("model_") + kind + ".json") : fs::path(model_out);
      Json summary = {{"model", path.string()}, {"train_size", train_set.size()}, {"test_size", test_set.size()}};
      if (algorithm == "ann") {
        MlpSpec spec = hidden.empty() ? (mk == ModelKind::T ? MlpSpec::network_t() : MlpSpec::network_d())
                                      : MlpSpec::for_kind(mk, 1, 1);
        if (!hidden.empty()) spec.hidden_widths = parse_hidden(hidden);
        spec.activation = activation_from_string(activation);
        spec.validate();
        const TrainConfig cfg = train_config(epochs, batch, lr, optimizer, g.seed, eval_every);
        TrainResult r = train(init_model(spec, mk, ds.norm, g.seed + 1), train_set, cfg, holdout ? &test_set : nullptr);
        r.model.provenance.seed = g.seed;
        save_model(path, r.model);
        write_json_file(out_path(g, std::string("history_") + kind + ".json"), to_json(r.history));
        summary["spec"] = spec.label();
        summary["train_median"] = median_accuracy(r.model, train_set);
        if (holdout) summary["test_median"] = median_accuracy(r.model, test_set);
      } else {
        std::unique_ptr<Regressor> m;
        if (algorithm == "rf") {
          ForestConfig fc;
          fc.seed = g.seed;
          fc.threads = g.threads;
          m = std::make_unique<ForestModel>(train_forest(train_set, target_of(mk), fc));
        } else {
          SvrConfig sc;
          sc.seed = g.seed;
          m = std::make_unique<SvrModel>(train_svr(train_set, target_of(mk), sc));
        }
        save_regressor(path, *m);
        summary["train_median"] = median_accuracy(*m, train_set);
        if (holdout) summary["test_median"] = median_accuracy(*m, test_set);
      }
      print_json(summary);
    } else if (*cv) {
      ensure_out(g);
      const Dataset ds = read_dataset(dataset_path);
      const ModelKind mk = model_kind_from_string(kind);
      if (layouts.empty()) layouts = {mk == ModelKind::T ? "6x36" : "7x82"};
      std::vector<CvCandidate> cands;
      const TrainConfig cfg = train_config(epochs, batch, lr, optimizer, g.seed, epochs);
      for (const auto& l : layouts) {
        MlpSpec spec = MlpSpec::for_kind(mk, 1, 1);
        spec.hidden_widths = parse_hidden(l);
        cands.push_back(mlp_candidate(spec, mk, cfg));
      }
      if (with_baselines) {
        ForestConfig fc;
        fc.seed = g.seed;
        fc.threads = g.threads;
        SvrConfig sc;
        sc.seed = g.seed;
        cands.push_back(forest_candidate(fc, target_of(mk)));
        cands.push_back(svr_candidate(sc, target_of(mk)));
      }
      const Json rows = to_json(kfold_cv(ds, folds, cands, g.seed));
      write_json_file(out_path(g, "cv.json"), rows);
      print_json(rows);
    } else if (*eval) {
      const auto m = load_regressor(model_path);
      const Dataset ds = read_dataset(dataset_path);
      const Scores s = score(*m, ds);
      if (!surface_out.empty()) write_surface_csv(surface_out, error_surface(*m, ds));
      print_json({{"algorithm", m->algorithm()},
                  {"target", to_string(m->target())},
                  {"median_accuracy", s.median_accuracy},
                  {"scored", s.samples.size()},
                  {"excluded", s.excluded}});
    } else if (*transfer) {
      const auto m = load_regressor(model_path);
      Region region{test_name, {}, read_dataset(test_dataset)};
      if (region.dataset.grid) region.grid = *region.dataset.grid;
      const TransferReport r = transfer_eval(*m, train_name, region, {renorm, allow_renorm});
      Json j = to_json(r);
      if (activity) {
        const ActivitySplit a = split_by_activity(region.dataset, threshold, 0);
        j["activity_split"] = {{"threshold_hours", threshold}, {"low", a.low.size()}, {"high", a.high.size()}};
      }
      print_json(j);
    } else if (*predict) {
      const auto t = load_checked(model_t, Target::Total);
      const auto d = load_checked(model_d, Target::Hourly);
      const PoiCounts counts = parse_counts(counts_text);
      if (edits.empty()) {
        if (std::all_of(counts.begin(), counts.end(), [](std::int64_t v) { return v == 0; })) {
          throw ZeroGroundTruth("all counts are zero so proportions are undefined");
        }
        print_json(to_json(predict_counts(*t, *d, counts)));
      } else {
        std::vector<Edit> parsed;
        for (const auto& e : edits) {
          const auto parts = split(e, ':');
          Edit ed;
          if (parts[0] == "add" || parts[0] == "set") {
            if (parts.size() != 3) throw UsageError("--edit " + e + ": expected " + parts[0] + ":INDEX:VALUE");
            ed.op = parts[0] == "add" ? Edit::Op::Add : Edit::Op::Set;
            ed.index = static_cast<int>(parse_number(parts[1], "--edit"));
            ed.value = parse_number(parts[2], "--edit");
          } else if (parts[0] == "equalize") {
            ed.op = Edit::Op::Equalize;
            ed.value = parts.size() > 1 ? parse_number(parts[1], "--edit") : 0.0;
          } else if (parts[0] == "scale" && parts.size() == 2) {
            ed.op = Edit::Op::Scale;
            ed.value = parse_number(parts[1], "--edit");
          } else {
            throw UsageError("--edit " + e + ": unknown edit");
          }
          parsed.push_back(ed);
        }
        RealCounts base{};
        for (std::size_t i = 0; i < kCategoryCount; ++i) base[i] = static_cast<double>(counts[i]);
        const WhatIfResult w = what_if(base, parsed, *t, *d);
        print_json({{"base_counts", w.base_counts},
                    {"edited_counts", w.edited_counts},
                    {"base", to_json(w.base)},
                    {"edited", to_json(w.edited)},
                    {"l1_divergence", w.l1_divergence}});
      }
    } else if (*optimize) {
      ensure_out(g);
      const auto t = load_checked(model_t, Target::Total);
      const auto d = load_checked(model_d, Target::Hourly);
      const Scenario s = scenario_from_json(read_json_file(scenario_path));
      GaConfig ga = s.ga;
      ga.threads = g.threads;
      const GaResult r = s.grouped ? run_grouped_ga(s.constraints, ga, *t, *d, s.objective, s.groups)
                                   : run_ga(s.constraints, ga, *t, *d, s.objective);
      Json j = to_json(r);
      j["scenario"] = to_json(s);
      write_json_file(out_path(g, "optimize.json"), j);
      print_json({{"best_counts", r.best_counts},
                  {"best_fitness", r.best_fitness},
                  {"base_fitness", r.base_fitness},
                  {"evaluations", r.evaluations},
                  {"seconds", r.seconds},
                  {"result", out_path(g, "optimize.json").string()}});
    } else if (*render) {
      ensure_out(g);
      const Dataset ds = read_dataset(dataset_path);
      if (!ds.grid) throw ConfigError(dataset_path + " has no grid in its sidecar");
      RenderOptions ro;
      ro.cell_px = cell_px;
      ro.provenance = "config_hash=" + ds.provenance.config_hash + " seed=" + std::to_string(ds.provenance.seed);
      std::vector<std::size_t> ids;
      std::vector<double> vht;
      for (const auto& r : ds.rows) {
        ids.push_back(r.sample_id);
        vht.push_back(r.raw.vht_total);
      }
      render_heatmap(raster_from_samples(*ds.grid, ids, vht), ColorRamp::by_name(ramp), out_path(g, "heatmap_vht.png"), ro);
      Json written = {out_path(g, "heatmap_vht.png").string()};
      if (!model_d.empty()) {
        const auto d = load_checked(model_d, Target::Hourly);
        render_error_map(*ds.grid, error_surface(*d, ds), out_path(g, "error_D.png"), ro);
        std::vector<Series> curves;
        for (std::size_t i = 0; i < std::min<std::size_t>(3, ds.size()); ++i) {
          const DatasetRow& row = ds.rows[i];
          const std::string id = std::to_string(row.sample_id);
          curves.push_back({"truth " + id, {row.demand.hourly.begin(), row.demand.hourly.end()}, true});
          curves.push_back({"predicted " + id, scored_prediction(*d, row.env.to_vector()), false});
        }
        ChartOptions co;
        co.title = "hourly VHT shares";
        co.y_label = "share";
        co.provenance = ro.provenance;
        render_curves(curves, out_path(g, "curves_D.svg"), co);
        written.push_back(out_path(g, "error_D.png").string());
        written.push_back(out_path(g, "curves_D.svg").string());
      }
      print_json({{"written", written}});
    } else if (*serve_cmd) {
      ServicePaths paths{model_t, model_d, dataset_path};
      paths.apply_environment();
      ServiceCore core(ServiceConfig{workers});
      core.load_files(paths);
      std::cerr << "listening on " << host << ':' << port << '\n';
      serve(core, host, port);
    } else if (*run) {
      RunConfig cfg = RunConfig::from_json(read_json_file(config_path));
      if (app.get_option("--out")->count() > 0) cfg.out = g.out;
      if (app.get_option("--threads")->count() > 0) cfg.threads = g.threads;
      if (app.get_option("--seed")->count() > 0) {
        throw UsageError("set the seed in the config file so it is part of the config hash");
      }
      PipelineOptions opts;
      opts.force = g.force;
      opts.on_stage = [](const StageOutcome& o) {
        std::cerr << (o.skipped ? "skip  " : "run   ") << o.name << '\n';
      };
      const auto outcomes = run_pipeline(cfg, opts);
      Json stages = Json::array();
      for (const auto& o : outcomes) stages.push_back({{"stage", o.name}, {"skipped", o.skipped}});
      print_json({{"config_hash", cfg.hash()}, {"out", cfg.out.string()}, {"stages", stages}});
    }
  } catch (const Error& e) {
    std::cerr << Json{{"error", to_string(e.kind())}, {"message", e.what()}}.dump() << '\n';
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << Json{{"error", "IoError"}, {"message", e.what()}}.dump() << '\n';
    return 2;
  }
  return 0;
}
