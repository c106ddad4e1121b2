#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "helpers.hpp"
#include "urbanflux/errors.hpp"
#include "urbanflux/model_io.hpp"
#include "urbanflux/optimizer.hpp"
#include "urbanflux/pipeline.hpp"

using namespace urbanflux;
namespace fs = std::filesystem;

namespace {

Json small_config(const fs::path& out) {
  const GeoPoint lo{110.30, 19.98};
  const GeoPoint hi = unproject({2400.0, 2000.0}, lo);
  return Json{
      {"seed", 11},
      {"out", out.string()},
      {"grid", {{"min", lo}, {"max", hi}, {"step_m", 200.0}, {"buffer_radius_m", 600.0}}},
      {"input", {{"synth", {{"n_poi", 900}, {"n_days", 6}, {"noise", 0.05}}}}},
      {"clean", {{"min_orders_per_hour", 0.2}}},
      {"train",
       {{"T", {{"hidden", "2x8"}, {"epochs", 30}, {"batch_size", 16}, {"learning_rate", 0.01}, {"optimizer", "adam"}}},
        {"D", {{"hidden", "2x12"}, {"epochs", 30}, {"batch_size", 16}, {"learning_rate", 0.01}, {"optimizer", "adam"}}}}},
      {"transfer", {{"shift", 0.6}}},
      {"optimize", {{"sample_id", 0}, {"delta_bound", 4}, {"ga", {{"population", 12}, {"generations", 6}, {"seed", 2}}}}},
      {"render", {{"cell_px", 2}}}};
}

std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file()) files[fs::relative(e.path(), dir).string()] = testutil::read_file(e.path());
  }
  return files;
}

struct CliResult {
  int code = -1;
  std::string out;
  std::string err;
};

CliResult cli(const testutil::TempDir& dir, const std::string& args) {
  const fs::path out = dir / "cli_stdout.txt";
  const fs::path err = dir / "cli_stderr.txt";
  const std::string cmd = std::string("'") + URBANFLUX_CLI + "' " + args + " > '" + out.string() + "' 2> '" +
                          err.string() + "'";
  const int status = std::system(cmd.c_str());
  CliResult r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = testutil::read_file(out);
  r.err = testutil::read_file(err);
  return r;
}

bool single_json_line(const std::string& s) {
  if (s.empty() || s.back() != '\n' || s.find('\n') != s.size() - 1) return false;
  const Json j = Json::parse(s, nullptr, false);
  return !j.is_discarded() && j.contains("error") && j.contains("message");
}

}  // namespace

TEST_SUITE("pipeline") {

TEST_CASE("config errors name the missing field") {
  testutil::TempDir dir;
  Json j = small_config(dir.path());
  j.erase("grid");
  try {
    RunConfig::from_json(j);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("grid") != std::string::npos);
  }
  j = small_config(dir.path());
  j.erase("input");
  CHECK_THROWS_WITH_AS(RunConfig::from_json(j), doctest::Contains("input"), ConfigError);
  j = small_config(dir.path());
  j["render"]["ramp"] = "rainbow";
  CHECK_THROWS_AS(RunConfig::from_json(j), ConfigError);
  j = small_config(dir.path());
  j["split"] = {{"train_share", 1.0}};
  CHECK_THROWS_AS(RunConfig::from_json(j), ConfigError);
  j = small_config(dir.path());
  j["train"]["T"]["hidden"] = "0x4";
  CHECK_THROWS(RunConfig::from_json(j));
  CHECK_THROWS_AS(RunConfig::from_json(Json::array()), ConfigError);
}

TEST_CASE("config hash ignores output location and threads") {
  CHECK(fnv1a_hex("") == "cbf29ce484222325");
  CHECK(fnv1a_hex("a") == "af63dc4c8601ec8c");
  testutil::TempDir a, b;
  Json ja = small_config(a.path());
  Json jb = small_config(b.path());
  jb["threads"] = 3;
  CHECK(RunConfig::from_json(ja).hash() == RunConfig::from_json(jb).hash());
  jb["seed"] = 12;
  CHECK(RunConfig::from_json(ja).hash() != RunConfig::from_json(jb).hash());
  const RunConfig c = RunConfig::from_json(ja);
  CHECK(c.provenance().seed == 11);
  CHECK(c.net_t.spec.label() == "17-8x2-1 sigmoid");
  CHECK(c.net_d.train.optimizer == OptimizerKind::Adam);
}

TEST_CASE("pipeline reruns are byte identical and skip finished stages") {
  testutil::TempDir a, b;
  const RunConfig ca = RunConfig::from_json(small_config(a.path()));
  Json jb = small_config(b.path());
  jb["threads"] = 2;
  const RunConfig cb = RunConfig::from_json(jb);

  const auto first = run_pipeline(ca);
  REQUIRE(first.size() == 7);
  for (const auto& o : first) CHECK_FALSE(o.skipped);
  run_pipeline(cb);

  const auto sa = snapshot(a.path());
  const auto sb = snapshot(b.path());
  REQUIRE(sa.size() == sb.size());
  for (const char* f : {"dataset.csv", "raw_samples.csv", "model_T.json", "model_D.json", "report.json",
                        "transfer.json", "optimize.json", "heatmap_vht.png", "error_D.png", "curves_D.svg",
                        "training.svg", "surface_D.csv"}) {
    REQUIRE_MESSAGE(sa.count(f) == 1, f);
  }
  for (const auto& [name, bytes] : sa) {
    REQUIRE_MESSAGE(sb.count(name) == 1, name);
    CHECK_MESSAGE(bytes == sb.at(name), name);
  }

  std::vector<std::string> seen;
  PipelineOptions opts;
  opts.on_stage = [&](const StageOutcome& o) { seen.push_back(o.name); };
  const auto again = run_pipeline(ca, opts);
  for (const auto& o : again) CHECK(o.skipped);
  CHECK(seen == std::vector<std::string>{"synth", "sample", "train", "eval", "transfer", "optimize", "render"});
  CHECK(snapshot(a.path()) == sa);

  fs::remove(a / "report.json");
  const auto partial = run_pipeline(ca);
  for (const auto& o : partial) CHECK(o.skipped == (o.name != "eval"));
  CHECK(snapshot(a.path()) == sa);

  opts.force = true;
  opts.on_stage = nullptr;
  const auto forced = run_pipeline(ca, opts);
  for (const auto& o : forced) CHECK_FALSE(o.skipped);
  CHECK(snapshot(a.path()) == sa);

  const Json opt = read_json_file(a / "optimize.json");
  const auto best = opt["best_counts"].get<std::vector<std::int64_t>>();
  const auto base = opt["base_counts"].get<std::vector<std::int64_t>>();
  CHECK(std::accumulate(best.begin(), best.end(), std::int64_t{0}) ==
        std::accumulate(base.begin(), base.end(), std::int64_t{0}));
  const Json report = read_json_file(a / "report.json");
  CHECK(report["provenance"]["config_hash"] == ca.hash());
}

TEST_CASE("stage errors carry the stage name") {
  testutil::TempDir dir;
  Json j = small_config(dir.path());
  j["optimize"]["sample_id"] = 999999;
  const RunConfig c = RunConfig::from_json(j);
  CHECK_THROWS_WITH_AS(run_pipeline(c), doctest::Contains("stage optimize"), ConfigError);
}

}  // TEST_SUITE

TEST_SUITE("cli") {

TEST_CASE("unknown flag exits 1 with a JSON error line") {
  testutil::TempDir dir;
  const CliResult r = cli(dir, "synth --no-such-flag");
  CHECK(r.code == 1);
  CHECK(single_json_line(r.err));
  CHECK(cli(dir, "frobnicate").code == 1);
}

TEST_CASE("run with a config missing the grid exits 1 naming the field") {
  testutil::TempDir dir;
  Json j = small_config(dir / "out");
  j.erase("grid");
  write_json_file(dir / "cfg.json", j);
  const CliResult r = cli(dir, "run --config '" + (dir / "cfg.json").string() + "'");
  CHECK(r.code == 1);
  REQUIRE(single_json_line(r.err));
  CHECK(Json::parse(r.err)["message"].get<std::string>().find("grid") != std::string::npos);
}

TEST_CASE("run skips finished stages unless forced") {
  testutil::TempDir dir;
  write_json_file(dir / "cfg.json", small_config(dir / "out"));
  const std::string args = "run --config '" + (dir / "cfg.json").string() + "'";
  const CliResult first = cli(dir, args);
  REQUIRE(first.code == 0);
  const Json summary = Json::parse(first.out);
  for (const auto& s : summary["stages"]) CHECK(s["skipped"] == false);
  const CliResult second = cli(dir, args);
  REQUIRE(second.code == 0);
  for (const auto& s : Json::parse(second.out)["stages"]) CHECK(s["skipped"] == true);
  CHECK(second.err.find("skip  train") != std::string::npos);
  const CliResult forced = cli(dir, "--force " + args);
  REQUIRE(forced.code == 0);
  for (const auto& s : Json::parse(forced.out)["stages"]) CHECK(s["skipped"] == false);
  CHECK(cli(dir, "--seed 3 " + args).code == 1);
}

TEST_CASE("train then predict round trips through the model files") {
  testutil::TempDir dir;
  const std::string out = "'" + (dir / "w").string() + "'";
  const GeoPoint lo{110.30, 19.98};
  const GeoPoint hi = unproject({2000.0, 1600.0}, lo);
  char bbox[128];
  std::snprintf(bbox, sizeof bbox, "%.9f,%.9f,%.9f,%.9f", lo.lon, lo.lat, hi.lon, hi.lat);
  REQUIRE(cli(dir, "--out " + out + " synth --n-poi 600 --days 4 --bbox " + bbox).code == 0);
  const std::string w = (dir / "w").string();
  const CliResult s = cli(dir, "--out " + out + " sample --poi '" + w + "/poi.csv' --orders '" + w +
                                   "/orders.csv' --bbox " + bbox + " --radius 500 --min-orders-per-hour 0.1");
  REQUIRE_MESSAGE(s.code == 0, s.err);
  const std::string ds = "'" + w + "/dataset.csv'";
  REQUIRE(cli(dir, "--out " + out + " train --dataset " + ds + " --kind T --hidden 2x8 --epochs 20 --optimizer adam --lr 0.01").code == 0);
  REQUIRE(cli(dir, "--out " + out + " train --dataset " + ds + " --kind D --hidden 2x8 --epochs 20 --optimizer adam --lr 0.01").code == 0);

  const std::string models = " --model-t '" + w + "/model_T.json' --model-d '" + w + "/model_D.json'";
  const CliResult p = cli(dir, "predict" + models + " --counts 88,19,10,18,72,103,112,3,122,44,108,71,0,27,90,16");
  REQUIRE_MESSAGE(p.code == 0, p.err);
  const Json j = Json::parse(p.out);
  const auto t = load_regressor(dir / "w" / "model_T.json");
  const auto d = load_regressor(dir / "w" / "model_D.json");
  const HybridPrediction expect = predict_counts(*t, *d, {88, 19, 10, 18, 72, 103, 112, 3, 122, 44, 108, 71, 0, 27, 90, 16});
  CHECK(j["total_vht"].get<double>() == expect.total_vht);
  const auto hourly = j["hourly_vht"].get<std::vector<double>>();
  REQUIRE(hourly.size() == 24);
  for (std::size_t h = 0; h < 24; ++h) CHECK(hourly[h] == expect.hourly_vht[h]);

  const CliResult shape = cli(dir, "predict" + models + " --counts 1,2,3");
  CHECK(shape.code == 2);
  CHECK(single_json_line(shape.err));
  CHECK(cli(dir, "predict" + models + " --counts 0,0,0,0,0,0,0,0,0,0,0,0,0,0,0,0").code == 2);
  CHECK(cli(dir, "predict --model-t '" + w + "/model_D.json' --model-d '" + w +
                     "/model_D.json' --counts 1,1,1,1,1,1,1,1,1,1,1,1,1,1,1,1").code == 1);

  const CliResult missing = cli(dir, "--out " + out + " train --dataset '" + w + "/nope.csv' --kind T");
  CHECK(missing.code == 2);
  CHECK(single_json_line(missing.err));

  const CliResult diverge = cli(dir, "--out " + out + " train --dataset " + ds +
                                         " --kind D --hidden 2x8 --activation relu --lr 1e200 --epochs 5");
  CHECK(diverge.code == 3);
  CHECK(Json::parse(diverge.err)["error"] == "DivergenceError");
}

}  // TEST_SUITE
