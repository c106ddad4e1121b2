#include <doctest.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <memory>
#include <numeric>
#include <string>
#include <thread>
#include <vector>

#include "fixtures.hpp"
#include "helpers.hpp"
#include "urbanflux/errors.hpp"
#include "urbanflux/model_io.hpp"
#include "urbanflux/service.hpp"

// after Eigen headers (_res macro)
#include <httplib.h>

using namespace urbanflux;

namespace {

const std::string kNanda = R"({"counts": [88,19,10,18,72,103,112,3,122,44,108,71,0,27,90,16]})";

void load_fixture(ServiceCore& core, bool with_dataset = true) {
  std::optional<Dataset> ds;
  if (with_dataset) ds = testutil::synth_dataset();
  core.load(std::make_shared<MlpModel>(testutil::trained_t()), std::make_shared<MlpModel>(testutil::trained_d()),
            ds);
}

Json body_of(const HttpResponse& r) { return Json::parse(r.body); }

std::string small_scenario(std::uint64_t seed) {
  Json s = {{"base_counts", {88, 19, 10, 18, 72, 103, 112, 3, 122, 44, 108, 71, 0, 27, 90, 16}},
            {"delta_bound", 5},
            {"ga", {{"population", 16}, {"generations", 10}, {"seed", seed}}}};
  return s.dump();
}

Json wait_for_job(ServiceCore& core, const std::string& id) {
  core.wait_idle();
  return body_of(core.job(id));
}

}  // namespace

TEST_SUITE("service") {

TEST_CASE("health is 503 before load and lists both model versions after") {
  ServiceCore core;
  CHECK_FALSE(core.ready());
  CHECK(core.health().status == 503);
  CHECK(core.predict(kNanda).status == 503);
  load_fixture(core);
  CHECK(core.ready());
  const HttpResponse h = core.health();
  REQUIRE(h.status == 200);
  const Json j = body_of(h);
  CHECK(j["status"] == "ok");
  CHECK(j["model_versions"]["T"]["format_version"] == 1);
  CHECK(j["model_versions"]["D"]["format_version"] == 1);
  CHECK(j["model_versions"]["T"]["target"] == "total");
  CHECK(j["dataset_loaded"] == true);
}

TEST_CASE("predict returns 24 non-negative hours summing to the total") {
  ServiceCore core;
  load_fixture(core);
  const HttpResponse r = core.predict(kNanda);
  REQUIRE(r.status == 200);
  const Json j = body_of(r);
  const auto hourly = j["hourly_vht"].get<std::vector<double>>();
  REQUIRE(hourly.size() == 24);
  CHECK(std::all_of(hourly.begin(), hourly.end(), [](double v) { return v >= 0.0; }));
  const double total = j["total_vht"].get<double>();
  CHECK(std::accumulate(hourly.begin(), hourly.end(), 0.0) == doctest::Approx(total).epsilon(1e-9));
  const auto props = j["proportions"].get<std::vector<double>>();
  CHECK(std::accumulate(props.begin(), props.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("predict rejects malformed requests") {
  ServiceCore core;
  load_fixture(core);
  CHECK(core.predict(R"({"counts": [0,0,0,0,0,0,0,0,0,0,0,0,0,0,0,0]})").status == 422);
  CHECK(core.predict(R"({"counts": [1,1,1,1,1,1,1,1,1,1,1,1,1,1,1]})").status == 400);
  CHECK(core.predict(R"({"counts": [1,1,1,1,1,1,1,1,1,1,1,1,1,1,1,-1]})").status == 400);
  CHECK(core.predict(R"({"counts": [1,1,1,1,1,1,1,1,1,1,1,1,1,1,1,0.5]})").status == 400);
  CHECK(core.predict("{not json").status == 400);
  CHECK(core.predict(R"({"other": 1})").status == 400);
  const Json err = body_of(core.predict(R"({"counts": [1]})"));
  CHECK(err["error"] == "ShapeError");
}

TEST_CASE("predict p95 latency is under 50 ms") {
  ServiceCore core;
  load_fixture(core);
  std::vector<double> ms;
  for (int i = 0; i < 200; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    const HttpResponse r = core.handle("POST", "/predict", kNanda);
    ms.push_back(std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count());
    REQUIRE(r.status == 200);
  }
  std::sort(ms.begin(), ms.end());
  CHECK(ms[189] < 50.0);
}

TEST_CASE("optimize queues a job that completes with a feasible answer") {
  ServiceCore core;
  load_fixture(core, false);
  const HttpResponse r = core.optimize(small_scenario(3));
  REQUIRE(r.status == 202);
  const std::string id = body_of(r)["job_id"];
  const Json j = wait_for_job(core, id);
  REQUIRE(j["status"] == "done");
  const auto best = j["result"]["best_counts"].get<std::vector<std::int64_t>>();
  const auto base = j["result"]["base_counts"].get<std::vector<std::int64_t>>();
  REQUIRE(best.size() == 16);
  CHECK(std::accumulate(best.begin(), best.end(), std::int64_t{0}) ==
        std::accumulate(base.begin(), base.end(), std::int64_t{0}));
  CHECK(best[12] == base[12]);
  CHECK(j["result"]["best_fitness"].get<double>() <= j["result"]["base_fitness"].get<double>());
}

TEST_CASE("jobs run in submission order") {
  ServiceCore core;
  load_fixture(core, false);
  std::vector<std::string> ids;
  for (std::uint64_t s = 0; s < 4; ++s) ids.push_back(body_of(core.optimize(small_scenario(s)))["job_id"]);
  core.wait_idle();
  for (const auto& id : ids) CHECK(body_of(core.job(id))["status"] == "done");
  CHECK(ids == std::vector<std::string>{"job-1", "job-2", "job-3", "job-4"});
}

TEST_CASE("optimize validates the scenario before queueing") {
  ServiceCore core;
  load_fixture(core, false);
  CHECK(core.optimize(R"({"delta_bound": 5})").status == 400);
  CHECK(core.optimize(R"({"base_counts": [1,2,3]})").status == 400);
  CHECK(core.optimize("nope").status == 400);
  CHECK(core.job("job-1").status == 404);
  CHECK(core.job("missing").status == 404);
  CHECK(core.handle("GET", "/jobs/none", "").status == 404);
}

TEST_CASE("dataset summary and sample lookup") {
  ServiceCore core;
  CHECK(core.dataset_summary().status == 503);
  load_fixture(core);
  const Dataset& ds = testutil::synth_dataset();
  const Json s = body_of(core.dataset_summary());
  CHECK(s["sample_count"] == ds.size());
  CHECK(s["category_totals"].size() == 16);
  const std::size_t id = ds.rows[3].sample_id;
  const HttpResponse r = core.handle("GET", "/samples/" + std::to_string(id), "");
  REQUIRE(r.status == 200);
  const Json j = body_of(r);
  CHECK(j["sample_id"] == id);
  CHECK(j["ground_truth"]["hourly"].size() == 24);
  CHECK(core.sample("abc").status == 404);
  CHECK(core.sample("99999999").status == 404);
  CHECK(core.handle("GET", "/nowhere", "").status == 404);

  ServiceCore bare;
  load_fixture(bare, false);
  CHECK(bare.dataset_summary().status == 404);
}

TEST_CASE("api numbers are rounded to 12 significant digits") {
  const Json in = {{"a", 0.1234567890123456}, {"b", {1.0 / 3.0, 7}}, {"c", "text"}, {"d", 123456789.987654321}};
  const Json out = round_for_api(in);
  CHECK(out["a"].get<double>() == 0.123456789012);
  CHECK(out["b"][0].get<double>() == 0.333333333333);
  CHECK(out["b"][1] == 7);
  CHECK(out["c"] == "text");
  CHECK(out["d"].get<double>() == 123456789.988);
  CHECK(round_for_api(Json(std::nan(""))).is_null());
}

TEST_CASE("load rejects mismatched models") {
  ServiceCore core;
  auto t = std::make_shared<MlpModel>(testutil::trained_t());
  auto d = std::make_shared<MlpModel>(testutil::trained_d());
  CHECK_THROWS_AS(core.load(d, d), ConfigError);
  CHECK_THROWS_AS(core.load(t, nullptr), ConfigError);
  auto moved = std::make_shared<MlpModel>(*d);
  NormalizationInfo other = d->norm_info();
  other.density_max *= 2.0;
  moved->set_norm_info(other);
  CHECK_THROWS_AS(core.load(t, moved), NormMismatch);
}

TEST_CASE("model paths come from the environment when not given") {
  testutil::TempDir dir;
  save_regressor(dir / "t.json", testutil::trained_t());
  save_regressor(dir / "d.json", testutil::trained_d());
  ::setenv("URBANFLUX_MODEL_T", (dir / "t.json").c_str(), 1);
  ::setenv("URBANFLUX_MODEL_D", (dir / "d.json").c_str(), 1);
  ::setenv("URBANFLUX_DATASET", "", 1);
  ServicePaths paths;
  paths.model_d = dir / "explicit.json";
  paths.apply_environment();
  CHECK(paths.model_t == dir / "t.json");
  CHECK(paths.model_d == dir / "explicit.json");
  CHECK(paths.dataset.empty());
  paths.model_d.clear();
  paths.apply_environment();
  ServiceCore core;
  core.load_files(paths);
  CHECK(core.health().status == 200);
  CHECK(core.predict(kNanda).status == 200);
  ::unsetenv("URBANFLUX_MODEL_T");
  ::unsetenv("URBANFLUX_MODEL_D");
  ::unsetenv("URBANFLUX_DATASET");
  ServicePaths none;
  none.apply_environment();
  ServiceCore empty;
  CHECK_THROWS_AS(empty.load_files(none), ConfigError);
}

TEST_CASE("http round trip over a local port") {
  ServiceCore core;
  ApiServer server(core);
  const int port = server.start("127.0.0.1", 0);
  REQUIRE(port > 0);
  httplib::Client client("127.0.0.1", port);
  auto before = client.Get("/health");
  REQUIRE(before);
  CHECK(before->status == 503);
  load_fixture(core);
  auto health = client.Get("/health");
  REQUIRE(health);
  CHECK(health->status == 200);
  CHECK(health->get_header_value("Access-Control-Allow-Origin") == "*");
  auto pred = client.Post("/predict", kNanda, "application/json");
  REQUIRE(pred);
  CHECK(pred->status == 200);
  CHECK(Json::parse(pred->body)["hourly_vht"].size() == 24);
  auto bad = client.Post("/predict", R"({"counts": [1,2]})", "application/json");
  REQUIRE(bad);
  CHECK(bad->status == 400);
  auto job = client.Post("/optimize", small_scenario(1), "application/json");
  REQUIRE(job);
  CHECK(job->status == 202);
  const std::string id = Json::parse(job->body)["job_id"];
  core.wait_idle();
  auto done = client.Get("/jobs/" + id);
  REQUIRE(done);
  CHECK(Json::parse(done->body)["status"] == "done");
  auto missing = client.Get("/jobs/job-999");
  REQUIRE(missing);
  CHECK(missing->status == 404);
  server.stop();
}

}  // TEST_SUITE
