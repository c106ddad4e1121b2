#include "urbanflux/service.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <limits>

#include "urbanflux/errors.hpp"
#include "urbanflux/model_io.hpp"
#include "urbanflux/nets.hpp"
#include "urbanflux/optimizer.hpp"

// keep after Eigen headers (_res macro)
#include <httplib.h>

namespace urbanflux {

namespace {

HttpResponse reply(int status, const Json& body) { return {status, round_for_api(body).dump()}; }

HttpResponse error_reply(int status, const std::string& kind, const std::string& message) {
  return {status, Json{{"error", kind}, {"message", message}}.dump()};
}

std::optional<std::size_t> parse_index(const std::string& s) {
  std::size_t v = 0;
  const auto* end = s.data() + s.size();
  const auto [p, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || p != end || s.empty()) return std::nullopt;
  return v;
}

int file_format_version(const std::filesystem::path& path) {
  const Json j = read_json_file(path);
  return j.value("format_version", 0);
}

}  // namespace

Json round_for_api(const Json& j) {
  if (j.is_number_float()) {
    const double v = j.get<double>();
    return std::isfinite(v) ? Json(round_significant(v, 12)) : Json(nullptr);
  }
  if (j.is_array()) {
    Json out = Json::array();
    for (const auto& e : j) out.push_back(round_for_api(e));
    return out;
  }
  if (j.is_object()) {
    Json out = Json::object();
    for (auto it = j.begin(); it != j.end(); ++it) out[it.key()] = round_for_api(it.value());
    return out;
  }
  return j;
}

void ServicePaths::apply_environment() {
  auto from_env = [](std::filesystem::path& p, const char* name) {
    if (!p.empty()) return;
    if (const char* v = std::getenv(name); v && *v) p = v;
  };
  from_env(model_t, "URBANFLUX_MODEL_T");
  from_env(model_d, "URBANFLUX_MODEL_D");
  from_env(dataset, "URBANFLUX_DATASET");
}

ServiceCore::ServiceCore(ServiceConfig cfg) : cfg_(cfg) {
  if (cfg_.job_workers < 1) throw ConfigError("the service needs at least one job worker");
  for (std::size_t i = 0; i < cfg_.job_workers; ++i) workers_.emplace_back([this] { worker_loop(); });
}

ServiceCore::~ServiceCore() {
  {
    std::lock_guard lock(jobs_mutex_);
    stopping_ = true;
  }
  jobs_cv_.notify_all();
  for (auto& t : workers_) t.join();
}

void ServiceCore::load(std::shared_ptr<const Regressor> total_model, std::shared_ptr<const Regressor> hourly_model,
                       std::optional<Dataset> dataset, int format_version_t, int format_version_d) {
  if (!total_model || !hourly_model) throw ConfigError("both models are required");
  if (total_model->target() != Target::Total) throw ConfigError("the T model must predict the total");
  if (hourly_model->target() != Target::Hourly) throw ConfigError("the D model must predict hourly shares");
  if (!(total_model->norm_info() == hourly_model->norm_info())) {
    throw NormMismatch("T and D models were trained with different normalization");
  }
  auto m = std::make_shared<Models>();
  m->total = std::move(total_model);
  m->hourly = std::move(hourly_model);
  if (dataset) m->dataset = std::make_shared<const Dataset>(std::move(*dataset));
  m->version_t = format_version_t;
  m->version_d = format_version_d;
  std::lock_guard lock(models_mutex_);
  models_ = std::move(m);
}

void ServiceCore::load_files(const ServicePaths& paths) {
  if (paths.model_t.empty() || paths.model_d.empty()) {
    throw ConfigError("model paths missing (flags or URBANFLUX_MODEL_T / URBANFLUX_MODEL_D)");
  }
  std::shared_ptr<const Regressor> t = load_regressor(paths.model_t);
  std::shared_ptr<const Regressor> d = load_regressor(paths.model_d);
  std::optional<Dataset> ds;
  if (!paths.dataset.empty()) ds = read_dataset(paths.dataset);
  load(std::move(t), std::move(d), std::move(ds), file_format_version(paths.model_t),
       file_format_version(paths.model_d));
}

bool ServiceCore::ready() const { return models() != nullptr; }

std::shared_ptr<const ServiceCore::Models> ServiceCore::models() const {
  std::lock_guard lock(models_mutex_);
  return models_;
}

HttpResponse ServiceCore::health() const {
  const auto m = models();
  if (!m) return reply(503, Json{{"status", "loading"}});
  auto describe = [](const Regressor& r, int version) {
    return Json{{"format_version", version},
                {"algorithm", r.algorithm()},
                {"target", to_string(r.target())},
                {"provenance", provenance_of(r)}};
  };
  return reply(200, Json{{"status", "ok"},
                         {"model_versions", {{"T", describe(*m->total, m->version_t)}, {"D", describe(*m->hourly, m->version_d)}}},
                         {"dataset_loaded", m->dataset != nullptr}});
}

HttpResponse ServiceCore::predict(const std::string& body) const {
  const auto m = models();
  if (!m) return error_reply(503, "NotReady", "models are not loaded");
  Json req = Json::parse(body, nullptr, false);
  if (req.is_discarded()) return error_reply(400, "ParseError", "request body is not JSON");
  if (!req.is_object() || !req.contains("counts") || !req["counts"].is_array()) {
    return error_reply(400, "ShapeError", "expected {\"counts\": [16 integers]}");
  }
  const Json& c = req["counts"];
  if (c.size() != kCategoryCount) {
    return error_reply(400, "ShapeError", "expected 16 counts, got " + std::to_string(c.size()));
  }
  PoiCounts counts{};
  for (std::size_t i = 0; i < kCategoryCount; ++i) {
    if (!c[i].is_number_integer()) return error_reply(400, "ShapeError", "count " + std::to_string(i) + " is not an integer");
    const auto v = c[i].get<std::int64_t>();
    if (v < 0) return error_reply(400, "NegativeCount", "count " + std::to_string(i) + " is negative");
    counts[i] = v;
  }
  if (std::all_of(counts.begin(), counts.end(), [](std::int64_t v) { return v == 0; })) {
    return error_reply(422, "ZeroCounts", "all counts are zero so proportions are undefined");
  }
  const HybridPrediction p = predict_counts(*m->total, *m->hourly, counts);
  return reply(200, to_json(p));
}

HttpResponse ServiceCore::optimize(const std::string& body) {
  const auto m = models();
  if (!m) return error_reply(503, "NotReady", "models are not loaded");
  Json req = Json::parse(body, nullptr, false);
  if (req.is_discarded()) return error_reply(400, "ParseError", "request body is not JSON");
  const Json scenario_json = req.is_object() && req.contains("scenario") ? req["scenario"] : req;
  try {
    const Scenario s = scenario_from_json(scenario_json);
    s.constraints.check_satisfiable();
    s.ga.validate();
  } catch (const Error& e) {
    return error_reply(400, to_string(e.kind()), e.what());
  }
  std::string id;
  {
    std::lock_guard lock(jobs_mutex_);
    id = "job-" + std::to_string(next_id_++);
    Job job;
    job.id = id;
    job.scenario = scenario_json;
    jobs_.emplace(id, std::move(job));
    queue_.push_back(id);
  }
  jobs_cv_.notify_one();
  return reply(202, Json{{"job_id", id}, {"status", "queued"}});
}

const char* ServiceCore::status_name(JobStatus s) {
  switch (s) {
    case JobStatus::Queued: return "queued";
    case JobStatus::Running: return "running";
    case JobStatus::Done: return "done";
    case JobStatus::Failed: return "failed";
  }
  return "failed";
}

Json ServiceCore::job_json(const Job& job) const {
  Json j = {{"id", job.id}, {"status", status_name(job.status)}, {"scenario", job.scenario}};
  if (job.status == JobStatus::Done) j["result"] = job.result;
  if (job.status == JobStatus::Failed) j["error"] = job.error;
  return j;
}

HttpResponse ServiceCore::job(const std::string& id) const {
  std::lock_guard lock(jobs_mutex_);
  const auto it = jobs_.find(id);
  if (it == jobs_.end()) return error_reply(404, "NotFound", "no job '" + id + "'");
  return reply(200, job_json(it->second));
}

void ServiceCore::worker_loop() {
  for (;;) {
    std::string id;
    {
      std::unique_lock lock(jobs_mutex_);
      jobs_cv_.wait(lock, [this] { return stopping_ || !queue_.empty(); });
      if (stopping_) return;
      id = queue_.front();
      queue_.pop_front();
      jobs_.at(id).status = JobStatus::Running;
      ++running_;
    }
    run_job(id);
    {
      std::lock_guard lock(jobs_mutex_);
      --running_;
    }
    idle_cv_.notify_all();
  }
}

void ServiceCore::run_job(const std::string& id) {
  Json scenario_json;
  {
    std::lock_guard lock(jobs_mutex_);
    scenario_json = jobs_.at(id).scenario;
  }
  Json result;
  std::string error;
  try {
    const auto m = models();
    const Scenario s = scenario_from_json(scenario_json);
    const GaResult r = s.grouped ? run_grouped_ga(s.constraints, s.ga, *m->total, *m->hourly, s.objective, s.groups)
                                 : run_ga(s.constraints, s.ga, *m->total, *m->hourly, s.objective);
    result = to_json(r);
  } catch (const std::exception& e) {
    error = e.what();
  }
  std::lock_guard lock(jobs_mutex_);
  Job& job = jobs_.at(id);
  if (error.empty()) {
    job.result = std::move(result);
    job.status = JobStatus::Done;
  } else {
    job.error = std::move(error);
    job.status = JobStatus::Failed;
  }
}

void ServiceCore::wait_idle() {
  std::unique_lock lock(jobs_mutex_);
  idle_cv_.wait(lock, [this] { return queue_.empty() && running_ == 0; });
}

HttpResponse ServiceCore::dataset_summary() const {
  const auto m = models();
  if (!m) return error_reply(503, "NotReady", "models are not loaded");
  if (!m->dataset) return error_reply(404, "NotFound", "no dataset loaded");
  const Dataset& ds = *m->dataset;
  std::array<std::int64_t, kCategoryCount> totals{};
  double min_lon = std::numeric_limits<double>::infinity(), min_lat = min_lon;
  double max_lon = -min_lon, max_lat = -min_lon;
  for (const auto& r : ds.rows) {
    for (std::size_t i = 0; i < kCategoryCount; ++i) totals[i] += r.raw.poi_counts[i];
    min_lon = std::min(min_lon, r.center.lon);
    min_lat = std::min(min_lat, r.center.lat);
    max_lon = std::max(max_lon, r.center.lon);
    max_lat = std::max(max_lat, r.center.lat);
  }
  Json bbox = nullptr;
  if (ds.grid) {
    bbox = {{"min", ds.grid->min}, {"max", ds.grid->max}};
  } else if (!ds.empty()) {
    bbox = {{"min", GeoPoint{min_lon, min_lat}}, {"max", GeoPoint{max_lon, max_lat}}};
  }
  return reply(200, Json{{"sample_count", ds.size()},
                         {"bbox", bbox},
                         {"norm_info", ds.norm},
                         {"category_totals", totals},
                         {"provenance", ds.provenance}});
}

HttpResponse ServiceCore::sample(const std::string& id) const {
  const auto m = models();
  if (!m) return error_reply(503, "NotReady", "models are not loaded");
  if (!m->dataset) return error_reply(404, "NotFound", "no dataset loaded");
  const auto idx = parse_index(id);
  const DatasetRow* row = idx ? m->dataset->find(*idx) : nullptr;
  if (!row) return error_reply(404, "NotFound", "no sample '" + id + "'");
  Json j = {{"sample_id", row->sample_id},
            {"center", row->center},
            {"poi_counts", row->raw.poi_counts},
            {"env", {{"density_norm", row->env.density_norm}, {"proportions", row->env.proportions}}},
            {"demand_defined", row->demand_defined},
            {"ground_truth",
             {{"total_norm", row->demand.total_norm},
              {"hourly", row->demand.hourly},
              {"vht_total", row->raw.vht_total},
              {"vht_by_hour", row->raw.vht_by_hour}}}};
  return reply(200, j);
}

HttpResponse ServiceCore::handle(const std::string& method, const std::string& path, const std::string& body) {
  try {
    if (method == "GET" && path == "/health") return health();
    if (method == "POST" && path == "/predict") return predict(body);
    if (method == "POST" && path == "/optimize") return optimize(body);
    if (method == "GET" && path.rfind("/jobs/", 0) == 0) return job(path.substr(6));
    if (method == "GET" && path == "/dataset/summary") return dataset_summary();
    if (method == "GET" && path.rfind("/samples/", 0) == 0) return sample(path.substr(9));
    return error_reply(404, "NotFound", method + " " + path);
  } catch (const Error& e) {
    return error_reply(400, to_string(e.kind()), e.what());
  } catch (const std::exception& e) {
    return error_reply(500, "Internal", e.what());
  }
}

namespace {

void install_routes(httplib::Server& server, ServiceCore& core) {
  auto forward = [&core](const httplib::Request& req, httplib::Response& res) {
    const HttpResponse r = core.handle(req.method, req.path, req.body);
    res.status = r.status;
    res.set_header("Access-Control-Allow-Origin", "*");
    res.set_content(r.body, "application/json");
  };
  server.Get("/health", forward);
  server.Post("/predict", forward);
  server.Post("/optimize", forward);
  server.Get(R"(/jobs/([^/]+))", forward);
  server.Get("/dataset/summary", forward);
  server.Get(R"(/samples/([^/]+))", forward);
  server.Options(R"(.*)", [](const httplib::Request&, httplib::Response& res) {
    res.set_header("Access-Control-Allow-Origin", "*");
    res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
    res.set_header("Access-Control-Allow-Headers", "Content-Type");
    res.status = 204;
  });
}

}  // namespace

struct ApiServer::Impl {
  explicit Impl(ServiceCore& c) : core(c) {}
  ServiceCore& core;
  httplib::Server server;
  std::thread thread;
};

ApiServer::ApiServer(ServiceCore& core) : impl_(std::make_unique<Impl>(core)) {
  install_routes(impl_->server, core);
}

ApiServer::~ApiServer() { stop(); }

int ApiServer::start(const std::string& host, int port) {
  if (impl_->thread.joinable()) throw ConfigError("server already started");
  int bound = port;
  if (port == 0) {
    bound = impl_->server.bind_to_any_port(host);
  } else if (!impl_->server.bind_to_port(host, port)) {
    bound = -1;
  }
  if (bound < 0) throw IoError("cannot listen on " + host + ":" + std::to_string(port));
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  return bound;
}

void ApiServer::stop() {
  if (!impl_ || !impl_->thread.joinable()) return;
  impl_->server.stop();
  impl_->thread.join();
}

void serve(ServiceCore& core, const std::string& host, int port) {
  httplib::Server server;
  install_routes(server, core);
  if (!server.listen(host, port)) throw IoError("cannot listen on " + host + ":" + std::to_string(port));
}

}  // namespace urbanflux
