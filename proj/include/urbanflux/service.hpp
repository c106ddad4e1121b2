#pragma once

#include <condition_variable>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "urbanflux/features.hpp"
#include "urbanflux/json_io.hpp"
#include "urbanflux/regressor.hpp"

namespace urbanflux {

struct HttpResponse {
  int status = 200;
  std::string body;
};

struct ServiceConfig {
  /// Optimization jobs allowed to run at once.
  std::size_t job_workers = 1;
};

struct ServicePaths {
  std::filesystem::path model_t;
  std::filesystem::path model_d;
  std::filesystem::path dataset;  ///< optional

  /// Fills empty fields from URBANFLUX_MODEL_T, URBANFLUX_MODEL_D and
  /// URBANFLUX_DATASET.
  void apply_environment();
};

/// Request handling without sockets. Models and dataset are immutable once
/// loaded; optimization jobs run on a FIFO queue.
class ServiceCore {
 public:
  explicit ServiceCore(ServiceConfig cfg = {});
  ~ServiceCore();
  ServiceCore(const ServiceCore&) = delete;
  ServiceCore& operator=(const ServiceCore&) = delete;

  void load(std::shared_ptr<const Regressor> total_model, std::shared_ptr<const Regressor> hourly_model,
            std::optional<Dataset> dataset = std::nullopt, int format_version_t = 1, int format_version_d = 1);
  void load_files(const ServicePaths& paths);
  bool ready() const;

  HttpResponse health() const;
  HttpResponse predict(const std::string& body) const;
  HttpResponse optimize(const std::string& body);
  HttpResponse job(const std::string& id) const;
  HttpResponse dataset_summary() const;
  HttpResponse sample(const std::string& id) const;

  /// Routes a request by method and path.
  HttpResponse handle(const std::string& method, const std::string& path, const std::string& body);

  /// Blocks until every queued job has finished.
  void wait_idle();

 private:
  enum class JobStatus { Queued, Running, Done, Failed };
  struct Job {
    std::string id;
    Json scenario;
    JobStatus status = JobStatus::Queued;
    Json result;
    std::string error;
  };
  struct Models {
    std::shared_ptr<const Regressor> total;
    std::shared_ptr<const Regressor> hourly;
    std::shared_ptr<const Dataset> dataset;
    int version_t = 1;
    int version_d = 1;
  };

  std::shared_ptr<const Models> models() const;
  void worker_loop();
  void run_job(const std::string& id);
  static const char* status_name(JobStatus s);
  Json job_json(const Job& job) const;

  ServiceConfig cfg_;
  mutable std::mutex models_mutex_;
  std::shared_ptr<const Models> models_;

  mutable std::mutex jobs_mutex_;
  std::condition_variable jobs_cv_;
  std::condition_variable idle_cv_;
  std::map<std::string, Job> jobs_;
  std::deque<std::string> queue_;
  std::size_t running_ = 0;
  std::uint64_t next_id_ = 1;
  bool stopping_ = false;
  std::vector<std::thread> workers_;
};

/// Rounds every floating-point number in `j` to 12 significant digits.
Json round_for_api(const Json& j);

/// HTTP front end for a ServiceCore, running on its own thread.
class ApiServer {
 public:
  explicit ApiServer(ServiceCore& core);
  ~ApiServer();
  ApiServer(const ApiServer&) = delete;
  ApiServer& operator=(const ApiServer&) = delete;

  /// Binds and starts listening. Port 0 picks a free port; returns the bound
  /// port. IoError if the address cannot be bound.
  int start(const std::string& host, int port);
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Serves `core` over HTTP until the process is stopped.
void serve(ServiceCore& core, const std::string& host, int port);

}  // namespace urbanflux
