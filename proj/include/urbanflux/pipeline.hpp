#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "urbanflux/features.hpp"
#include "urbanflux/ingest.hpp"
#include "urbanflux/json_io.hpp"
#include "urbanflux/nets.hpp"
#include "urbanflux/optimizer.hpp"
#include "urbanflux/synth.hpp"

namespace urbanflux {

struct SynthInput {
  std::uint64_t seed = 7;
  double noise = 0.0;
  std::size_t n_poi = 9000;
  int n_days = 30;
};

struct FileInput {
  std::filesystem::path poi;
  std::filesystem::path orders;
  int days = 30;
  OrderPolicy order_policy = OrderPolicy::Strict;
};

struct NetStage {
  MlpSpec spec;
  TrainConfig train;
  std::uint64_t init_seed = 0;
};

struct TransferStage {
  double shift = 0.6;
  std::uint64_t seed = 8;
};

/// Everything one pipeline run needs. Parsed from JSON; see README for the
/// schema.
struct RunConfig {
  std::uint64_t seed = 7;
  std::filesystem::path out = "out";
  unsigned threads = 1;
  GridSpec grid;
  std::optional<SynthInput> synth;
  std::optional<FileInput> files;
  CleanPolicy clean;
  double train_share = 0.8;
  std::uint64_t split_seed = 1;
  NetStage net_t;
  NetStage net_d;
  bool baselines = false;
  std::optional<TransferStage> transfer;
  std::optional<Json> scenario;
  std::string ramp = "inferno";
  std::size_t cell_px = 4;

  /// The parsed document, used for hashing.
  Json source;

  /// ConfigError naming the first missing or invalid field.
  static RunConfig from_json(const Json& j);
  /// FNV-1a 64 of the canonical config, excluding `out` and `threads`.
  std::string hash() const;
  Provenance provenance() const;
};

/// 64-bit FNV-1a as 16 lowercase hex digits.
std::string fnv1a_hex(const std::string& bytes);

/// Synth spec for a synthetic input section, covering `grid`.
SynthSpec synth_spec(const SynthInput& in, const GridSpec& grid);

struct StageOutcome {
  std::string name;
  bool skipped = false;
  std::vector<std::filesystem::path> outputs;
};

struct PipelineOptions {
  bool force = false;
  /// Called when a stage starts or is skipped.
  std::function<void(const StageOutcome&)> on_stage;
};

/// Runs synth, sample, train, eval, transfer, optimize and render in that
/// order. A stage whose outputs all exist is skipped unless `force`.
/// Stage errors are rethrown with the stage name prefixed.
std::vector<StageOutcome> run_pipeline(const RunConfig& cfg, const PipelineOptions& opts = {});

/// Raw samples, cleaning and normalization in one step.
struct SampleResult {
  std::vector<RawSample> raw;
  CleanResult cleaned;
  Dataset dataset;
};

SampleResult sample_city(const GridSpec& grid, std::span<const PoiRecord> pois, std::span<const TripOrder> orders,
                         int days, const CleanPolicy& policy, unsigned threads);

}  // namespace urbanflux
