#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "urbanflux/geo_grid.hpp"
#include "urbanflux/ingest.hpp"

namespace urbanflux {

inline constexpr std::size_t kEnvWidth = kCategoryCount + 1;  // density + 16 proportions
inline constexpr std::size_t kDemandWidth = kHours + 1;       // total + 24 hourly shares

using PoiCounts = std::array<std::int64_t, kCategoryCount>;
using HourlyVector = std::array<double, kHours>;
using EnvVector = std::array<double, kEnvWidth>;

/// Where an artifact came from; embedded in every file the pipeline writes.
struct Provenance {
  std::string config_hash;
  std::uint64_t seed = 0;
  friend bool operator==(const Provenance&, const Provenance&) = default;
};

/// Unnormalized counts and demand for one buffer.
struct RawSample {
  std::size_t sample_id = 0;  ///< index of the center in the lattice
  GeoPoint center;
  PoiCounts poi_counts{};
  std::int64_t density_proxy = 0;  ///< sum of poi_counts
  HourlyVector vht_by_hour{};      ///< daily-average VHT per pickup hour, hours
  double vht_total = 0.0;          ///< daily-average VHT, hours
  double orders_per_day = 0.0;
};

struct EnvFeatures {
  double density_norm = 0.0;
  std::array<double, kCategoryCount> proportions{};

  /// Model input layout: density first, then the 16 proportions.
  EnvVector to_vector() const;
};

struct DemandFeatures {
  double total_norm = 0.0;
  HourlyVector hourly{};
};

struct NormalizationInfo {
  double density_max = 1.0;  ///< D: largest density proxy among retained samples
  double vht_max = 1.0;      ///< C_max: largest daily VHT among retained samples
  int days = 1;              ///< days spanned by the order data

  void validate() const;
  friend bool operator==(const NormalizationInfo&, const NormalizationInfo&) = default;
};

struct DatasetRow {
  std::size_t sample_id = 0;
  GeoPoint center;
  EnvFeatures env;
  DemandFeatures demand;
  RawSample raw;
  bool demand_defined = true;  ///< false when the buffer had zero VHT
};

struct Dataset {
  std::vector<DatasetRow> rows;
  NormalizationInfo norm;
  std::optional<GridSpec> grid;  ///< lattice the sample ids index into
  Provenance provenance;

  std::size_t size() const { return rows.size(); }
  bool empty() const { return rows.empty(); }
  /// Row with the given sample id, or nullptr.
  const DatasetRow* find(std::size_t sample_id) const;
  /// Rows at `indices`, same normalization and grid.
  Dataset subset(std::span<const std::size_t> indices) const;
};

/// Per-center POI counts and hourly VHT. Orders are credited to the buffer
/// containing their pickup point, in their pickup hour, averaged over
/// `days`. Work is split over `threads`; the result does not depend on it.
std::vector<RawSample> build_raw_samples(std::span<const GeoPoint> centers,
                                         std::span<const PoiRecord> pois,
                                         std::span<const TripOrder> orders, const GridSpec& spec,
                                         int days, unsigned threads = 1);

struct CleanPolicy {
  /// Minimum average order rate over the whole day, orders per hour.
  double min_orders_per_hour = 1.0;
};

struct CleanResult {
  std::vector<RawSample> samples;
  std::size_t removed_no_poi = 0;
  std::size_t removed_low_activity = 0;
};

/// Drops buffers with no POI or with fewer than `min_orders_per_hour`
/// orders per hour on average. Throws EmptyDataset when nothing survives.
CleanResult clean(std::span<const RawSample> samples, const CleanPolicy& policy = {});

/// Normalizes over the given samples (D and C_max computed from them).
Dataset normalize(std::span<const RawSample> samples, int days);

/// Normalizes with frozen constants from another dataset; features of the
/// new samples may exceed 1 if they are denser or busier than the source.
Dataset normalize_with(std::span<const RawSample> samples, const NormalizationInfo& info);

EnvFeatures env_from_counts(std::span<const double, kCategoryCount> counts,
                            const NormalizationInfo& info);
EnvFeatures env_from_counts(const PoiCounts& counts, const NormalizationInfo& info);

double denormalize_total(double total_norm, const NormalizationInfo& info);

/// `path` receives the CSV; the sidecar with normalization, grid and
/// provenance goes next to it with a `.json` extension.
void write_dataset(const std::filesystem::path& path, const Dataset& dataset);
Dataset read_dataset(const std::filesystem::path& path);
std::filesystem::path dataset_sidecar_path(const std::filesystem::path& csv_path);

void write_raw_samples(const std::filesystem::path& path, std::span<const RawSample> samples);
std::vector<RawSample> read_raw_samples(const std::filesystem::path& path);

}  // namespace urbanflux
