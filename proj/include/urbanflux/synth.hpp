#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "urbanflux/features.hpp"
#include "urbanflux/geo_grid.hpp"
#include "urbanflux/ingest.hpp"

namespace urbanflux {

struct PoiCluster {
  GeoPoint center;
  double spread_m = 1000.0;  ///< isotropic Gaussian standard deviation
  double weight = 1.0;       ///< relative share of the category's clustered POIs
};

/// Parameters of a synthetic city. Each POI of category j emits orders at
/// its own location with an expected daily count per pickup hour h of
/// gain * attraction[j] * m * profiles[j][h], where m is a per-POI
/// log-normal multiplier with log-sd `noise` (m = 1 when noise = 0). Trip
/// durations are gamma distributed with mean mean_trip_hours[j]. A
/// buffer's expected hourly VHT is therefore the sum of its POIs' rates.
struct SynthSpec {
  GridSpec grid;
  std::size_t n_poi = 9000;
  int n_days = 30;
  std::array<double, kCategoryCount> category_share{};
  std::array<std::vector<PoiCluster>, kCategoryCount> clusters;
  /// Share of each category's POIs scattered uniformly over the box.
  double background_fraction = 0.1;
  std::array<HourlyVector, kCategoryCount> profiles{};
  std::array<double, kCategoryCount> attraction{};
  std::array<double, kCategoryCount> mean_trip_hours{};
  double trip_shape = 4.0;  ///< gamma shape of trip durations
  double gain = 3.0;        ///< orders per POI per day at attraction 1
  double noise = 0.1;
  std::uint64_t seed = 1;
  std::int64_t start_epoch = 1493596800;  ///< local midnight of day 0

  /// Throws ConfigError when shares or profiles are not distributions.
  void validate() const;

  /// Default city: a 12 x 9 km box, each category in 2 or 3 clusters of its own.
  static SynthSpec defaults(std::uint64_t seed = 1);
  /// Same parameters with clusters laid out over `grid`.
  static SynthSpec defaults(std::uint64_t seed, const GridSpec& grid);

  /// A distribution-shifted variant: profiles blended toward a permuted
  /// set by `amount` (0..1), attractions and cluster layout re-drawn.
  SynthSpec shifted(double amount, std::uint64_t seed) const;
};

struct TruthEntry {
  std::size_t sample_id = 0;
  GeoPoint center;
  HourlyVector expected_vht{};  ///< expected daily VHT per pickup hour
};

struct SynthCity {
  std::vector<PoiRecord> pois;
  std::vector<TripOrder> orders;
  std::vector<TruthEntry> truth;  ///< one per lattice center of spec.grid
};

SynthCity gen_city(const SynthSpec& spec);

/// Writes poi.csv, orders.csv and truth.json into `dir`.
void write_city(const std::filesystem::path& dir, const SynthCity& city, const SynthSpec& spec);

}  // namespace urbanflux
