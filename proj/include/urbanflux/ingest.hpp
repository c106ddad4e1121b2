#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "urbanflux/geo_grid.hpp"

namespace urbanflux {

inline constexpr std::size_t kCategoryCount = 16;
inline constexpr std::size_t kHours = 24;
/// Longest trip accepted as a plausible single order.
inline constexpr std::int64_t kMaxTripSeconds = 24 * 3600;

struct PoiRecord {
  GeoPoint location;
  int category = 0;  ///< 0..15, see category_name()
  friend bool operator==(const PoiRecord&, const PoiRecord&) = default;
};

/// One taxi order, attributed to its pickup location. Timestamps are
/// local-time epoch seconds.
struct TripOrder {
  GeoPoint pickup;
  std::int64_t pickup_ts = 0;
  std::int64_t dropoff_ts = 0;

  /// Vehicle hours traveled by this order.
  double duration_hours() const { return static_cast<double>(dropoff_ts - pickup_ts) / 3600.0; }
  /// Hour of day (0..23) of the pickup.
  int hour_bucket() const;

  friend bool operator==(const TripOrder&, const TripOrder&) = default;
};

struct CategoryEntry {
  int index;
  std::string_view name;
};

/// The 16 urban-function classes, in index order.
const std::array<CategoryEntry, kCategoryCount>& category_table();

/// Throws RangeError outside 0..15.
std::string_view category_name(int index);

enum class OrderPolicy {
  Strict,   ///< throw OrderTimeError on the first order with a bad duration
  Lenient,  ///< drop such orders and count them in the report
};

struct ParseReport {
  std::size_t rows = 0;            ///< data rows read
  std::size_t rejected_time = 0;   ///< orders dropped under OrderPolicy::Lenient
};

/// Header `lon,lat,category`.
std::vector<PoiRecord> parse_poi_csv(const std::filesystem::path& path);

/// Header `pickup_lon,pickup_lat,pickup_ts,dropoff_ts`.
std::vector<TripOrder> parse_orders_csv(const std::filesystem::path& path,
                                        OrderPolicy policy = OrderPolicy::Strict,
                                        ParseReport* report = nullptr);

void write_poi_csv(const std::filesystem::path& path, const std::vector<PoiRecord>& pois);
void write_orders_csv(const std::filesystem::path& path, const std::vector<TripOrder>& orders);

/// Shortest decimal form that parses back to the same double.
std::string format_double(double v);

}  // namespace urbanflux
