#include "urbanflux/ingest.hpp"

#include <charconv>
#include <fstream>
#include <string>

#include "csv_util.hpp"
#include "urbanflux/errors.hpp"

namespace urbanflux {

namespace {

using detail::CsvReader;
using detail::parse_number;
using detail::split_fields;

constexpr std::array<CategoryEntry, kCategoryCount> kCategories{{
    {0, "automobile and motorcycle related"},
    {1, "food and beverages related"},
    {2, "shopping related place"},
    {3, "daily life service place"},
    {4, "sports and recreation place"},
    {5, "medical and health care service place"},
    {6, "accommodation service related"},
    {7, "tourist attraction related"},
    {8, "residential area"},
    {9, "enterprise"},
    {10, "governmental and social groups related"},
    {11, "science and education cultural place"},
    {12, "traffic hinge"},
    {13, "transit network"},
    {14, "finance and insurance service institution"},
    {15, "public facility"},
}};

}  // namespace

int TripOrder::hour_bucket() const {
  const std::int64_t sec_of_day = ((pickup_ts % 86400) + 86400) % 86400;
  return static_cast<int>(sec_of_day / 3600);
}

const std::array<CategoryEntry, kCategoryCount>& category_table() { return kCategories; }

std::string_view category_name(int index) {
  if (index < 0 || index >= static_cast<int>(kCategoryCount)) {
    throw RangeError("category index " + std::to_string(index) + " outside 0..15");
  }
  return kCategories[static_cast<std::size_t>(index)].name;
}

std::vector<PoiRecord> parse_poi_csv(const std::filesystem::path& path) {
  CsvReader reader(path, "lon,lat,category");
  std::vector<PoiRecord> out;
  std::string_view line;
  std::array<std::string_view, 3> f;
  while (reader.next(line)) {
    const std::size_t ln = reader.line_no();
    PoiRecord rec;
    if (!split_fields(line, f) || !parse_number(f[0], rec.location.lon) ||
        !parse_number(f[1], rec.location.lat) || !parse_number(f[2], rec.category)) {
      throw ParseError(ln, "malformed POI row '" + std::string(line) + "'");
    }
    if (rec.category < 0 || rec.category >= static_cast<int>(kCategoryCount)) {
      throw RangeError("category " + std::to_string(rec.category) + " outside 0..15", ln);
    }
    if (!rec.location.valid()) throw RangeError("invalid coordinates", ln);
    out.push_back(rec);
  }
  return out;
}

std::vector<TripOrder> parse_orders_csv(const std::filesystem::path& path, OrderPolicy policy,
                                        ParseReport* report) {
  CsvReader reader(path, "pickup_lon,pickup_lat,pickup_ts,dropoff_ts");
  std::vector<TripOrder> out;
  ParseReport local;
  std::string_view line;
  std::array<std::string_view, 4> f;
  while (reader.next(line)) {
    const std::size_t ln = reader.line_no();
    ++local.rows;
    TripOrder o;
    if (!split_fields(line, f) || !parse_number(f[0], o.pickup.lon) ||
        !parse_number(f[1], o.pickup.lat) || !parse_number(f[2], o.pickup_ts) ||
        !parse_number(f[3], o.dropoff_ts)) {
      throw ParseError(ln, "malformed order row '" + std::string(line) + "'");
    }
    if (!o.pickup.valid()) throw RangeError("invalid pickup coordinates", ln);
    const std::int64_t dur = o.dropoff_ts - o.pickup_ts;
    if (dur <= 0 || dur > kMaxTripSeconds) {
      if (policy == OrderPolicy::Strict) {
        throw OrderTimeError(ln, dur <= 0 ? "dropoff not after pickup" : "trip longer than 24 h");
      }
      ++local.rejected_time;
      continue;
    }
    out.push_back(o);
  }
  if (report) *report = local;
  return out;
}

std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

void write_poi_csv(const std::filesystem::path& path, const std::vector<PoiRecord>& pois) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << "lon,lat,category\n";
  for (const auto& p : pois) {
    out << format_double(p.location.lon) << ',' << format_double(p.location.lat) << ','
        << p.category << '\n';
  }
  if (!out) throw IoError("write failed for " + path.string());
}

void write_orders_csv(const std::filesystem::path& path, const std::vector<TripOrder>& orders) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << "pickup_lon,pickup_lat,pickup_ts,dropoff_ts\n";
  for (const auto& o : orders) {
    out << format_double(o.pickup.lon) << ',' << format_double(o.pickup.lat) << ',' << o.pickup_ts
        << ',' << o.dropoff_ts << '\n';
  }
  if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace urbanflux
