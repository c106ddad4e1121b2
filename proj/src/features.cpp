#include "urbanflux/features.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>
#include <thread>

#include "csv_util.hpp"
#include "urbanflux/errors.hpp"
#include "urbanflux/json_io.hpp"

namespace urbanflux {

namespace {

std::string two_digit(std::size_t i) {
  return (i < 10 ? "0" : "") + std::to_string(i);
}

void fill_env(const PoiCounts& counts, std::int64_t total, double density_max, EnvFeatures& env) {
  env.density_norm = static_cast<double>(total) / density_max;
  for (std::size_t j = 0; j < kCategoryCount; ++j) {
    env.proportions[j] = total > 0 ? static_cast<double>(counts[j]) / static_cast<double>(total) : 0.0;
  }
}

DatasetRow make_row(const RawSample& s, const NormalizationInfo& info) {
  DatasetRow row;
  row.sample_id = s.sample_id;
  row.center = s.center;
  row.raw = s;
  fill_env(s.poi_counts, s.density_proxy, info.density_max, row.env);
  row.demand.total_norm = s.vht_total / info.vht_max;
  row.demand_defined = s.vht_total > 0.0;
  for (std::size_t h = 0; h < kHours; ++h) {
    row.demand.hourly[h] = row.demand_defined ? s.vht_by_hour[h] / s.vht_total : 0.0;
  }
  return row;
}

}  // namespace

EnvVector EnvFeatures::to_vector() const {
  EnvVector v{};
  v[0] = density_norm;
  std::copy(proportions.begin(), proportions.end(), v.begin() + 1);
  return v;
}

void NormalizationInfo::validate() const {
  if (!(density_max >= 1.0) || !std::isfinite(density_max)) {
    throw RangeError("normalization density maximum must be >= 1");
  }
  if (!(vht_max > 0.0) || !std::isfinite(vht_max)) {
    throw RangeError("normalization VHT maximum must be positive");
  }
  if (days < 1) throw RangeError("normalization day count must be >= 1");
}

const DatasetRow* Dataset::find(std::size_t sample_id) const {
  const auto it = std::find_if(rows.begin(), rows.end(),
                               [&](const DatasetRow& r) { return r.sample_id == sample_id; });
  return it == rows.end() ? nullptr : &*it;
}

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
  Dataset out;
  out.norm = norm;
  out.grid = grid;
  out.provenance = provenance;
  out.rows.reserve(indices.size());
  for (std::size_t i : indices) out.rows.push_back(rows.at(i));
  return out;
}

std::vector<RawSample> build_raw_samples(std::span<const GeoPoint> centers,
                                         std::span<const PoiRecord> pois,
                                         std::span<const TripOrder> orders, const GridSpec& spec,
                                         int days, unsigned threads) {
  spec.validate();
  if (days < 1) throw RangeError("days must be >= 1");

  std::vector<GeoPoint> poi_xy;
  poi_xy.reserve(pois.size());
  for (const auto& p : pois) poi_xy.push_back(p.location);
  std::vector<GeoPoint> order_xy;
  order_xy.reserve(orders.size());
  for (const auto& o : orders) order_xy.push_back(o.pickup);

  const double radius = spec.buffer_radius_m;
  const PointIndex poi_index(poi_xy, spec.min, radius);
  const PointIndex order_index(order_xy, spec.min, radius);

  std::vector<RawSample> out(centers.size());
  auto work = [&](std::size_t begin, std::size_t end) {
    for (std::size_t k = begin; k < end; ++k) {
      RawSample& s = out[k];
      s.sample_id = k;
      s.center = centers[k];
      for (std::size_t idx : poi_index.query(centers[k], radius)) {
        ++s.poi_counts[static_cast<std::size_t>(pois[idx].category)];
      }
      for (auto c : s.poi_counts) s.density_proxy += c;
      // Sum in index order so the result is independent of threading.
      std::size_t n_orders = 0;
      for (std::size_t idx : order_index.query(centers[k], radius)) {
        const TripOrder& o = orders[idx];
        s.vht_by_hour[static_cast<std::size_t>(o.hour_bucket())] += o.duration_hours();
        ++n_orders;
      }
      s.vht_total = 0.0;
      for (double& v : s.vht_by_hour) {
        v /= static_cast<double>(days);
        s.vht_total += v;
      }
      s.orders_per_day = static_cast<double>(n_orders) / static_cast<double>(days);
    }
  };

  const std::size_t n = centers.size();
  const unsigned workers = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(n)));
  if (workers <= 1) {
    work(0, n);
  } else {
    std::vector<std::thread> pool;
    const std::size_t chunk = (n + workers - 1) / workers;
    for (unsigned w = 0; w < workers; ++w) {
      const std::size_t b = w * chunk;
      const std::size_t e = std::min(n, b + chunk);
      if (b < e) pool.emplace_back(work, b, e);
    }
    for (auto& t : pool) t.join();
  }
  return out;
}

CleanResult clean(std::span<const RawSample> samples, const CleanPolicy& policy) {
  CleanResult res;
  for (const auto& s : samples) {
    if (s.density_proxy < 1) {
      ++res.removed_no_poi;
    } else if (s.orders_per_day / 24.0 < policy.min_orders_per_hour) {
      ++res.removed_low_activity;
    } else {
      res.samples.push_back(s);
    }
  }
  if (res.samples.empty()) {
    throw EmptyDataset("no sample survived cleaning (" + std::to_string(res.removed_no_poi) +
                       " without POI, " + std::to_string(res.removed_low_activity) +
                       " below the activity threshold)");
  }
  return res;
}

Dataset normalize(std::span<const RawSample> samples, int days) {
  if (samples.empty()) throw EmptyDataset("cannot normalize an empty sample set");
  NormalizationInfo info;
  info.days = days;
  info.density_max = 0.0;
  info.vht_max = 0.0;
  for (const auto& s : samples) {
    info.density_max = std::max(info.density_max, static_cast<double>(s.density_proxy));
    info.vht_max = std::max(info.vht_max, s.vht_total);
  }
  return normalize_with(samples, info);
}

Dataset normalize_with(std::span<const RawSample> samples, const NormalizationInfo& info) {
  info.validate();
  Dataset ds;
  ds.norm = info;
  ds.rows.reserve(samples.size());
  for (const auto& s : samples) ds.rows.push_back(make_row(s, info));
  return ds;
}

EnvFeatures env_from_counts(std::span<const double, kCategoryCount> counts,
                            const NormalizationInfo& info) {
  double total = 0.0;
  for (double c : counts) {
    if (c < 0.0 || !std::isfinite(c)) throw NegativeCount("POI counts must be non-negative");
    total += c;
  }
  if (total <= 0.0) throw RangeError("all-zero POI counts leave the proportions undefined");
  EnvFeatures env;
  env.density_norm = total / info.density_max;
  for (std::size_t j = 0; j < kCategoryCount; ++j) env.proportions[j] = counts[j] / total;
  return env;
}

EnvFeatures env_from_counts(const PoiCounts& counts, const NormalizationInfo& info) {
  std::array<double, kCategoryCount> c{};
  for (std::size_t j = 0; j < kCategoryCount; ++j) c[j] = static_cast<double>(counts[j]);
  return env_from_counts(std::span<const double, kCategoryCount>(c), info);
}

double denormalize_total(double total_norm, const NormalizationInfo& info) {
  return total_norm * info.vht_max;
}

std::filesystem::path dataset_sidecar_path(const std::filesystem::path& csv_path) {
  auto p = csv_path;
  p.replace_extension(".json");
  return p;
}

void write_dataset(const std::filesystem::path& path, const Dataset& dataset) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << "sample_id,lon,lat,density_norm";
  for (std::size_t j = 0; j < kCategoryCount; ++j) out << ",p" << two_digit(j);
  out << ",total_norm";
  for (std::size_t h = 0; h < kHours; ++h) out << ",q" << two_digit(h);
  out << ",raw_total_vht";
  for (std::size_t j = 0; j < kCategoryCount; ++j) out << ",x" << two_digit(j);
  out << ",orders_per_day\n";
  for (const auto& r : dataset.rows) {
    out << r.sample_id << ',' << format_double(r.center.lon) << ',' << format_double(r.center.lat)
        << ',' << format_double(r.env.density_norm);
    for (double p : r.env.proportions) out << ',' << format_double(p);
    out << ',' << format_double(r.demand.total_norm);
    for (double q : r.demand.hourly) out << ',' << format_double(q);
    out << ',' << format_double(r.raw.vht_total);
    for (auto x : r.raw.poi_counts) out << ',' << x;
    out << ',' << format_double(r.raw.orders_per_day) << '\n';
  }
  if (!out) throw IoError("write failed for " + path.string());

  Json side;
  side["norm_info"] = dataset.norm;
  if (dataset.grid) side["grid"] = *dataset.grid;
  side["provenance"] = dataset.provenance;
  side["sample_count"] = dataset.rows.size();
  write_json_file(dataset_sidecar_path(path), side);
}

Dataset read_dataset(const std::filesystem::path& path) {
  Dataset ds;
  const Json side = read_json_file(dataset_sidecar_path(path));
  ds.norm = require<NormalizationInfo>(side, "norm_info", "dataset sidecar");
  if (side.contains("grid")) ds.grid = side.at("grid").get<GridSpec>();
  if (side.contains("provenance")) ds.provenance = side.at("provenance").get<Provenance>();

  std::string header = "sample_id,lon,lat,density_norm";
  for (std::size_t j = 0; j < kCategoryCount; ++j) header += ",p" + two_digit(j);
  header += ",total_norm";
  for (std::size_t h = 0; h < kHours; ++h) header += ",q" + two_digit(h);
  header += ",raw_total_vht";
  for (std::size_t j = 0; j < kCategoryCount; ++j) header += ",x" + two_digit(j);
  header += ",orders_per_day";

  constexpr std::size_t kFields = 4 + kCategoryCount + 1 + kHours + 1 + kCategoryCount + 1;
  detail::CsvReader reader(path, header);
  std::string_view line;
  std::array<std::string_view, kFields> f;
  while (reader.next(line)) {
    const std::size_t ln = reader.line_no();
    if (!detail::split_fields(line, f)) throw ParseError(ln, "wrong field count in dataset row");
    DatasetRow r;
    std::size_t k = 0;
    bool ok = detail::parse_number(f[k++], r.sample_id);
    ok = ok && detail::parse_number(f[k++], r.center.lon);
    ok = ok && detail::parse_number(f[k++], r.center.lat);
    ok = ok && detail::parse_number(f[k++], r.env.density_norm);
    for (auto& p : r.env.proportions) ok = ok && detail::parse_number(f[k++], p);
    ok = ok && detail::parse_number(f[k++], r.demand.total_norm);
    for (auto& q : r.demand.hourly) ok = ok && detail::parse_number(f[k++], q);
    ok = ok && detail::parse_number(f[k++], r.raw.vht_total);
    for (auto& x : r.raw.poi_counts) ok = ok && detail::parse_number(f[k++], x);
    ok = ok && detail::parse_number(f[k++], r.raw.orders_per_day);
    if (!ok) throw ParseError(ln, "malformed dataset row");
    r.raw.sample_id = r.sample_id;
    r.raw.center = r.center;
    r.raw.density_proxy = 0;
    for (auto x : r.raw.poi_counts) r.raw.density_proxy += x;
    for (std::size_t h = 0; h < kHours; ++h) r.raw.vht_by_hour[h] = r.demand.hourly[h] * r.raw.vht_total;
    r.demand_defined = r.raw.vht_total > 0.0;
    ds.rows.push_back(r);
  }
  return ds;
}

void write_raw_samples(const std::filesystem::path& path, std::span<const RawSample> samples) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << "sample_id,lon,lat";
  for (std::size_t j = 0; j < kCategoryCount; ++j) out << ",x" << two_digit(j);
  for (std::size_t h = 0; h < kHours; ++h) out << ",v" << two_digit(h);
  out << ",orders_per_day\n";
  for (const auto& s : samples) {
    out << s.sample_id << ',' << format_double(s.center.lon) << ',' << format_double(s.center.lat);
    for (auto x : s.poi_counts) out << ',' << x;
    for (double v : s.vht_by_hour) out << ',' << format_double(v);
    out << ',' << format_double(s.orders_per_day) << '\n';
  }
  if (!out) throw IoError("write failed for " + path.string());
}

std::vector<RawSample> read_raw_samples(const std::filesystem::path& path) {
  std::string header = "sample_id,lon,lat";
  for (std::size_t j = 0; j < kCategoryCount; ++j) header += ",x" + two_digit(j);
  for (std::size_t h = 0; h < kHours; ++h) header += ",v" + two_digit(h);
  header += ",orders_per_day";
  constexpr std::size_t kFields = 3 + kCategoryCount + kHours + 1;
  detail::CsvReader reader(path, header);
  std::vector<RawSample> out;
  std::string_view line;
  std::array<std::string_view, kFields> f;
  while (reader.next(line)) {
    const std::size_t ln = reader.line_no();
    if (!detail::split_fields(line, f)) throw ParseError(ln, "wrong field count in sample row");
    RawSample s;
    std::size_t k = 0;
    bool ok = detail::parse_number(f[k++], s.sample_id);
    ok = ok && detail::parse_number(f[k++], s.center.lon);
    ok = ok && detail::parse_number(f[k++], s.center.lat);
    for (auto& x : s.poi_counts) ok = ok && detail::parse_number(f[k++], x);
    for (auto& v : s.vht_by_hour) ok = ok && detail::parse_number(f[k++], v);
    ok = ok && detail::parse_number(f[k++], s.orders_per_day);
    if (!ok) throw ParseError(ln, "malformed sample row");
    for (auto x : s.poi_counts) s.density_proxy += x;
    for (double v : s.vht_by_hour) s.vht_total += v;
    out.push_back(s);
  }
  return out;
}

}  // namespace urbanflux
