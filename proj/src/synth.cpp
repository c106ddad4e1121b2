#include "urbanflux/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <tuple>

#include "urbanflux/errors.hpp"
#include "urbanflux/json_io.hpp"
#include "urbanflux/rng.hpp"

namespace urbanflux {

namespace {

struct Bump {
  double hour;
  double sd;
  double height;
};

// Hour-of-day profile from circular Gaussian bumps over a flat floor.
HourlyVector make_profile(std::initializer_list<Bump> bumps, double floor = 0.15) {
  HourlyVector p{};
  for (std::size_t h = 0; h < kHours; ++h) {
    double v = floor;
    for (const auto& b : bumps) {
      double d = std::abs(static_cast<double>(h) + 0.5 - b.hour);
      d = std::min(d, 24.0 - d);
      v += b.height * std::exp(-0.5 * d * d / (b.sd * b.sd));
    }
    p[h] = v;
  }
  const double sum = std::accumulate(p.begin(), p.end(), 0.0);
  for (double& v : p) v /= sum;
  return p;
}

std::array<HourlyVector, kCategoryCount> default_profiles() {
  return {{
      make_profile({{10.5, 2.0, 1.0}, {15.5, 2.0, 0.8}}),                    // 00 automobile
      make_profile({{12.5, 1.2, 1.6}, {19.0, 1.5, 1.8}}),                    // 01 food
      make_profile({{15.5, 2.0, 1.0}, {20.0, 1.5, 1.4}}),                    // 02 shopping
      make_profile({{9.5, 2.0, 0.9}, {17.5, 2.0, 0.9}}),                     // 03 daily life
      make_profile({{20.0, 1.5, 1.8}, {7.0, 1.0, 0.5}}),                     // 04 sports
      make_profile({{8.5, 1.2, 2.0}, {14.5, 1.5, 0.9}}),                     // 05 medical
      make_profile({{22.5, 1.8, 2.0}, {0.5, 1.5, 1.0}}, 0.25),               // 06 accommodation
      make_profile({{11.0, 2.5, 1.5}, {16.0, 2.0, 1.0}}),                    // 07 tourist
      make_profile({{7.5, 1.0, 2.6}, {19.5, 1.5, 1.2}}),                     // 08 residential
      make_profile({{17.5, 1.0, 2.6}, {8.5, 1.0, 1.0}}),                     // 09 enterprise
      make_profile({{8.0, 0.8, 1.4}, {17.0, 0.8, 1.4}}),                     // 10 government
      make_profile({{7.0, 0.8, 1.6}, {16.5, 1.0, 1.4}}),                     // 11 education
      make_profile({{6.5, 1.5, 1.0}, {22.0, 2.0, 1.0}}, 0.45),               // 12 traffic hinge
      make_profile({{7.5, 1.2, 1.1}, {18.0, 1.2, 1.1}}, 0.35),               // 13 transit network
      make_profile({{10.0, 1.5, 1.2}, {15.0, 1.5, 1.2}}),                    // 14 finance
      make_profile({{12.0, 4.0, 0.8}}, 0.3),                                 // 15 public facility
  }};
}

bool inside(const GridSpec& g, GeoPoint p) {
  return p.lon >= g.min.lon && p.lon <= g.max.lon && p.lat >= g.min.lat && p.lat <= g.max.lat;
}

GeoPoint uniform_point(const GridSpec& g, Rng& rng) {
  return {rng.uniform(g.min.lon, g.max.lon), rng.uniform(g.min.lat, g.max.lat)};
}

std::array<std::vector<PoiCluster>, kCategoryCount> draw_clusters(const GridSpec& g, Rng& rng) {
  const LocalXY extent = project(g.max, g.min);
  std::array<std::vector<PoiCluster>, kCategoryCount> out;
  for (auto& list : out) {
    const int n = 2 + static_cast<int>(rng.below(2));
    for (int c = 0; c < n; ++c) {
      const LocalXY at{rng.uniform(0.1, 0.9) * extent.x, rng.uniform(0.1, 0.9) * extent.y};
      PoiCluster cl;
      cl.center = unproject(at, g.min);
      cl.spread_m = rng.uniform(420.0, 1320.0);
      cl.weight = rng.uniform(0.5, 1.5);
      list.push_back(cl);
    }
  }
  return out;
}

}  // namespace

void SynthSpec::validate() const {
  grid.validate();
  if (n_poi < kCategoryCount) throw ConfigError("synth: n_poi must be >= 16");
  if (n_days < 1) throw ConfigError("synth: n_days must be >= 1");
  const double share_sum = std::accumulate(category_share.begin(), category_share.end(), 0.0);
  if (std::abs(share_sum - 1.0) > 1e-9) throw ConfigError("synth: category shares must sum to 1");
  for (std::size_t j = 0; j < kCategoryCount; ++j) {
    if (category_share[j] < 0.0) throw ConfigError("synth: negative category share");
    const double s = std::accumulate(profiles[j].begin(), profiles[j].end(), 0.0);
    if (std::abs(s - 1.0) > 1e-9 ||
        std::any_of(profiles[j].begin(), profiles[j].end(), [](double v) { return v < 0.0; })) {
      throw ConfigError("synth: profile " + std::to_string(j) + " is not a distribution");
    }
    if (!(attraction[j] >= 0.0)) throw ConfigError("synth: negative attraction");
    if (!(mean_trip_hours[j] > 0.0)) throw ConfigError("synth: trip durations must be positive");
    if (category_share[j] > 0.0 && background_fraction < 1.0 && clusters[j].empty()) {
      throw ConfigError("synth: category " + std::to_string(j) + " has no cluster");
    }
  }
  if (!(background_fraction >= 0.0 && background_fraction <= 1.0)) {
    throw ConfigError("synth: background_fraction must be in [0, 1]");
  }
  if (!(trip_shape >= 1.0)) throw ConfigError("synth: trip_shape must be >= 1");
  if (!(gain >= 0.0) || !(noise >= 0.0)) throw ConfigError("synth: gain and noise must be >= 0");
}

SynthSpec SynthSpec::defaults(std::uint64_t seed) {
  GridSpec g;
  g.min = {110.30, 19.98};
  g.max = {110.42, 20.06};
  return defaults(seed, g);
}

SynthSpec SynthSpec::defaults(std::uint64_t seed, const GridSpec& grid) {
  grid.validate();
  SynthSpec s;
  s.seed = seed;
  s.grid = grid;
  s.category_share = {0.05, 0.14, 0.12, 0.13, 0.04, 0.05, 0.06, 0.02,
                      0.07, 0.11, 0.06, 0.05, 0.01, 0.03, 0.03, 0.03};
  s.profiles = default_profiles();
  s.attraction = {0.6, 1.4, 1.2, 0.8, 0.9, 1.5, 2.2, 1.8, 2.4, 1.6, 0.7, 1.0, 4.0, 2.0, 0.9, 0.5};
  s.mean_trip_hours = {0.30, 0.22, 0.25, 0.20, 0.28, 0.35, 0.45, 0.50,
                       0.30, 0.32, 0.28, 0.26, 0.60, 0.35, 0.27, 0.22};
  Rng rng(seed);
  s.clusters = draw_clusters(s.grid, rng);
  return s;
}

SynthSpec SynthSpec::shifted(double amount, std::uint64_t new_seed) const {
  SynthSpec s = *this;
  s.seed = new_seed;
  Rng rng(new_seed ^ 0x5eedULL);
  for (std::size_t j = 0; j < kCategoryCount; ++j) {
    const auto& other = profiles[(j + 5) % kCategoryCount];
    for (std::size_t h = 0; h < kHours; ++h) {
      s.profiles[j][h] = (1.0 - amount) * profiles[j][h] + amount * other[h];
    }
    s.attraction[j] = attraction[j] * std::exp(amount * rng.normal(0.0, 0.7));
  }
  s.clusters = draw_clusters(s.grid, rng);
  return s;
}

SynthCity gen_city(const SynthSpec& spec) {
  spec.validate();
  SynthCity city;
  Rng rng(spec.seed);

  // Category counts: floor of the shares, remainder to the largest fractions.
  std::array<std::size_t, kCategoryCount> counts{};
  std::vector<std::pair<double, std::size_t>> frac;
  std::size_t assigned = 0;
  for (std::size_t j = 0; j < kCategoryCount; ++j) {
    const double exact = spec.category_share[j] * static_cast<double>(spec.n_poi);
    counts[j] = static_cast<std::size_t>(std::floor(exact));
    assigned += counts[j];
    frac.emplace_back(-(exact - std::floor(exact)), j);
  }
  std::sort(frac.begin(), frac.end());
  for (std::size_t r = 0; assigned < spec.n_poi; ++r, ++assigned) ++counts[frac[r % kCategoryCount].second];

  for (std::size_t j = 0; j < kCategoryCount; ++j) {
    double wsum = 0.0;
    for (const auto& c : spec.clusters[j]) wsum += c.weight;
    for (std::size_t i = 0; i < counts[j]; ++i) {
      GeoPoint p;
      if (spec.clusters[j].empty() || rng.bernoulli(spec.background_fraction)) {
        p = uniform_point(spec.grid, rng);
      } else {
        double pick = rng.uniform(0.0, wsum);
        const PoiCluster* cl = &spec.clusters[j].back();
        for (const auto& c : spec.clusters[j]) {
          if (pick < c.weight) {
            cl = &c;
            break;
          }
          pick -= c.weight;
        }
        const LocalXY c0 = project(cl->center, spec.grid.min);
        int tries = 0;
        do {
          p = unproject({c0.x + rng.normal(0.0, cl->spread_m), c0.y + rng.normal(0.0, cl->spread_m)},
                        spec.grid.min);
        } while (!inside(spec.grid, p) && ++tries < 20);
        if (!inside(spec.grid, p)) p = uniform_point(spec.grid, rng);
      }
      city.pois.push_back({p, static_cast<int>(j)});
    }
  }

  // Per-POI expected daily VHT by hour, shared by the order draw and the truth.
  std::vector<HourlyVector> poi_vht(city.pois.size());
  const double days = static_cast<double>(spec.n_days);
  for (std::size_t i = 0; i < city.pois.size(); ++i) {
    const auto j = static_cast<std::size_t>(city.pois[i].category);
    Rng prng = rng.stream(i);
    const double m = spec.noise > 0.0 ? std::exp(spec.noise * prng.normal() - 0.5 * spec.noise * spec.noise) : 1.0;
    const double mean_h = spec.mean_trip_hours[j];
    for (std::size_t h = 0; h < kHours; ++h) {
      const double rate = spec.gain * spec.attraction[j] * m * spec.profiles[j][h];
      poi_vht[i][h] = rate * mean_h;
      const std::uint64_t n = prng.poisson(rate * days);
      for (std::uint64_t k = 0; k < n; ++k) {
        TripOrder o;
        o.pickup = city.pois[i].location;
        const auto day = static_cast<std::int64_t>(prng.below(static_cast<std::uint64_t>(spec.n_days)));
        o.pickup_ts = spec.start_epoch + day * 86400 + static_cast<std::int64_t>(h) * 3600 +
                      static_cast<std::int64_t>(prng.below(3600));
        const double dur_h = prng.gamma(spec.trip_shape, mean_h / spec.trip_shape);
        const auto dur_s = std::clamp<std::int64_t>(std::llround(dur_h * 3600.0), 1, kMaxTripSeconds);
        o.dropoff_ts = o.pickup_ts + dur_s;
        city.orders.push_back(o);
      }
    }
  }
  std::stable_sort(city.orders.begin(), city.orders.end(), [](const TripOrder& a, const TripOrder& b) {
    return std::tie(a.pickup_ts, a.pickup.lon, a.pickup.lat, a.dropoff_ts) <
           std::tie(b.pickup_ts, b.pickup.lon, b.pickup.lat, b.dropoff_ts);
  });

  std::vector<GeoPoint> poi_xy;
  poi_xy.reserve(city.pois.size());
  for (const auto& p : city.pois) poi_xy.push_back(p.location);
  const PointIndex index(poi_xy, spec.grid.min, spec.grid.buffer_radius_m);
  const auto centers = generate_centers(spec.grid);
  city.truth.reserve(centers.size());
  for (std::size_t k = 0; k < centers.size(); ++k) {
    TruthEntry t;
    t.sample_id = k;
    t.center = centers[k];
    for (std::size_t i : index.query(centers[k], spec.grid.buffer_radius_m)) {
      for (std::size_t h = 0; h < kHours; ++h) t.expected_vht[h] += poi_vht[i][h];
    }
    city.truth.push_back(t);
  }
  return city;
}

void write_city(const std::filesystem::path& dir, const SynthCity& city, const SynthSpec& spec) {
  std::filesystem::create_directories(dir);
  write_poi_csv(dir / "poi.csv", city.pois);
  write_orders_csv(dir / "orders.csv", city.orders);
  Json truth;
  truth["grid"] = spec.grid;
  truth["n_days"] = spec.n_days;
  truth["seed"] = spec.seed;
  truth["noise"] = spec.noise;
  Json entries = Json::array();
  for (const auto& t : city.truth) {
    entries.push_back({{"sample_id", t.sample_id},
                       {"lon", t.center.lon},
                       {"lat", t.center.lat},
                       {"expected_vht", t.expected_vht}});
  }
  truth["entries"] = std::move(entries);
  write_json_file(dir / "truth.json", truth);
}

}  // namespace urbanflux
