#include "urbanflux/geo_grid.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "urbanflux/errors.hpp"

namespace urbanflux {

namespace {

constexpr double kDegToRad = std::numbers::pi / 180.0;
// Lattice counts tolerate this much relative rounding in the extent/step ratio.
constexpr double kLatticeSlack = 1e-9;

}  // namespace

bool GeoPoint::valid() const {
  return std::isfinite(lon) && std::isfinite(lat) && lon >= -180.0 && lon <= 180.0 &&
         lat >= -90.0 && lat <= 90.0;
}

void GridSpec::validate() const {
  if (!min.valid() || !max.valid()) throw RangeError("grid corners must be valid coordinates");
  if (!(min.lon < max.lon) || !(min.lat < max.lat)) {
    throw RangeError("grid min corner must be south-west of max corner");
  }
  if (!(step_m > 0.0) || !std::isfinite(step_m)) throw RangeError("grid step must be positive");
  if (!(buffer_radius_m > 0.0) || !std::isfinite(buffer_radius_m)) {
    throw RangeError("buffer radius must be positive");
  }
}

LocalXY project(GeoPoint p, GeoPoint origin) {
  const double scale = kEarthRadiusM * kDegToRad;
  return {(p.lon - origin.lon) * std::cos(origin.lat * kDegToRad) * scale,
          (p.lat - origin.lat) * scale};
}

GeoPoint unproject(LocalXY xy, GeoPoint origin) {
  const double scale = kEarthRadiusM * kDegToRad;
  return {origin.lon + xy.x / (std::cos(origin.lat * kDegToRad) * scale),
          origin.lat + xy.y / scale};
}

LatticeDims lattice_dims(const GridSpec& spec) {
  spec.validate();
  const LocalXY extent = project(spec.max, spec.min);
  const double nx = extent.x / spec.step_m;
  const double ny = extent.y / spec.step_m;
  if (nx + kLatticeSlack < 1.0 || ny + kLatticeSlack < 1.0) {
    throw DegenerateExtent("grid box spans less than one step (" + std::to_string(extent.x) +
                           " m x " + std::to_string(extent.y) + " m)");
  }
  return {static_cast<std::size_t>(std::floor(nx + kLatticeSlack)) + 1,
          static_cast<std::size_t>(std::floor(ny + kLatticeSlack)) + 1};
}

std::vector<GeoPoint> generate_centers(const GridSpec& spec) {
  const LatticeDims dims = lattice_dims(spec);
  std::vector<GeoPoint> centers;
  centers.reserve(dims.size());
  for (std::size_t row = 0; row < dims.rows; ++row) {
    for (std::size_t col = 0; col < dims.cols; ++col) {
      centers.push_back(unproject({static_cast<double>(col) * spec.step_m,
                                   static_cast<double>(row) * spec.step_m},
                                  spec.min));
    }
  }
  return centers;
}

std::vector<std::size_t> points_in_buffer(GeoPoint center, std::span<const GeoPoint> points,
                                          double radius_m, GeoPoint origin) {
  const LocalXY c = project(center, origin);
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (within_radius(project(points[i], origin), c, radius_m)) out.push_back(i);
  }
  return out;
}

std::vector<std::size_t> points_in_buffer(GeoPoint center, std::span<const GeoPoint> points,
                                          double radius_m) {
  return points_in_buffer(center, points, radius_m, center);
}

PointIndex::PointIndex(std::span<const GeoPoint> points, GeoPoint origin, double cell_m)
    : origin_(origin), cell_m_(cell_m) {
  if (!(cell_m > 0.0)) throw RangeError("index cell size must be positive");
  xy_.reserve(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    const LocalXY p = project(points[i], origin);
    xy_.push_back(p);
    const auto cx = static_cast<long long>(std::floor(p.x / cell_m_));
    const auto cy = static_cast<long long>(std::floor(p.y / cell_m_));
    cells_[key(cx, cy)].push_back(i);
  }
}

std::vector<std::size_t> PointIndex::query(GeoPoint center, double radius_m) const {
  const LocalXY c = project(center, origin_);
  const auto x0 = static_cast<long long>(std::floor((c.x - radius_m) / cell_m_));
  const auto x1 = static_cast<long long>(std::floor((c.x + radius_m) / cell_m_));
  const auto y0 = static_cast<long long>(std::floor((c.y - radius_m) / cell_m_));
  const auto y1 = static_cast<long long>(std::floor((c.y + radius_m) / cell_m_));
  std::vector<std::size_t> out;
  for (long long cx = x0; cx <= x1; ++cx) {
    for (long long cy = y0; cy <= y1; ++cy) {
      const auto it = cells_.find(key(cx, cy));
      if (it == cells_.end()) continue;
      for (std::size_t idx : it->second) {
        if (within_radius(xy_[idx], c, radius_m)) out.push_back(idx);
      }
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace urbanflux
