#pragma once

#include <cstddef>
#include <span>
#include <unordered_map>
#include <vector>

namespace urbanflux {

/// Mean Earth radius used by the local projection, meters.
inline constexpr double kEarthRadiusM = 6371000.0;

struct GeoPoint {
  double lon = 0.0;  ///< degrees
  double lat = 0.0;  ///< degrees

  bool valid() const;
  friend bool operator==(const GeoPoint&, const GeoPoint&) = default;
};

/// Meters east (x) and north (y) of a projection origin.
struct LocalXY {
  double x = 0.0;
  double y = 0.0;
  friend bool operator==(const LocalXY&, const LocalXY&) = default;
};

/// Sampling lattice over a bounding box. Buffers are disks of
/// `buffer_radius_m` around each lattice center.
struct GridSpec {
  GeoPoint min;
  GeoPoint max;
  double step_m = 200.0;
  double buffer_radius_m = 1000.0;

  /// Throws RangeError when the invariants do not hold.
  void validate() const;
  friend bool operator==(const GridSpec&, const GridSpec&) = default;
};

/// Equirectangular projection around `origin`.
LocalXY project(GeoPoint p, GeoPoint origin);
GeoPoint unproject(LocalXY xy, GeoPoint origin);

/// The single distance predicate used by both the brute-force and the
/// indexed membership queries, so the two agree bit for bit.
inline bool within_radius(LocalXY a, LocalXY b, double radius_m) {
  const double dx = a.x - b.x;
  const double dy = a.y - b.y;
  return dx * dx + dy * dy <= radius_m * radius_m;
}

struct LatticeDims {
  std::size_t cols = 0;
  std::size_t rows = 0;
  std::size_t size() const { return cols * rows; }
};

/// Number of lattice columns and rows for a spec. Throws DegenerateExtent
/// when the box spans less than one step in either axis.
LatticeDims lattice_dims(const GridSpec& spec);

/// Centers in row-major order: rows run south to north, columns west to
/// east. Center k sits at column k % cols, row k / cols.
std::vector<GeoPoint> generate_centers(const GridSpec& spec);

/// Indices of `points` within `radius_m` of `center` (boundary inclusive),
/// ascending. Distances are measured in the projection around `origin`.
std::vector<std::size_t> points_in_buffer(GeoPoint center, std::span<const GeoPoint> points,
                                          double radius_m, GeoPoint origin);

/// Same query with the projection centered on `center` itself.
std::vector<std::size_t> points_in_buffer(GeoPoint center, std::span<const GeoPoint> points,
                                          double radius_m);

/// Uniform-grid spatial index over projected points. Query results equal
/// points_in_buffer() with the same origin.
class PointIndex {
 public:
  PointIndex(std::span<const GeoPoint> points, GeoPoint origin, double cell_m);

  std::vector<std::size_t> query(GeoPoint center, double radius_m) const;

  /// Calls `fn(index)` for every member, in ascending index order.
  template <typename Fn>
  void for_each_in(GeoPoint center, double radius_m, Fn&& fn) const {
    for (std::size_t idx : query(center, radius_m)) fn(idx);
  }

  std::size_t size() const { return xy_.size(); }
  GeoPoint origin() const { return origin_; }

 private:
  static long long key(long long cx, long long cy) { return (cx << 32) ^ (cy & 0xffffffffLL); }

  GeoPoint origin_;
  double cell_m_;
  std::vector<LocalXY> xy_;
  std::unordered_map<long long, std::vector<std::size_t>> cells_;
};

}  // namespace urbanflux
