#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "urbanflux/errors.hpp"
#include "urbanflux/geo_grid.hpp"
#include "urbanflux/rng.hpp"

using namespace urbanflux;

namespace {

// Independent evaluation of the local equirectangular projection.
LocalXY oracle_project(GeoPoint p, GeoPoint o) {
  const double k = 6371000.0 * std::numbers::pi / 180.0;
  return {(p.lon - o.lon) * std::cos(o.lat * std::numbers::pi / 180.0) * k, (p.lat - o.lat) * k};
}

std::vector<std::size_t> oracle_members(GeoPoint center, const std::vector<GeoPoint>& pts, double r,
                                        GeoPoint origin) {
  const LocalXY c = oracle_project(center, origin);
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const LocalXY q = oracle_project(pts[i], origin);
    const double dx = q.x - c.x;
    const double dy = q.y - c.y;
    if (dx * dx + dy * dy <= r * r) out.push_back(i);
  }
  return out;
}

}  // namespace

TEST_SUITE("geo_grid") {
  TEST_CASE("projection of the origin is zero") {
    const GeoPoint o{110.138, 19.909};
    const LocalXY xy = project(o, o);
    CHECK(xy.x == 0.0);
    CHECK(xy.y == 0.0);
  }

  TEST_CASE("projection hand values") {
    const GeoPoint o{110.138, 19.909};
    const LocalXY east = project({110.139, 19.909}, o);
    CHECK(east.x == doctest::Approx(104.54932279260137).epsilon(1e-9));
    CHECK(std::abs(east.x - 104.7) < 0.2);
    CHECK(east.y == 0.0);
    const LocalXY north = project({110.138, 19.910}, o);
    CHECK(north.x == 0.0);
    CHECK(north.y == doctest::Approx(111.19492664455875).epsilon(1e-9));
  }

  TEST_CASE("round trip within 50 km") {
    const GeoPoint o{110.138, 19.909};
    Rng rng(3);
    for (int i = 0; i < 2000; ++i) {
      const LocalXY xy{rng.uniform(-50000.0, 50000.0), rng.uniform(-50000.0, 50000.0)};
      const GeoPoint p = unproject(xy, o);
      const GeoPoint back = unproject(project(p, o), o);
      CHECK(std::abs(back.lon - p.lon) <= 1e-9);
      CHECK(std::abs(back.lat - p.lat) <= 1e-9);
      const LocalXY again = project(p, o);
      CHECK(std::abs(again.x - xy.x) < 1e-6);
      CHECK(std::abs(again.y - xy.y) < 1e-6);
    }
  }

  TEST_CASE("400 by 200 m box gives six centers") {
    GridSpec g;
    g.min = {110.138, 19.909};
    g.max = unproject({400.0, 200.0}, g.min);
    g.step_m = 200.0;
    const LatticeDims d = lattice_dims(g);
    CHECK(d.cols == 3);
    CHECK(d.rows == 2);
    const auto centers = generate_centers(g);
    REQUIRE(centers.size() == 6);
    CHECK(centers[0] == g.min);
    const LocalXY c4 = project(centers[4], g.min);
    CHECK(c4.x == doctest::Approx(200.0));
    CHECK(c4.y == doctest::Approx(200.0));
  }

  TEST_CASE("center order is row major from the south west") {
    GridSpec g;
    g.min = {110.0, 20.0};
    g.max = unproject({1000.0, 600.0}, g.min);
    const auto centers = generate_centers(g);
    const LatticeDims d = lattice_dims(g);
    REQUIRE(centers.size() == d.size());
    for (std::size_t k = 0; k < centers.size(); ++k) {
      const LocalXY xy = project(centers[k], g.min);
      CHECK(xy.x == doctest::Approx(static_cast<double>(k % d.cols) * 200.0));
      CHECK(xy.y == doctest::Approx(static_cast<double>(k / d.cols) * 200.0));
    }
    CHECK(generate_centers(g) == centers);
  }

  TEST_CASE("Haikou box lattice is of order ten thousand") {
    GridSpec g;
    g.min = {110.138, 19.909};
    g.max = {110.494, 20.104};
    const LatticeDims d = lattice_dims(g);
    CHECK(d.cols == 187);
    CHECK(d.rows == 109);
    CHECK(d.size() >= 10000);
    CHECK(d.size() < 100000);
  }

  TEST_CASE("degenerate and invalid boxes") {
    GridSpec g;
    g.min = {110.0, 20.0};
    g.max = unproject({150.0, 500.0}, g.min);
    CHECK_THROWS_AS(lattice_dims(g), DegenerateExtent);
    g.max = {109.0, 21.0};
    CHECK_THROWS_AS(g.validate(), RangeError);
    g.max = {111.0, 21.0};
    g.step_m = 0.0;
    CHECK_THROWS_AS(g.validate(), RangeError);
  }

  TEST_CASE("buffer boundary is inclusive") {
    const GeoPoint c{110.3, 20.0};
    CHECK(within_radius({1000.0, 0.0}, {0.0, 0.0}, 1000.0));
    CHECK_FALSE(within_radius({1000.0000001, 0.0}, {0.0, 0.0}, 1000.0));
    const std::vector<GeoPoint> pts{c, unproject({1000.0, 0.0}, c), unproject({1000.5, 0.0}, c)};
    const double edge = std::hypot(project(pts[1], c).x, project(pts[1], c).y);
    const auto members = points_in_buffer(c, pts, edge);
    CHECK(members == std::vector<std::size_t>{0, 1});
  }

  TEST_CASE("index and brute force agree with an independent oracle") {
    Rng rng(11);
    const GeoPoint origin{110.138, 19.909};
    for (int inst = 0; inst < 100; ++inst) {
      const std::size_t n = 1 + rng.below(1000);
      std::vector<GeoPoint> pts;
      pts.reserve(n);
      for (std::size_t i = 0; i < n; ++i) {
        pts.push_back(unproject({rng.uniform(0.0, 6000.0), rng.uniform(0.0, 6000.0)}, origin));
      }
      const GeoPoint c = unproject({rng.uniform(0.0, 6000.0), rng.uniform(0.0, 6000.0)}, origin);
      const double r = rng.uniform(100.0, 2000.0);
      const auto expect = oracle_members(c, pts, r, origin);
      CHECK(points_in_buffer(c, pts, r, origin) == expect);
      PointIndex index(pts, origin, 200.0);
      CHECK(index.query(c, r) == expect);
    }
  }

  TEST_CASE("membership is invariant under permutation") {
    Rng rng(5);
    const GeoPoint origin{110.2, 20.0};
    std::vector<GeoPoint> pts;
    for (int i = 0; i < 500; ++i) pts.push_back(unproject({rng.uniform(0, 3000), rng.uniform(0, 3000)}, origin));
    std::vector<std::size_t> perm(pts.size());
    for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
    rng.shuffle(std::span<std::size_t>(perm));
    std::vector<GeoPoint> shuffled;
    for (std::size_t i : perm) shuffled.push_back(pts[i]);
    const GeoPoint c = unproject({1500.0, 1500.0}, origin);
    std::vector<std::size_t> a = points_in_buffer(c, pts, 1000.0, origin);
    std::vector<std::size_t> b;
    for (std::size_t i : points_in_buffer(c, shuffled, 1000.0, origin)) b.push_back(perm[i]);
    std::sort(b.begin(), b.end());
    CHECK(a == b);
  }
}
