#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <limits>
#include <regex>
#include <string>
#include <vector>

#include "helpers.hpp"
#include "urbanflux/errors.hpp"
#include "urbanflux/render.hpp"

using namespace urbanflux;

namespace {

const double kNaN = std::numeric_limits<double>::quiet_NaN();

GridRaster golden_raster() {
  GridRaster r(5, 3);
  const double vals[] = {0.0, 0.5, 1.0, 2.0, 4.0, 8.0, kNaN, 3.0, 1.5, 0.25, 6.0, 7.0, 0.0, kNaN, 5.0};
  for (std::size_t i = 0; i < r.values.size(); ++i) r.values[i] = vals[i];
  return r;
}

struct Pt {
  double x, y;
};

std::vector<std::vector<Pt>> polylines(const std::string& svg) {
  std::vector<std::vector<Pt>> out;
  const std::regex line("<polyline[^>]*points=\"([^\"]*)\"");
  for (auto it = std::sregex_iterator(svg.begin(), svg.end(), line); it != std::sregex_iterator(); ++it) {
    std::vector<Pt> pts;
    std::string s = (*it)[1];
    std::size_t pos = 0;
    while (pos < s.size()) {
      std::size_t end = s.find(' ', pos);
      if (end == std::string::npos) end = s.size();
      const std::string tok = s.substr(pos, end - pos);
      const std::size_t comma = tok.find(',');
      pts.push_back({std::stod(tok.substr(0, comma)), std::stod(tok.substr(comma + 1))});
      pos = end + 1;
    }
    out.push_back(pts);
  }
  return out;
}

std::vector<double> st82_hourly() {
  return {1.09, 0.66, 0.38, 0.25, 0.33, 0.50, 1.16, 3.44, 4.87, 5.56, 6.02, 6.90,
          5.57, 4.78, 5.86, 6.71, 7.23, 9.49, 8.73, 5.67, 4.64, 4.52, 3.45, 2.20};
}

}  // namespace

TEST_SUITE("render") {

TEST_CASE("ramp endpoints and clamping") {
  for (const auto& name : {"inferno", "viridis", "gray"}) {
    const ColorRamp ramp = ColorRamp::by_name(name);
    CHECK(ramp.at(0.0) == ramp.stops.front().color);
    CHECK(ramp.at(1.0) == ramp.stops.back().color);
    CHECK(ramp.at(-3.0) == ramp.stops.front().color);
    CHECK(ramp.at(7.0) == ramp.stops.back().color);
  }
  CHECK_THROWS_AS(ColorRamp::by_name("rainbow"), ConfigError);
  ColorRamp bad{{{0.0, {}}, {0.0, {}}}};
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("single cell raster maps 1 to the brightest stop and 0 to the darkest") {
  testutil::TempDir dir;
  const ColorRamp ramp = ColorRamp::inferno();
  RenderOptions opts;
  opts.cell_px = 1;

  GridRaster one(1, 1);
  one.values[0] = 1.0;
  render_heatmap(one, ramp, dir / "one.png", opts);
  Image img = read_png(dir / "one.png");
  REQUIRE(img.width == 1);
  REQUIRE(img.height == 1);
  CHECK(img.pixel(0, 0) == Rgb{252, 255, 164});

  GridRaster zero(1, 1);
  zero.values[0] = 0.0;
  render_heatmap(zero, ramp, dir / "zero.png", opts);
  CHECK(read_png(dir / "zero.png").pixel(0, 0) == Rgb{0, 0, 4});
}

TEST_CASE("heatmap is north up with missing cells marked") {
  testutil::TempDir dir;
  GridRaster r(2, 2);
  r.at(0, 0) = 1.0;  // south-west
  r.at(1, 0) = kNaN;
  r.at(0, 1) = 0.0;
  r.at(1, 1) = 0.5;
  RenderOptions opts;
  opts.cell_px = 3;
  render_heatmap(r, ColorRamp::grayscale(), dir / "h.png", opts);
  const Image img = read_png(dir / "h.png");
  REQUIRE(img.width == 6);
  REQUIRE(img.height == 6);
  CHECK(img.pixel(0, 5) == Rgb{255, 255, 255});
  CHECK(img.pixel(5, 5) == opts.missing);
  CHECK(img.pixel(0, 0) == Rgb{0, 0, 0});
  CHECK(img.pixel(4, 1).r == 128);
}

TEST_CASE("golden heatmap is byte identical") {
  testutil::TempDir dir;
  RenderOptions opts;
  opts.cell_px = 2;
  opts.provenance = "golden heatmap";
  render_heatmap(golden_raster(), ColorRamp::inferno(), dir / "g.png", opts);
  const std::filesystem::path golden = std::filesystem::path(URBANFLUX_GOLDEN_DIR) / "heatmap_small.png";
  if (std::getenv("URBANFLUX_UPDATE_GOLDEN")) {
    std::filesystem::copy_file(dir / "g.png", golden, std::filesystem::copy_options::overwrite_existing);
  }
  REQUIRE(std::filesystem::exists(golden));
  CHECK(testutil::read_file(dir / "g.png") == testutil::read_file(golden));
  CHECK(read_png(golden).text == "golden heatmap");
}

TEST_CASE("raster from samples places values by lattice index") {
  GridSpec g;
  g.min = {110.0, 20.0};
  g.max = unproject({400.0, 200.0}, g.min);
  const std::vector<std::size_t> ids{0, 4};
  const std::vector<double> vals{2.0, 3.0};
  const GridRaster r = raster_from_samples(g, ids, vals);
  REQUIRE(r.width == 3);
  REQUIRE(r.height == 2);
  CHECK(r.at(0, 0) == 2.0);
  CHECK(r.at(1, 1) == 3.0);
  CHECK(std::isnan(r.at(2, 1)));
  const std::vector<std::size_t> bad{6};
  const std::vector<double> one{1.0};
  CHECK_THROWS_AS(raster_from_samples(g, bad, one), RangeError);
}

TEST_CASE("error map is black at accuracy 1 and white at accuracy 0 or below") {
  CHECK(error_gray(1.0) == 0);
  CHECK(error_gray(0.0) == 255);
  CHECK(error_gray(-1.78) == 255);
  CHECK(error_gray(1.3) == 0);
  for (int i = 0; i < 100; ++i) {
    CHECK(error_gray(i / 100.0) >= error_gray((i + 1) / 100.0));
  }

  GridSpec g;
  g.min = {110.0, 20.0};
  g.max = unproject({400.0, 200.0}, g.min);
  std::vector<SurfaceCell> cells(3);
  cells[0].sample_id = 0;
  cells[0].accuracy = 1.0;
  cells[0].defined = true;
  cells[1].sample_id = 1;
  cells[1].accuracy = -0.5;
  cells[1].defined = true;
  cells[2].sample_id = 2;
  cells[2].defined = false;
  testutil::TempDir dir;
  RenderOptions opts;
  opts.cell_px = 1;
  render_error_map(g, cells, dir / "e.png", opts);
  const Image img = read_png(dir / "e.png");
  REQUIRE(img.width == 3);
  REQUIRE(img.height == 2);
  CHECK(img.pixel(0, 1) == Rgb{0, 0, 0});
  CHECK(img.pixel(1, 1) == Rgb{255, 255, 255});
  CHECK(img.pixel(2, 1) == opts.missing);
  CHECK(img.pixel(0, 0) == opts.missing);
}

TEST_CASE("png round trip keeps pixels and provenance") {
  Image img;
  img.width = 7;
  img.height = 5;
  img.text = "seed=7 hash=abc";
  for (std::size_t i = 0; i < img.width * img.height * 3; ++i) img.rgb.push_back(static_cast<std::uint8_t>(i * 37));
  testutil::TempDir dir;
  write_png(dir / "r.png", img);
  const Image back = read_png(dir / "r.png");
  CHECK(back.width == img.width);
  CHECK(back.height == img.height);
  CHECK(back.rgb == img.rgb);
  CHECK(back.text == img.text);
  CHECK_THROWS_AS(read_png(dir / "missing.png"), IoError);
  testutil::write_file(dir / "junk.png", "not a png");
  CHECK_THROWS_AS(read_png(dir / "junk.png"), ParseError);
}

TEST_CASE("uniform curve is a horizontal line at one twenty-fourth") {
  const std::vector<Series> s{{"uniform", std::vector<double>(24, 1.0 / 24.0), false}};
  const std::string svg = line_chart_svg(s, {});
  const auto lines = polylines(svg);
  REQUIRE(lines.size() == 1);
  REQUIRE(lines[0].size() == 24);
  for (const auto& p : lines[0]) CHECK(p.y == lines[0][0].y);
  CHECK(svg.find(">0.04167</text>") != std::string::npos);
}

TEST_CASE("identical series produce identical paths") {
  const auto v = st82_hourly();
  const std::vector<Series> s{{"truth", v, true}, {"prediction", v, false}};
  const auto lines = polylines(line_chart_svg(s, {}));
  REQUIRE(lines.size() == 2);
  REQUIRE(lines[0].size() == lines[1].size());
  for (std::size_t i = 0; i < lines[0].size(); ++i) {
    CHECK(lines[0][i].x == lines[1][i].x);
    CHECK(lines[0][i].y == lines[1][i].y);
  }
}

TEST_CASE("ST82 truth curve peaks at hour 17") {
  const std::vector<Series> s{{"ST82", st82_hourly(), true}};
  const auto lines = polylines(line_chart_svg(s, {}));
  REQUIRE(lines.size() == 1);
  std::size_t top = 0;
  for (std::size_t i = 1; i < 24; ++i) {
    if (lines[0][i].y < lines[0][top].y) top = i;
  }
  CHECK(top == 17);
}

TEST_CASE("curves require 24 values") {
  testutil::TempDir dir;
  const std::vector<Series> short_series{{"x", std::vector<double>(23, 0.1), false}};
  CHECK_THROWS_AS(render_curves(short_series, dir / "c.svg"), ShapeError);
  const std::vector<Series> ragged{{"a", std::vector<double>(5, 0.1), false}, {"b", std::vector<double>(4, 0.1), false}};
  CHECK_THROWS_AS(render_lines(ragged, dir / "l.svg"), ShapeError);
  const std::vector<Series> nan{{"a", {0.1, kNaN}, false}};
  CHECK_THROWS_AS(render_lines(nan, dir / "l.svg"), RangeError);
}

TEST_CASE("rendering is deterministic") {
  testutil::TempDir dir;
  const std::vector<Series> s{{"t", st82_hourly(), true}};
  ChartOptions copts;
  copts.title = "ST82 <hourly>";
  copts.provenance = "p";
  render_curves(s, dir / "a.svg", copts);
  render_curves(s, dir / "b.svg", copts);
  CHECK(testutil::read_file(dir / "a.svg") == testutil::read_file(dir / "b.svg"));
  CHECK(testutil::read_file(dir / "a.svg").find("ST82 &lt;hourly&gt;") != std::string::npos);
  render_heatmap(golden_raster(), ColorRamp::viridis(), dir / "a.png");
  render_heatmap(golden_raster(), ColorRamp::viridis(), dir / "b.png");
  CHECK(testutil::read_file(dir / "a.png") == testutil::read_file(dir / "b.png"));
}

}  // TEST_SUITE
