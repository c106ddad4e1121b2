#include "urbanflux/render.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <memory>
#include <sstream>

#include "urbanflux/errors.hpp"

namespace urbanflux {

void ColorRamp::validate() const {
  if (stops.size() < 2) throw ConfigError("a color ramp needs at least two stops");
  if (stops.front().at != 0.0 || stops.back().at != 1.0) throw ConfigError("color ramp must span [0, 1]");
  for (std::size_t i = 1; i < stops.size(); ++i) {
    if (!(stops[i].at > stops[i - 1].at)) throw ConfigError("color ramp stops must increase");
  }
}

Rgb ColorRamp::at(double v) const {
  if (!std::isfinite(v)) v = 0.0;
  v = std::clamp(v, 0.0, 1.0);
  std::size_t i = 1;
  while (i + 1 < stops.size() && v > stops[i].at) ++i;
  const Stop& a = stops[i - 1];
  const Stop& b = stops[i];
  const double t = (v - a.at) / (b.at - a.at);
  auto mix = [t](std::uint8_t x, std::uint8_t y) {
    return static_cast<std::uint8_t>(std::lround(x + (static_cast<double>(y) - x) * t));
  };
  return {mix(a.color.r, b.color.r), mix(a.color.g, b.color.g), mix(a.color.b, b.color.b)};
}

ColorRamp ColorRamp::inferno() {
  return {{{0.0, {0, 0, 4}}, {0.25, {87, 16, 110}}, {0.5, {188, 55, 84}}, {0.75, {249, 142, 9}}, {1.0, {252, 255, 164}}}};
}

ColorRamp ColorRamp::viridis() {
  return {{{0.0, {68, 1, 84}}, {0.25, {59, 82, 139}}, {0.5, {33, 145, 140}}, {0.75, {94, 201, 98}}, {1.0, {253, 231, 37}}}};
}

ColorRamp ColorRamp::grayscale() { return {{{0.0, {0, 0, 0}}, {1.0, {255, 255, 255}}}}; }

ColorRamp ColorRamp::by_name(const std::string& name) {
  if (name == "inferno") return inferno();
  if (name == "viridis") return viridis();
  if (name == "gray" || name == "grey") return grayscale();
  throw ConfigError("unknown color ramp '" + name + "'");
}

GridRaster::GridRaster(std::size_t w, std::size_t h)
    : width(w), height(h), values(w * h, std::numeric_limits<double>::quiet_NaN()) {}

GridRaster raster_from_samples(const GridSpec& grid, std::span<const std::size_t> sample_ids,
                               std::span<const double> values) {
  if (sample_ids.size() != values.size()) throw ShapeError("sample ids and values differ in length");
  const LatticeDims dims = lattice_dims(grid);
  GridRaster r(dims.cols, dims.rows);
  r.cell_m = grid.step_m;
  r.origin = grid.min;
  for (std::size_t i = 0; i < sample_ids.size(); ++i) {
    if (sample_ids[i] >= r.values.size()) {
      throw RangeError("sample id " + std::to_string(sample_ids[i]) + " is outside the lattice");
    }
    r.values[sample_ids[i]] = values[i];
  }
  return r;
}

Rgb Image::pixel(std::size_t x, std::size_t y) const {
  const std::size_t o = (y * width + x) * 3;
  return {rgb[o], rgb[o + 1], rgb[o + 2]};
}

namespace {

Image blank(std::size_t cols, std::size_t rows, std::size_t px) {
  if (cols == 0 || rows == 0 || px == 0) throw ShapeError("cannot render an empty raster");
  Image img;
  img.width = cols * px;
  img.height = rows * px;
  img.rgb.assign(img.width * img.height * 3, 0);
  return img;
}

// Raster row 0 is south, image row 0 is north.
void fill_cell(Image& img, std::size_t col, std::size_t row, std::size_t rows, std::size_t px, Rgb c) {
  const std::size_t top = (rows - 1 - row) * px;
  for (std::size_t y = top; y < top + px; ++y) {
    for (std::size_t x = col * px; x < (col + 1) * px; ++x) {
      const std::size_t o = (y * img.width + x) * 3;
      img.rgb[o] = c.r;
      img.rgb[o + 1] = c.g;
      img.rgb[o + 2] = c.b;
    }
  }
}

struct FileCloser {
  void operator()(std::FILE* f) const { std::fclose(f); }
};

void png_write_raw(std::FILE* f, const Image& image, std::vector<png_bytep>& rows) {
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw IoError("png: out of memory");
  png_infop info = png_create_info_struct(png);
  if (!info || setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("png: write failed");
  }
  png_init_io(png, f);
  png_set_compression_level(png, 9);
  png_set_IHDR(png, info, static_cast<png_uint_32>(image.width), static_cast<png_uint_32>(image.height), 8,
               PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_text text{};
  if (!image.text.empty()) {
    text.compression = PNG_TEXT_COMPRESSION_NONE;
    text.key = const_cast<char*>("provenance");
    text.text = const_cast<char*>(image.text.c_str());
    png_set_text(png, info, &text, 1);
  }
  png_write_info(png, info);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace

void write_png(const std::filesystem::path& path, const Image& image) {
  if (image.rgb.size() != image.width * image.height * 3) throw ShapeError("image buffer size mismatch");
  std::unique_ptr<std::FILE, FileCloser> f(std::fopen(path.string().c_str(), "wb"));
  if (!f) throw IoError("cannot write " + path.string());
  std::vector<png_bytep> rows(image.height);
  for (std::size_t y = 0; y < image.height; ++y) {
    rows[y] = const_cast<png_bytep>(image.rgb.data() + y * image.width * 3);
  }
  png_write_raw(f.get(), image, rows);
}

Image read_png(const std::filesystem::path& path) {
  std::unique_ptr<std::FILE, FileCloser> f(std::fopen(path.string().c_str(), "rb"));
  if (!f) throw IoError("cannot read " + path.string());
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw IoError("png: out of memory");
  png_infop info = png_create_info_struct(png);
  Image img;
  std::vector<png_bytep> rows;
  if (!info || setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw ParseError(0, "png: cannot decode " + path.string());
  }
  png_init_io(png, f.get());
  png_read_info(png, info);
  png_set_expand(png);
  png_set_strip_16(png);
  png_set_strip_alpha(png);
  png_set_gray_to_rgb(png);
  png_read_update_info(png, info);
  img.width = png_get_image_width(png, info);
  img.height = png_get_image_height(png, info);
  img.rgb.assign(img.width * img.height * 3, 0);
  rows.resize(img.height);
  for (std::size_t y = 0; y < img.height; ++y) rows[y] = img.rgb.data() + y * img.width * 3;
  png_read_image(png, rows.data());
  png_read_end(png, info);
  png_textp text = nullptr;
  int n = 0;
  if (png_get_text(png, info, &text, &n) > 0) {
    for (int i = 0; i < n; ++i) {
      if (std::string(text[i].key) == "provenance") img.text = text[i].text;
    }
  }
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

void render_heatmap(const GridRaster& raster, const ColorRamp& ramp, const std::filesystem::path& path,
                    const RenderOptions& opts) {
  ramp.validate();
  if (raster.values.size() != raster.width * raster.height) throw ShapeError("raster size mismatch");
  double max = 0.0;
  for (double v : raster.values) {
    if (std::isfinite(v)) max = std::max(max, v);
  }
  Image img = blank(raster.width, raster.height, opts.cell_px);
  img.text = opts.provenance;
  for (std::size_t row = 0; row < raster.height; ++row) {
    for (std::size_t col = 0; col < raster.width; ++col) {
      const double v = raster.at(col, row);
      const Rgb c = std::isfinite(v) ? ramp.at(max > 0.0 ? v / max : 0.0) : opts.missing;
      fill_cell(img, col, row, raster.height, opts.cell_px, c);
    }
  }
  write_png(path, img);
}

std::uint8_t error_gray(double accuracy) {
  const double e = std::clamp(1.0 - accuracy, 0.0, 1.0);
  return static_cast<std::uint8_t>(std::lround(e * 255.0));
}

void render_error_map(const GridSpec& grid, std::span<const SurfaceCell> surface,
                      const std::filesystem::path& path, const RenderOptions& opts) {
  const LatticeDims dims = lattice_dims(grid);
  Image img = blank(dims.cols, dims.rows, opts.cell_px);
  img.text = opts.provenance;
  for (std::size_t row = 0; row < dims.rows; ++row) {
    for (std::size_t col = 0; col < dims.cols; ++col) fill_cell(img, col, row, dims.rows, opts.cell_px, opts.missing);
  }
  for (const auto& c : surface) {
    if (c.sample_id >= dims.cols * dims.rows) {
      throw RangeError("sample id " + std::to_string(c.sample_id) + " is outside the lattice");
    }
    if (!c.defined || !std::isfinite(c.accuracy)) continue;
    const std::uint8_t g = error_gray(c.accuracy);
    fill_cell(img, c.sample_id % dims.cols, c.sample_id / dims.cols, dims.rows, opts.cell_px, {g, g, g});
  }
  write_png(path, img);
}

namespace {

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  std::string s(buf);
  if (s == "-0.000") s = "0.000";
  return s;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string tick_label(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"};

}  // namespace

std::string line_chart_svg(std::span<const Series> series, const ChartOptions& opts) {
  if (series.empty()) throw ShapeError("a chart needs at least one series");
  const std::size_t n = series.front().values.size();
  if (n == 0) throw ShapeError("series must not be empty");
  double lo = 0.0, hi = 0.0;
  for (const auto& s : series) {
    if (s.values.size() != n) throw ShapeError("all series must have the same length");
    for (double v : s.values) {
      if (!std::isfinite(v)) throw RangeError("series '" + s.label + "' has a non-finite value");
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  if (!(hi > lo)) hi = lo + 1.0;
  const double left = 64.0, right = 160.0, top = 40.0, bottom = 48.0;
  const double pw = opts.width - left - right;
  const double ph = opts.height - top - bottom;
  auto xpos = [&](std::size_t i) { return n == 1 ? left + pw / 2.0 : left + pw * static_cast<double>(i) / static_cast<double>(n - 1); };
  auto ypos = [&](double v) { return top + ph - (v - lo) / (hi - lo) * ph; };

  std::ostringstream o;
  o << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" << fmt(opts.width) << "\" height=\""
    << fmt(opts.height) << "\" viewBox=\"0 0 " << fmt(opts.width) << ' ' << fmt(opts.height) << "\">\n";
  if (!opts.provenance.empty()) o << "<!-- provenance: " << escape(opts.provenance) << " -->\n";
  o << "<rect x=\"0\" y=\"0\" width=\"" << fmt(opts.width) << "\" height=\"" << fmt(opts.height) << "\" fill=\"#ffffff\"/>\n";
  if (!opts.title.empty()) {
    o << "<text x=\"" << fmt(left) << "\" y=\"24.000\" font-family=\"sans-serif\" font-size=\"14\">" << escape(opts.title)
      << "</text>\n";
  }
  o << "<g stroke=\"#444444\" stroke-width=\"1\">\n";
  o << "<line x1=\"" << fmt(left) << "\" y1=\"" << fmt(top + ph) << "\" x2=\"" << fmt(left + pw) << "\" y2=\"" << fmt(top + ph) << "\"/>\n";
  o << "<line x1=\"" << fmt(left) << "\" y1=\"" << fmt(top) << "\" x2=\"" << fmt(left) << "\" y2=\"" << fmt(top + ph) << "\"/>\n";
  o << "</g>\n<g font-family=\"sans-serif\" font-size=\"10\" fill=\"#444444\">\n";
  const std::size_t xstep = std::max<std::size_t>(1, (n + 7) / 8);
  for (std::size_t i = 0; i < n; i += xstep) {
    o << "<text x=\"" << fmt(xpos(i)) << "\" y=\"" << fmt(top + ph + 16.0) << "\" text-anchor=\"middle\">" << i << "</text>\n";
  }
  for (int k = 0; k <= 4; ++k) {
    const double v = lo + (hi - lo) * k / 4.0;
    o << "<text x=\"" << fmt(left - 6.0) << "\" y=\"" << fmt(ypos(v) + 3.0) << "\" text-anchor=\"end\">" << escape(tick_label(v))
      << "</text>\n";
  }
  o << "<text x=\"" << fmt(left + pw / 2.0) << "\" y=\"" << fmt(opts.height - 10.0) << "\" text-anchor=\"middle\">"
    << escape(opts.x_label) << "</text>\n";
  if (!opts.y_label.empty()) {
    o << "<text x=\"14.000\" y=\"" << fmt(top + ph / 2.0) << "\" transform=\"rotate(-90 14.000 " << fmt(top + ph / 2.0)
      << ")\" text-anchor=\"middle\">" << escape(opts.y_label) << "</text>\n";
  }
  o << "</g>\n";
  for (std::size_t s = 0; s < series.size(); ++s) {
    const char* color = kPalette[s % std::size(kPalette)];
    o << "<polyline data-label=\"" << escape(series[s].label) << "\" fill=\"none\" stroke=\"" << color
      << "\" stroke-width=\"2\" stroke-opacity=\"" << (series[s].faded ? "0.35" : "1") << "\" points=\"";
    for (std::size_t i = 0; i < n; ++i) {
      if (i) o << ' ';
      o << fmt(xpos(i)) << ',' << fmt(ypos(series[s].values[i]));
    }
    o << "\"/>\n";
    const double ly = top + 12.0 + 18.0 * static_cast<double>(s);
    o << "<line x1=\"" << fmt(left + pw + 12.0) << "\" y1=\"" << fmt(ly) << "\" x2=\"" << fmt(left + pw + 32.0) << "\" y2=\""
      << fmt(ly) << "\" stroke=\"" << color << "\" stroke-width=\"2\" stroke-opacity=\"" << (series[s].faded ? "0.35" : "1")
      << "\"/>\n";
    o << "<text x=\"" << fmt(left + pw + 38.0) << "\" y=\"" << fmt(ly + 4.0)
      << "\" font-family=\"sans-serif\" font-size=\"10\">" << escape(series[s].label) << "</text>\n";
  }
  o << "</svg>\n";
  return o.str();
}

namespace {

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace

void render_curves(std::span<const Series> series, const std::filesystem::path& path, const ChartOptions& opts) {
  for (const auto& s : series) {
    if (s.values.size() != kHours) {
      throw ShapeError("curve '" + s.label + "' has " + std::to_string(s.values.size()) + " values, expected 24");
    }
  }
  write_text(path, line_chart_svg(series, opts));
}

void render_lines(std::span<const Series> series, const std::filesystem::path& path, const ChartOptions& opts) {
  write_text(path, line_chart_svg(series, opts));
}

}  // namespace urbanflux
