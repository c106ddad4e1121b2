#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "urbanflux/evalx.hpp"
#include "urbanflux/geo_grid.hpp"

namespace urbanflux {

struct Rgb {
  std::uint8_t r = 0, g = 0, b = 0;
  friend bool operator==(const Rgb&, const Rgb&) = default;
};

struct ColorRamp {
  struct Stop {
    double at = 0.0;
    Rgb color;
  };
  std::vector<Stop> stops;

  /// Positions strictly increasing from 0 to 1; ConfigError otherwise.
  void validate() const;
  /// Linear interpolation between stops; v is clamped to [0, 1].
  Rgb at(double v) const;

  static ColorRamp inferno();
  static ColorRamp viridis();
  static ColorRamp grayscale();
  /// "inferno", "viridis" or "gray".
  static ColorRamp by_name(const std::string& name);
};

/// Cell values on the sampling lattice, row 0 southmost. NaN marks a
/// missing cell.
struct GridRaster {
  std::size_t width = 0;
  std::size_t height = 0;
  double cell_m = 200.0;
  GeoPoint origin;
  std::vector<double> values;

  GridRaster() = default;
  GridRaster(std::size_t w, std::size_t h);
  double& at(std::size_t col, std::size_t row) { return values[row * width + col]; }
  double at(std::size_t col, std::size_t row) const { return values[row * width + col]; }
};

/// Raster over `grid` with `values[i]` placed at lattice index `sample_ids[i]`.
GridRaster raster_from_samples(const GridSpec& grid, std::span<const std::size_t> sample_ids,
                               std::span<const double> values);

struct RenderOptions {
  std::size_t cell_px = 4;
  Rgb missing{30, 90, 160};
  /// Written into a tEXt chunk or SVG comment when non-empty.
  std::string provenance;
};

/// Max-normalized heatmap, north up, one cell_px square per cell.
void render_heatmap(const GridRaster& raster, const ColorRamp& ramp, const std::filesystem::path& path,
                    const RenderOptions& opts = {});

/// Grayscale error map: clamp(1 - accuracy, 0, 1) from black to white.
void render_error_map(const GridSpec& grid, std::span<const SurfaceCell> surface,
                      const std::filesystem::path& path, const RenderOptions& opts = {});

std::uint8_t error_gray(double accuracy);

struct Image {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> rgb;  ///< row-major, top row first
  std::string text;               ///< provenance tEXt, if present
  Rgb pixel(std::size_t x, std::size_t y) const;
};

void write_png(const std::filesystem::path& path, const Image& image);
Image read_png(const std::filesystem::path& path);

struct Series {
  std::string label;
  std::vector<double> values;
  bool faded = false;  ///< ground truth drawn faded, predictions bright
};

struct ChartOptions {
  std::string title;
  std::string x_label = "hour";
  std::string y_label;
  double width = 640.0;
  double height = 360.0;
  std::string provenance;
};

/// Line chart over x = 0..n-1 for equally long series.
std::string line_chart_svg(std::span<const Series> series, const ChartOptions& opts);

/// 24-hour curves; ShapeError unless every series has 24 values.
void render_curves(std::span<const Series> series, const std::filesystem::path& path,
                   const ChartOptions& opts = {});

/// Any equal-length series (training curves, GA history).
void render_lines(std::span<const Series> series, const std::filesystem::path& path,
                  const ChartOptions& opts = {});

}  // namespace urbanflux
