#pragma once

#include <filesystem>
#include <optional>
#include <vector>

#include <Eigen/Core>

#include "monoplot/image.hpp"

namespace monoplot {

/// Six-coefficient affine map from raster pixel indices to world coordinates.
///
///   x = x_geo_ul + col * p_width  + row * row_rot
///   y = y_geo_ul + row * p_height + col * col_rot
///
/// Integer (col, row) addresses the cell center. The rotation terms are
/// linear coefficients in world units per pixel, not angles.
struct GeoTransform {
  double x_geo_ul = 0.0;
  double y_geo_ul = 0.0;
  double p_width = 1.0;
  double p_height = -1.0;
  double row_rot = 0.0;
  double col_rot = 0.0;

  double determinant() const { return p_width * p_height - row_rot * col_rot; }
  bool invertible() const { return determinant() != 0.0; }

  Eigen::Vector2d pixel_to_world(double col, double row) const {
    return {x_geo_ul + col * p_width + row * row_rot, y_geo_ul + row * p_height + col * col_rot};
  }

  /// Returns (col, row).
  Eigen::Vector2d world_to_pixel(double x, double y) const {
    const double dx = x - x_geo_ul;
    const double dy = y - y_geo_ul;
    const double det = determinant();
    return {(p_height * dx - row_rot * dy) / det, (p_width * dy - col_rot * dx) / det};
  }

  /// Length of the longer cell edge in world units.
  double cell_size() const;

  bool operator==(const GeoTransform&) const = default;
};

struct WorldPoint {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  Eigen::Vector3d vec() const { return {x, y, z}; }
  bool operator==(const WorldPoint&) const = default;
};

/// Elevation grid; immutable once constructed.
class DemRaster {
 public:
  static constexpr double kDefaultNodata = -9999.0;

  /// Validates the invariants (size >= 2x2, finite non-nodata values,
  /// invertible transform) and throws InputError otherwise.
  DemRaster(int n_rows, int n_cols, std::vector<double> elevations, GeoTransform transform,
            double nodata = kDefaultNodata);

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  double nodata() const { return nodata_; }
  const GeoTransform& transform() const { return transform_; }
  const std::vector<double>& elevations() const { return elevations_; }

  double at(int row, int col) const {
    return elevations_[static_cast<std::size_t>(row) * cols_ + col];
  }
  bool is_nodata(int row, int col) const { return at(row, col) == nodata_; }
  bool is_nodata_value(double z) const { return z == nodata_; }

  Eigen::Vector2d pixel_to_world(double col, double row) const {
    return transform_.pixel_to_world(col, row);
  }
  Eigen::Vector2d world_to_pixel(double x, double y) const {
    return transform_.world_to_pixel(x, y);
  }

  /// Bilinear elevation at a world location; nullopt outside the raster
  /// hull or when any cell with nonzero weight is nodata.
  std::optional<double> sample_elevation(double x, double y) const;

  /// Same as sample_elevation, addressed by fractional pixel coordinates.
  std::optional<double> sample_pixel(double col, double row) const;

  /// Min and max of non-nodata cells; nullopt when every cell is nodata.
  std::optional<std::pair<double, double>> elevation_range() const { return range_; }

  double cell_size() const { return transform_.cell_size(); }

 private:
  int rows_;
  int cols_;
  std::vector<double> elevations_;
  GeoTransform transform_;
  double nodata_;
  std::optional<std::pair<double, double>> range_;  // over valid cells
};

/// Linear rescale of elevations to [0, 255] (nodata -> 0, flat -> 0).
/// Throws Error("empty DEM") when no cell carries data.
GrayImage dem_to_grayscale(const DemRaster& dem);

/// Lambertian hillshade (azimuth/altitude in degrees); nodata -> 0.
GrayImage dem_hillshade(const DemRaster& dem, double azimuth_deg = 315.0,
                        double altitude_deg = 45.0);

/// Reads an ESRI ASCII grid. A sibling "<stem>.geo.json" overrides the
/// header-derived transform when present.
DemRaster load_esri_ascii(const std::filesystem::path& path);
void save_esri_ascii(const std::filesystem::path& path, const DemRaster& dem);

std::filesystem::path geo_sidecar_path(const std::filesystem::path& asc_path);

}  // namespace monoplot
