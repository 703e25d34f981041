#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "monoplot/camera.hpp"
#include "monoplot/dem.hpp"
#include "monoplot/image.hpp"

namespace monoplot {

struct Ray {
  Eigen::Vector3d origin;
  Eigen::Vector3d direction;  // unit length
};

/// World-frame ray through pixel (u, v), starting at the optical center.
Ray pixel_ray(const CameraParams& cam, const Intrinsics& intr, double u, double v);

/// First intersection of the ray with the bilinear DEM surface. The ray is
/// marched in half-cell steps and the first sign change of
/// (ray height - terrain height) is refined by bisection until the height
/// gap is below 1e-3 cell. Misses when the ray leaves the DEM bounds, meets
/// nodata, or enters the bounds below the surface.
std::optional<WorldPoint> intersect_dem(const Ray& ray, const DemRaster& dem);

/// Height gap accepted by intersect_dem, in world units.
double intersection_tolerance(const DemRaster& dem);

enum class VisibilityMethod { kRayTrace, kDepthBuffer };

std::string to_string(VisibilityMethod m);
VisibilityMethod visibility_method_from_string(const std::string& s);

/// Per-pixel world coordinates. Map cell (i, j) belongs to photo pixel
/// (i * stride, j * stride).
struct CoordinateMaps {
  int width = 0;
  int height = 0;
  int stride = 1;
  std::vector<double> x, y, z;
  std::vector<std::uint8_t> valid;

  CoordinateMaps() = default;
  CoordinateMaps(int w, int h, int s = 1);

  std::size_t index(int i, int j) const { return static_cast<std::size_t>(j) * width + i; }
  std::size_t valid_count() const;
};

/// Nearest camera-frame depth per pixel; source is the DEM triangle id, or
/// -1 where nothing was drawn.
struct DepthBuffer {
  int width = 0;
  int height = 0;
  std::vector<double> depth;
  std::vector<std::int64_t> source;

  std::size_t index(int u, int v) const { return static_cast<std::size_t>(v) * width + u; }
};

/// Each DEM cell square (between four cell centers) is split along the
/// lower-left to upper-right diagonal. Triangle id = 2 * (row * cols + col) + k.
std::array<WorldPoint, 3> dem_triangle(const DemRaster& dem, std::int64_t id);

DepthBuffer render_depth_buffer(const CameraParams& cam, const Intrinsics& intr,
                                const DemRaster& dem, ImageSize size);

using ProgressFn = std::function<void(double)>;

CoordinateMaps georeference_image(const CameraParams& cam, const Intrinsics& intr,
                                  const DemRaster& dem, ImageSize size, VisibilityMethod method,
                                  int stride = 1, const ProgressFn& progress = {});

/// Elevation-colored render of the maps at photo resolution; invalid
/// pixels are black.
RgbImage render_elevation(const CoordinateMaps& maps, ImageSize photo_size);

/// Depth-colored render of a depth buffer; empty pixels are black.
RgbImage render_depth(const DepthBuffer& depth);

/// opacity * photo + (1 - opacity) * render, rounded half up per channel.
RgbImage blend_overlay(const RgbImage& photo, const RgbImage& render, double opacity);

RgbImage render_overlay(const RgbImage& photo, const CoordinateMaps& maps, double opacity);
RgbImage render_overlay(const RgbImage& photo, const DepthBuffer& depth, double opacity);

/// Writes <dir>/maps.json, <dir>/maps.bin (f32 little-endian, band
/// sequential x, y, z, valid) and <dir>/maps_{x,y,z}.png.
struct MapsWriteSummary {
  std::array<double, 3> min{};
  std::array<double, 3> max{};
};
MapsWriteSummary write_coordinate_maps(const std::filesystem::path& dir, const CoordinateMaps& maps);
CoordinateMaps read_coordinate_maps(const std::filesystem::path& dir);

/// Raw band-sequential float32 payload of maps.bin.
std::vector<std::uint8_t> encode_maps_binary(const CoordinateMaps& maps);

}  // namespace monoplot
