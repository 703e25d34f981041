#include "monoplot/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <Eigen/Geometry>

#include "monoplot/georef.hpp"

namespace monoplot::synthetic {

std::vector<Box> three_boxes(int size) {
  auto at = [size](double f) { return static_cast<int>(std::lround(f * size)); };
  return {
      {at(0.16), at(0.35), at(0.23), at(0.47), 30.0 * size / 256.0},
      {at(0.55), at(0.78), at(0.16), at(0.31), 50.0 * size / 256.0},
      {at(0.43), at(0.66), at(0.59), at(0.82), 20.0 * size / 256.0},
  };
}

DemRaster box_dem(int size, double cell, const std::vector<Box>& boxes) {
  std::vector<double> z(static_cast<std::size_t>(size) * size, 0.0);
  for (const Box& b : boxes) {
    for (int r = b.row0; r <= b.row1; ++r) {
      for (int c = b.col0; c <= b.col1; ++c) z[static_cast<std::size_t>(r) * size + c] = b.height * cell;
    }
  }
  GeoTransform gt;
  gt.x_geo_ul = 0.0;
  gt.y_geo_ul = (size - 1) * cell;
  gt.p_width = cell;
  gt.p_height = -cell;
  return DemRaster(size, size, std::move(z), gt);
}

DemRaster three_box_dem(int size, double cell) { return box_dem(size, cell, three_boxes(size)); }

CameraParams three_box_camera(const DemRaster& dem) {
  const Eigen::Vector2d a = dem.pixel_to_world(0, 0);
  const Eigen::Vector2d b = dem.pixel_to_world(dem.cols() - 1, dem.rows() - 1);
  const double extent = std::max(std::abs(b.x() - a.x()), std::abs(b.y() - a.y()));
  const Eigen::Vector2d lo = a.cwiseMin(b);
  const Eigen::Vector3d eye(lo.x() - 0.25 * extent, lo.y() - 0.45 * extent, 0.75 * extent);
  const Eigen::Vector3d target(lo.x() + 0.5 * extent, lo.y() + 0.5 * extent, 0.0);
  return camera_looking_at(eye, target, 55.0 * std::numbers::pi / 180.0);
}

GrayImage render_photo(const CameraParams& cam, const DemRaster& dem, ImageSize size) {
  const Intrinsics intr = intrinsics_from_fov(cam.fov, size.width, size.height);
  const DepthBuffer buf = render_depth_buffer(cam, intr, dem, size);
  const auto range = dem.elevation_range().value_or(std::make_pair(0.0, 1.0));
  const double span = range.second > range.first ? range.second - range.first : 1.0;
  const Eigen::Vector3d light = Eigen::Vector3d(-0.4, -0.6, 1.0).normalized();

  GrayImage img(size.width, size.height, 0);
  for (int v = 0; v < size.height; ++v) {
    for (int u = 0; u < size.width; ++u) {
      const std::int64_t id = buf.source[buf.index(u, v)];
      if (id < 0) continue;
      const auto tri = dem_triangle(dem, id);
      Eigen::Vector3d n = (tri[1].vec() - tri[0].vec()).cross(tri[2].vec() - tri[0].vec());
      if (n.z() < 0.0) n = -n;
      n.normalize();
      const double zc = (tri[0].z + tri[1].z + tri[2].z) / 3.0;
      const double albedo = 0.35 + 0.6 * (zc - range.first) / span;
      const double shade = 0.25 + 0.75 * std::max(0.0, n.dot(light));
      img.at(u, v) = static_cast<std::uint8_t>(std::clamp(std::floor(255.0 * albedo * shade + 0.5), 0.0, 255.0));
    }
  }
  return img;
}

}  // namespace monoplot::synthetic
