#include <cmath>
#include <cstring>
#include <random>

#include <gtest/gtest.h>

#include "monoplot/error.hpp"
#include "monoplot/georef.hpp"
#include "monoplot/synthetic.hpp"
#include "monoplot_test/support.hpp"

namespace monoplot {
namespace {

// Flat DEM centred on the world origin.
DemRaster flat_dem(int n, double z, double cell = 1.0) {
  GeoTransform gt;
  gt.x_geo_ul = -(n - 1) * cell / 2;
  gt.y_geo_ul = (n - 1) * cell / 2;
  gt.p_width = cell;
  gt.p_height = -cell;
  return DemRaster(n, n, std::vector<double>(static_cast<std::size_t>(n) * n, z), gt);
}

CameraParams nadir(const Eigen::Vector3d& eye, double fov) {
  return camera_looking_at(eye, eye - Eigen::Vector3d(0, 0, 1), fov);
}

// First crossing from above the terrain to on or below it, marching at
// 1/100 cell with no refinement. Entering the hull below ground is a miss.
std::optional<Eigen::Vector3d> brute_hit(const Ray& ray, const DemRaster& dem, double t_max) {
  const double step = dem.cell_size() / 100.0;
  bool inside = false;
  for (double t = 0.0; t <= t_max; t += step) {
    const Eigen::Vector3d p = ray.origin + t * ray.direction;
    const auto z = dem.sample_elevation(p.x(), p.y());
    if (!z) {
      if (inside) return std::nullopt;
      continue;
    }
    if (p.z() <= *z) return inside ? std::optional(p) : std::nullopt;
    inside = true;
  }
  return std::nullopt;
}

TEST(Intersect, NadirRayOnFlatGround) {
  const DemRaster dem = flat_dem(41, 0.0);
  const Ray ray{{0, 0, 10}, {0, 0, -1}};
  const auto hit = intersect_dem(ray, dem);
  ASSERT_TRUE(hit);
  EXPECT_NEAR(hit->x, 0, 1e-12);
  EXPECT_NEAR(hit->y, 0, 1e-12);
  EXPECT_NEAR(hit->z, 0, intersection_tolerance(dem));
}

TEST(Intersect, UpwardRayMisses) {
  const DemRaster dem = flat_dem(41, 0.0);
  EXPECT_FALSE(intersect_dem({{0, 0, 10}, Eigen::Vector3d(0.3, 0.1, 1).normalized()}, dem));
}

TEST(Intersect, RayLeavingTheHullMisses) {
  const DemRaster dem = flat_dem(41, 0.0);
  EXPECT_FALSE(intersect_dem({{0, 0, 10}, Eigen::Vector3d(1, 0, -0.01).normalized()}, dem));
}

TEST(Intersect, StartingBelowTheSurfaceMisses) {
  const DemRaster dem = flat_dem(41, 5.0);
  EXPECT_FALSE(intersect_dem({{0, 0, 1}, {0, 0, -1}}, dem));
}

TEST(Intersect, FirstHitOnOneBoxMatchesDenseMarching) {
  const DemRaster dem = synthetic::box_dem(64, 1.0, {{24, 39, 24, 39, 12.0}});
  const CameraParams cam = camera_looking_at({-20, -25, 30}, {32, 32, 0}, 1.0);
  const Intrinsics intr = intrinsics_from_fov(cam.fov, 160, 120);
  int both = 0, agree = 0, only_one = 0;
  for (int v = 0; v < 120; v += 3) {
    for (int u = 0; u < 160; u += 3) {
      const Ray ray = pixel_ray(cam, intr, u, v);
      const auto got = intersect_dem(ray, dem);
      const auto want = brute_hit(ray, dem, 200.0);
      if (got.has_value() != want.has_value()) {
        ++only_one;
        continue;
      }
      if (!got) continue;
      ++both;
      if ((got->vec() - *want).norm() < 0.05) ++agree;
      const auto z = dem.sample_elevation(got->x, got->y);
      ASSERT_TRUE(z);
      EXPECT_LT(std::abs(got->z - *z), intersection_tolerance(dem));
    }
  }
  EXPECT_GT(both, 500);
  // Half-cell stepping may skip a sliver near silhouettes; nothing else.
  EXPECT_GE(agree, 0.99 * both);
  EXPECT_LE(only_one, 0.01 * both);
}

TEST(Georef, FlatNadirMapIsAffineInU) {
  const DemRaster dem = flat_dem(201, 0.0);
  const CameraParams cam = nadir({0, 0, 50}, std::numbers::pi / 2);
  const ImageSize size{64, 48};
  const Intrinsics intr = intrinsics_from_fov(cam.fov, size.width, size.height);
  ASSERT_DOUBLE_EQ(intr.fx, 32.0);
  for (auto method : {VisibilityMethod::kRayTrace, VisibilityMethod::kDepthBuffer}) {
    const CoordinateMaps maps = georeference_image(cam, intr, dem, size, method);
    ASSERT_EQ(maps.valid_count(), 64u * 48u) << to_string(method);
    // Similar triangles: x = ((u - cx) / f) * height along the image right axis.
    const Eigen::Vector3d right = cam.rotation().row(0).transpose();
    const Eigen::Vector3d down = cam.rotation().row(1).transpose();
    for (int v = 0; v < 48; v += 5) {
      for (int u = 0; u < 64; u += 5) {
        const Eigen::Vector3d expect = ((u - intr.cx) / intr.fx) * 50.0 * right + ((v - intr.cy) / intr.fy) * 50.0 * down;
        const std::size_t i = maps.index(u, v);
        EXPECT_NEAR(maps.x[i], expect.x(), 1e-6) << u << "," << v;
        EXPECT_NEAR(maps.y[i], expect.y(), 1e-6) << u << "," << v;
        EXPECT_NEAR(maps.z[i], 0.0, 1e-6);
      }
    }
  }
}

TEST(Georef, MissesAreInvalid) {
  const DemRaster dem = flat_dem(21, 0.0);
  const CameraParams cam = camera_looking_at({-50, 0, 5}, {0, 0, 4}, 1.2);
  const ImageSize size{80, 60};
  const Intrinsics intr = intrinsics_from_fov(cam.fov, size.width, size.height);
  const CoordinateMaps maps = georeference_image(cam, intr, dem, size, VisibilityMethod::kRayTrace);
  EXPECT_GT(maps.valid_count(), 0u);
  EXPECT_LT(maps.valid_count(), 80u * 60u);
  for (int u = 0; u < 80; ++u) EXPECT_EQ(maps.valid[maps.index(u, 0)], 0);  // sky row
}

struct SmallScene {
  DemRaster dem = synthetic::three_box_dem(96, 1.0);
  CameraParams cam = synthetic::three_box_camera(dem);
  ImageSize size{192, 192};
  Intrinsics intr = intrinsics_from_fov(cam.fov, 192, 192);
};

TEST(Georef, MethodsAgreeAndRoundTrip) {
  const SmallScene s;
  const auto rt = georeference_image(s.cam, s.intr, s.dem, s.size, VisibilityMethod::kRayTrace);
  const auto zb = georeference_image(s.cam, s.intr, s.dem, s.size, VisibilityMethod::kDepthBuffer);
  std::size_t both = 0, agree = 0, round_trip = 0;
  for (int v = 0; v < 192; ++v) {
    for (int u = 0; u < 192; ++u) {
      const std::size_t i = rt.index(u, v);
      for (const CoordinateMaps* m : {&rt, &zb}) {
        if (!m->valid[i]) continue;
        const WorldPoint p{m->x[i], m->y[i], m->z[i]};
        EXPECT_GT(to_camera_frame(s.cam, p.vec()).z(), 0.0);
        const auto px = project(s.cam, s.intr, p);
        if (px && std::hypot(px->u - u, px->v - v) < 0.5) ++round_trip;
      }
      if (!rt.valid[i] || !zb.valid[i]) continue;
      ++both;
      const Eigen::Vector3d d(rt.x[i] - zb.x[i], rt.y[i] - zb.y[i], rt.z[i] - zb.z[i]);
      if (d.norm() <= s.dem.cell_size()) ++agree;
    }
  }
  EXPECT_GT(both, 10000u);
  EXPECT_GE(agree, 0.99 * both);
  EXPECT_EQ(round_trip, rt.valid_count() + zb.valid_count());
}

TEST(Georef, RayTraceStaysOnTheSurface) {
  const SmallScene s;
  const auto rt = georeference_image(s.cam, s.intr, s.dem, s.size, VisibilityMethod::kRayTrace, 2);
  EXPECT_EQ(rt.width, 96);
  for (std::size_t i = 0; i < rt.valid.size(); ++i) {
    if (!rt.valid[i]) continue;
    const auto z = s.dem.sample_elevation(rt.x[i], rt.y[i]);
    ASSERT_TRUE(z);
    EXPECT_LT(std::abs(rt.z[i] - *z), intersection_tolerance(s.dem));
  }
}

TEST(Georef, StrideSamplesEveryKthPixel) {
  const SmallScene s;
  const auto full = georeference_image(s.cam, s.intr, s.dem, s.size, VisibilityMethod::kDepthBuffer);
  const auto coarse = georeference_image(s.cam, s.intr, s.dem, {190, 190}, VisibilityMethod::kDepthBuffer, 4);
  EXPECT_EQ(coarse.width, 48);
  EXPECT_EQ(coarse.height, 48);
  EXPECT_EQ(coarse.stride, 4);
  for (int j = 0; j < 48; ++j) {
    for (int i = 0; i < 48; ++i) {
      const std::size_t a = coarse.index(i, j), b = full.index(4 * i, 4 * j);
      ASSERT_EQ(coarse.valid[a], full.valid[b]);
      if (coarse.valid[a]) EXPECT_NEAR(coarse.z[a], full.z[b], 1e-9);
    }
  }
  EXPECT_THROW(georeference_image(s.cam, s.intr, s.dem, s.size, VisibilityMethod::kRayTrace, 0), InputError);
}

TEST(Georef, ProgressIsMonotoneAndReachesOne) {
  const SmallScene s;
  std::vector<double> seen;
  georeference_image(s.cam, s.intr, s.dem, s.size, VisibilityMethod::kDepthBuffer, 3,
                     [&](double p) { seen.push_back(p); });
  ASSERT_FALSE(seen.empty());
  EXPECT_TRUE(std::is_sorted(seen.begin(), seen.end()));
  EXPECT_DOUBLE_EQ(seen.back(), 1.0);
}

TEST(DepthBuffer, FacingAwayIsEmpty) {
  const DemRaster dem = flat_dem(21, 0.0);
  CameraParams cam;  // looks along +z, terrain below
  cam.t = Eigen::Vector3d(0, 0, -10);
  const DepthBuffer buf = render_depth_buffer(cam, intrinsics_from_fov(1.0, 40, 30), dem, {40, 30});
  for (double d : buf.depth) EXPECT_TRUE(std::isinf(d));
  for (auto s : buf.source) EXPECT_EQ(s, -1);
}

TEST(DepthBuffer, VertexDepthUnderNadirCamera) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> z(0, 3);
  std::vector<double> values(21 * 21);
  for (auto& v : values) v = z(rng);
  values[10 * 21 + 10] = 4.0;  // the vertex under the camera is a local peak
  GeoTransform gt;
  gt.x_geo_ul = -10;
  gt.y_geo_ul = 10;
  const DemRaster dem(21, 21, values, gt);
  const CameraParams cam = nadir({0, 0, 30}, 1.0);
  const ImageSize size{64, 64};
  const Intrinsics intr = intrinsics_from_fov(cam.fov, size.width, size.height);
  const DepthBuffer buf = render_depth_buffer(cam, intr, dem, size);
  // Vertex (0, 0, 4) projects onto the principal point, pixel (32, 32).
  EXPECT_NEAR(buf.depth[buf.index(32, 32)], 26.0, 1e-6);
}

TEST(DepthBuffer, TrianglesCoverTheirHalfPlaneSets) {
  const DemRaster dem(2, 2, {0.0, 1.0, 2.0, 0.5}, GeoTransform{-3, 3, 6, -6, 0, 0});
  const CameraParams cam = camera_looking_at({-1, -8, 12}, {0, 0, 0}, 1.2);
  const ImageSize size{120, 100};
  const Intrinsics intr = intrinsics_from_fov(cam.fov, size.width, size.height);
  const DepthBuffer buf = render_depth_buffer(cam, intr, dem, size);
  std::array<std::array<Eigen::Vector2d, 3>, 2> screen;
  for (int id = 0; id < 2; ++id) {
    const auto tri = dem_triangle(dem, id);
    for (int k = 0; k < 3; ++k) {
      const auto px = project(cam, intr, tri[k]);
      ASSERT_TRUE(px);
      screen[id][k] = {px->u, px->v};
    }
  }
  // Signed distance of (u, v) inside triangle t; negative outside.
  auto inside_by = [&](int t, double u, double v) {
    const auto& s = screen[t];
    const double area = (s[1] - s[0]).x() * (s[2] - s[0]).y() - (s[1] - s[0]).y() * (s[2] - s[0]).x();
    double d = std::numeric_limits<double>::infinity();
    for (int k = 0; k < 3; ++k) {
      const Eigen::Vector2d a = s[k], b = s[(k + 1) % 3];
      const double cross = (b - a).x() * (v - a.y()) - (b - a).y() * (u - a.x());
      d = std::min(d, (area > 0 ? cross : -cross) / (b - a).norm());
    }
    return d;
  };
  int interior = 0;
  for (int v = 0; v < size.height; ++v) {
    for (int u = 0; u < size.width; ++u) {
      const auto src = buf.source[buf.index(u, v)];
      const double d0 = inside_by(0, u, v), d1 = inside_by(1, u, v);
      if (d0 > 1.0) {
        EXPECT_EQ(src, 0) << u << "," << v;
        ++interior;
      } else if (d1 > 1.0) {
        EXPECT_EQ(src, 1) << u << "," << v;
        ++interior;
      } else if (d0 < -1.0 && d1 < -1.0) {
        EXPECT_EQ(src, -1) << u << "," << v;
      }
    }
  }
  EXPECT_GT(interior, 500);
}

TEST(Overlay, BlendEndpointsAndMean) {
  RgbImage photo(2, 1), render(2, 1);
  photo.values = {10, 20, 30, 255, 0, 7};
  render.values = {0, 21, 100, 0, 255, 8};
  EXPECT_EQ(blend_overlay(photo, render, 1.0), photo);
  EXPECT_EQ(blend_overlay(photo, render, 0.0), render);
  const RgbImage half = blend_overlay(photo, render, 0.5);
  EXPECT_EQ(half.values, (std::vector<std::uint8_t>{5, 21, 65, 128, 128, 8}));
  EXPECT_THROW(blend_overlay(photo, RgbImage(3, 1), 0.5), InputError);
  EXPECT_THROW(blend_overlay(photo, render, 1.5), InputError);
}

TEST(Overlay, MapsOverlayEndpoints) {
  const SmallScene s;
  const auto maps = georeference_image(s.cam, s.intr, s.dem, s.size, VisibilityMethod::kDepthBuffer);
  RgbImage photo = to_rgb(synthetic::render_photo(s.cam, s.dem, s.size));
  EXPECT_EQ(render_overlay(photo, maps, 1.0), photo);
  EXPECT_EQ(render_overlay(photo, maps, 0.0), render_elevation(maps, s.size));
  EXPECT_THROW(render_overlay(RgbImage(10, 10), maps, 0.5), InputError);
}

TEST(Maps, WriteReadRoundTripAndBinaryLayout) {
  test::TempDir dir;
  CoordinateMaps maps(3, 2, 1);
  for (std::size_t i = 0; i < 6; ++i) {
    maps.x[i] = 100.5 + static_cast<double>(i);
    maps.y[i] = -2.25 * static_cast<double>(i);
    maps.z[i] = 0.125 * static_cast<double>(i);
    maps.valid[i] = i % 2;
  }
  const MapsWriteSummary sum = write_coordinate_maps(dir.path(), maps);
  EXPECT_EQ(sum.min[0], 101.5);
  EXPECT_EQ(sum.max[0], 105.5);
  for (const char* f : {"maps.json", "maps.bin", "maps_x.png", "maps_y.png", "maps_z.png"}) {
    EXPECT_TRUE(std::filesystem::exists(dir / f)) << f;
  }
  const std::string bin = test::read_text(dir / "maps.bin");
  ASSERT_EQ(bin.size(), 6u * 4u * 4u);
  float f;
  std::memcpy(&f, bin.data() + 4 * (2 * 6 + 3), 4);  // z band, pixel 3
  EXPECT_EQ(f, 0.375f);
  std::memcpy(&f, bin.data() + 4 * (3 * 6 + 1), 4);  // valid band, pixel 1
  EXPECT_EQ(f, 1.0f);
  const auto header = test::read_text(dir / "maps.json");
  EXPECT_NE(header.find("\"f32\""), std::string::npos);
  const CoordinateMaps back = read_coordinate_maps(dir.path());
  EXPECT_EQ(back.width, 3);
  EXPECT_EQ(back.valid, maps.valid);
  EXPECT_EQ(back.z[3], 0.375);
  EXPECT_EQ(encode_maps_binary(maps), std::vector<std::uint8_t>(bin.begin(), bin.end()));
}

TEST(Maps, MethodNames) {
  EXPECT_EQ(visibility_method_from_string("raytrace"), VisibilityMethod::kRayTrace);
  EXPECT_EQ(visibility_method_from_string("zbuffer"), VisibilityMethod::kDepthBuffer);
  EXPECT_THROW(visibility_method_from_string("magic"), InputError);
}

}  // namespace
}  // namespace monoplot
