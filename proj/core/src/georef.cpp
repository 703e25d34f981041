#include "monoplot/georef.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

#include <Eigen/Geometry>
#include <nlohmann/json.hpp>

#include "monoplot/error.hpp"

namespace monoplot {

Ray pixel_ray(const CameraParams& cam, const Intrinsics& intr, double u, double v) {
  const Eigen::Vector3d dir_cam((u - intr.cx) / intr.fx, (v - intr.cy) / intr.fy, 1.0);
  return {cam.position(), (cam.rotation().transpose() * dir_cam).normalized()};
}

double intersection_tolerance(const DemRaster& dem) { return 1e-3 * dem.cell_size(); }

namespace {

// Ray parameterised directly in pixel space: col(t), row(t), z(t).
struct PixelRay {
  double c0, dc, r0, dr, z0, dz;

  double col(double t) const { return c0 + t * dc; }
  double row(double t) const { return r0 + t * dr; }
  double z(double t) const { return z0 + t * dz; }
};

// Clips [t0, t1] to lo <= a + t * b <= hi. Returns false when empty.
bool clip_slab(double a, double b, double lo, double hi, double& t0, double& t1) {
  if (b == 0.0) return a >= lo && a <= hi;
  double ta = (lo - a) / b;
  double tb = (hi - a) / b;
  if (ta > tb) std::swap(ta, tb);
  t0 = std::max(t0, ta);
  t1 = std::min(t1, tb);
  return t0 <= t1;
}

}  // namespace

std::optional<WorldPoint> intersect_dem(const Ray& ray, const DemRaster& dem) {
  const auto range = dem.elevation_range();
  if (!range) return std::nullopt;
  const GeoTransform& gt = dem.transform();
  const Eigen::Vector2d p0 = gt.world_to_pixel(ray.origin.x(), ray.origin.y());
  const double det = gt.determinant();
  const double dc = (gt.p_height * ray.direction.x() - gt.row_rot * ray.direction.y()) / det;
  const double dr = (gt.p_width * ray.direction.y() - gt.col_rot * ray.direction.x()) / det;
  const PixelRay pr{p0.x(), dc, p0.y(), dr, ray.origin.z(), ray.direction.z()};

  const double max_col = dem.cols() - 1;
  const double max_row = dem.rows() - 1;
  double t0 = 0.0;
  double t1 = std::numeric_limits<double>::infinity();
  if (!clip_slab(pr.c0, pr.dc, 0.0, max_col, t0, t1) ||
      !clip_slab(pr.r0, pr.dr, 0.0, max_row, t0, t1) ||
      !clip_slab(pr.z0, pr.dz, range->first, range->second, t0, t1)) {
    return std::nullopt;
  }

  // Slab arithmetic can land a hair outside the grid.
  auto height_gap = [&](double t) -> std::optional<double> {
    const double c = std::clamp(pr.col(t), 0.0, max_col);
    const double r = std::clamp(pr.row(t), 0.0, max_row);
    const auto h = dem.sample_pixel(c, r);
    if (!h) return std::nullopt;
    return pr.z(t) - *h;
  };
  auto point_at = [&](double t) {
    const Eigen::Vector3d p = ray.origin + t * ray.direction;
    return WorldPoint{p.x(), p.y(), p.z()};
  };

  const double cell = dem.cell_size();
  const double step = 0.5 * cell;
  const double tol = intersection_tolerance(dem);

  auto gap = height_gap(t0);
  if (!gap) return std::nullopt;
  if (std::abs(*gap) < tol) return point_at(t0);
  if (*gap < 0.0) return std::nullopt;

  double ta = t0;
  while (ta < t1) {
    const double tb = std::min(ta + step, t1);
    const auto gb = height_gap(tb);
    if (!gb) return std::nullopt;
    if (std::abs(*gb) < tol) return point_at(tb);
    if (*gb < 0.0) {
      double lo = ta;
      double hi = tb;
      for (int it = 0; it < 100; ++it) {
        const double mid = 0.5 * (lo + hi);
        const auto gm = height_gap(mid);
        if (!gm) return std::nullopt;
        if (std::abs(*gm) < tol) return point_at(mid);
        if (*gm > 0.0) {
          lo = mid;
        } else {
          hi = mid;
        }
      }
      return point_at(hi);
    }
    ta = tb;
  }
  return std::nullopt;
}

std::string to_string(VisibilityMethod m) {
  return m == VisibilityMethod::kRayTrace ? "raytrace" : "zbuffer";
}

VisibilityMethod visibility_method_from_string(const std::string& s) {
  if (s == "raytrace" || s == "ray-trace") return VisibilityMethod::kRayTrace;
  if (s == "zbuffer" || s == "depth-buffer") return VisibilityMethod::kDepthBuffer;
  throw InputError("unknown georeferencing method '" + s + "' (expected raytrace or zbuffer)");
}

CoordinateMaps::CoordinateMaps(int w, int h, int s)
    : width(w),
      height(h),
      stride(s),
      x(static_cast<std::size_t>(w) * h, 0.0),
      y(static_cast<std::size_t>(w) * h, 0.0),
      z(static_cast<std::size_t>(w) * h, 0.0),
      valid(static_cast<std::size_t>(w) * h, 0) {}

std::size_t CoordinateMaps::valid_count() const {
  return static_cast<std::size_t>(std::count(valid.begin(), valid.end(), std::uint8_t{1}));
}

std::array<WorldPoint, 3> dem_triangle(const DemRaster& dem, std::int64_t id) {
  const std::int64_t cell = id / 2;
  const int r = static_cast<int>(cell / dem.cols());
  const int c = static_cast<int>(cell % dem.cols());
  auto vertex = [&](int rr, int cc) {
    const Eigen::Vector2d xy = dem.pixel_to_world(cc, rr);
    return WorldPoint{xy.x(), xy.y(), dem.at(rr, cc)};
  };
  if (id % 2 == 0) return {vertex(r, c), vertex(r, c + 1), vertex(r + 1, c)};
  return {vertex(r, c + 1), vertex(r + 1, c + 1), vertex(r + 1, c)};
}

namespace {

// Sutherland-Hodgman against z >= near.
std::vector<Eigen::Vector3d> clip_near(const std::array<Eigen::Vector3d, 3>& tri, double near) {
  std::vector<Eigen::Vector3d> out;
  out.reserve(4);
  for (int i = 0; i < 3; ++i) {
    const Eigen::Vector3d& a = tri[i];
    const Eigen::Vector3d& b = tri[(i + 1) % 3];
    const bool a_in = a.z() >= near;
    const bool b_in = b.z() >= near;
    if (a_in) out.push_back(a);
    if (a_in != b_in) {
      const double s = (near - a.z()) / (b.z() - a.z());
      Eigen::Vector3d p = a + s * (b - a);
      p.z() = near;
      out.push_back(p);
    }
  }
  return out;
}

double edge(const Eigen::Vector2d& a, const Eigen::Vector2d& b, double px, double py) {
  return (b.x() - a.x()) * (py - a.y()) - (b.y() - a.y()) * (px - a.x());
}

void raster_triangle(const std::array<Eigen::Vector2d, 3>& s, const std::array<double, 3>& inv_z,
                     std::int64_t id, DepthBuffer& buf) {
  const double area = edge(s[0], s[1], s[2].x(), s[2].y());
  if (area == 0.0 || !std::isfinite(area)) return;
  const double min_x = std::min({s[0].x(), s[1].x(), s[2].x()});
  const double max_x = std::max({s[0].x(), s[1].x(), s[2].x()});
  const double min_y = std::min({s[0].y(), s[1].y(), s[2].y()});
  const double max_y = std::max({s[0].y(), s[1].y(), s[2].y()});
  if (max_x < 0.0 || max_y < 0.0 || min_x > buf.width - 1 || min_y > buf.height - 1) return;
  const int u0 = std::max(0, static_cast<int>(std::ceil(min_x)));
  const int u1 = std::min(buf.width - 1, static_cast<int>(std::floor(max_x)));
  const int v0 = std::max(0, static_cast<int>(std::ceil(min_y)));
  const int v1 = std::min(buf.height - 1, static_cast<int>(std::floor(max_y)));
  const double inv_area = 1.0 / area;

  for (int v = v0; v <= v1; ++v) {
    for (int u = u0; u <= u1; ++u) {
      const double b0 = edge(s[1], s[2], u, v) * inv_area;
      const double b1 = edge(s[2], s[0], u, v) * inv_area;
      const double b2 = edge(s[0], s[1], u, v) * inv_area;
      if (b0 < 0.0 || b1 < 0.0 || b2 < 0.0) continue;
      const double w = b0 * inv_z[0] + b1 * inv_z[1] + b2 * inv_z[2];
      if (!(w > 0.0)) continue;
      const double depth = 1.0 / w;
      const std::size_t idx = buf.index(u, v);
      if (depth < buf.depth[idx]) {
        buf.depth[idx] = depth;
        buf.source[idx] = id;
      }
    }
  }
}

}  // namespace

DepthBuffer render_depth_buffer(const CameraParams& cam, const Intrinsics& intr,
                                const DemRaster& dem, ImageSize size) {
  DepthBuffer buf;
  buf.width = size.width;
  buf.height = size.height;
  const std::size_t n = static_cast<std::size_t>(size.width) * size.height;
  buf.depth.assign(n, std::numeric_limits<double>::infinity());
  buf.source.assign(n, -1);

  const Eigen::Matrix3d rot = cam.rotation();
  // Camera-frame coordinates of every DEM vertex.
  std::vector<Eigen::Vector3d> qs(static_cast<std::size_t>(dem.rows()) * dem.cols());
  for (int r = 0; r < dem.rows(); ++r) {
    for (int c = 0; c < dem.cols(); ++c) {
      const Eigen::Vector2d xy = dem.pixel_to_world(c, r);
      qs[static_cast<std::size_t>(r) * dem.cols() + c] =
          rot * (Eigen::Vector3d(xy.x(), xy.y(), dem.at(r, c)) + cam.t);
    }
  }
  auto q_at = [&](int r, int c) -> const Eigen::Vector3d& {
    return qs[static_cast<std::size_t>(r) * dem.cols() + c];
  };
  auto to_screen = [&](const Eigen::Vector3d& q) {
    return Eigen::Vector2d(intr.fx * q.x() / q.z() + intr.cx, intr.fy * q.y() / q.z() + intr.cy);
  };

  for (int r = 0; r + 1 < dem.rows(); ++r) {
    for (int c = 0; c + 1 < dem.cols(); ++c) {
      const std::int64_t base = 2 * (static_cast<std::int64_t>(r) * dem.cols() + c);
      const std::array<std::array<std::pair<int, int>, 3>, 2> tris = {{
          {{{r, c}, {r, c + 1}, {r + 1, c}}},
          {{{r, c + 1}, {r + 1, c + 1}, {r + 1, c}}},
      }};
      for (int k = 0; k < 2; ++k) {
        bool has_nodata = false;
        std::array<Eigen::Vector3d, 3> tri;
        for (int i = 0; i < 3; ++i) {
          const auto [rr, cc] = tris[k][i];
          has_nodata |= dem.is_nodata(rr, cc);
          tri[i] = q_at(rr, cc);
        }
        if (has_nodata) continue;
        if (tri[0].z() < kMinDepth && tri[1].z() < kMinDepth && tri[2].z() < kMinDepth) continue;

        std::array<Eigen::Vector2d, 3> screen;
        std::array<double, 3> inv_z;
        if (tri[0].z() >= kMinDepth && tri[1].z() >= kMinDepth && tri[2].z() >= kMinDepth) {
          for (int i = 0; i < 3; ++i) {
            screen[i] = to_screen(tri[i]);
            inv_z[i] = 1.0 / tri[i].z();
          }
          raster_triangle(screen, inv_z, base + k, buf);
          continue;
        }
        const auto poly = clip_near(tri, kMinDepth);
        for (std::size_t i = 1; i + 1 < poly.size(); ++i) {
          const std::array<const Eigen::Vector3d*, 3> fan = {&poly[0], &poly[i], &poly[i + 1]};
          for (int j = 0; j < 3; ++j) {
            screen[j] = to_screen(*fan[j]);
            inv_z[j] = 1.0 / fan[j]->z();
          }
          raster_triangle(screen, inv_z, base + k, buf);
        }
      }
    }
  }
  return buf;
}

CoordinateMaps georeference_image(const CameraParams& cam, const Intrinsics& intr,
                                  const DemRaster& dem, ImageSize size, VisibilityMethod method,
                                  int stride, const ProgressFn& progress) {
  if (stride < 1) throw InputError("stride must be >= 1");
  const int w = (size.width + stride - 1) / stride;
  const int h = (size.height + stride - 1) / stride;
  CoordinateMaps maps(w, h, stride);

  std::optional<DepthBuffer> depth;
  if (method == VisibilityMethod::kDepthBuffer) {
    depth = render_depth_buffer(cam, intr, dem, size);
    if (progress) progress(0.5);
  }

  for (int j = 0; j < h; ++j) {
    for (int i = 0; i < w; ++i) {
      const int u = i * stride;
      const int v = j * stride;
      const Ray ray = pixel_ray(cam, intr, u, v);
      std::optional<WorldPoint> hit;
      if (method == VisibilityMethod::kRayTrace) {
        hit = intersect_dem(ray, dem);
      } else {
        const std::int64_t id = depth->source[depth->index(u, v)];
        if (id >= 0) {
          const auto tri = dem_triangle(dem, id);
          const Eigen::Vector3d a = tri[0].vec();
          const Eigen::Vector3d normal = (tri[1].vec() - a).cross(tri[2].vec() - a);
          const double denom = normal.dot(ray.direction);
          if (denom != 0.0) {
            const double t = normal.dot(a - ray.origin) / denom;
            if (t > 0.0) {
              const Eigen::Vector3d p = ray.origin + t * ray.direction;
              hit = WorldPoint{p.x(), p.y(), p.z()};
            }
          }
        }
      }
      if (hit) {
        const std::size_t idx = maps.index(i, j);
        maps.x[idx] = hit->x;
        maps.y[idx] = hit->y;
        maps.z[idx] = hit->z;
        maps.valid[idx] = 1;
      }
    }
    if (progress) {
      const double frac = static_cast<double>(j + 1) / h;
      progress(depth ? 0.5 + 0.5 * frac : frac);
    }
  }
  return maps;
}

namespace {

// Linear ramp through dark blue, teal, yellow-green, light yellow.
std::array<std::uint8_t, 3> colormap(double t) {
  static constexpr std::array<std::array<double, 3>, 4> kStops = {{
      {40, 30, 120},
      {30, 140, 140},
      {150, 200, 60},
      {250, 240, 170},
  }};
  t = std::clamp(t, 0.0, 1.0) * (kStops.size() - 1);
  const std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(t), kStops.size() - 2);
  const double f = t - k;
  std::array<std::uint8_t, 3> out{};
  for (int c = 0; c < 3; ++c) {
    out[c] = static_cast<std::uint8_t>(
        std::floor(kStops[k][c] + f * (kStops[k + 1][c] - kStops[k][c]) + 0.5));
  }
  return out;
}

RgbImage colorize(int width, int height, const std::vector<double>& values,
                  const std::vector<std::uint8_t>& valid, double lo, double hi) {
  RgbImage img(width, height);
  const double span = hi > lo ? hi - lo : 1.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!valid[i]) continue;
    const auto rgb = colormap((values[i] - lo) / span);
    std::copy(rgb.begin(), rgb.end(), img.values.begin() + 3 * i);
  }
  return img;
}

std::pair<double, double> valid_range(const std::vector<double>& v,
                                      const std::vector<std::uint8_t>& valid) {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!valid[i]) continue;
    lo = std::min(lo, v[i]);
    hi = std::max(hi, v[i]);
  }
  if (lo > hi) return {0.0, 0.0};
  return {lo, hi};
}

}  // namespace

RgbImage render_elevation(const CoordinateMaps& maps, ImageSize photo_size) {
  const auto [lo, hi] = valid_range(maps.z, maps.valid);
  const RgbImage small = colorize(maps.width, maps.height, maps.z, maps.valid, lo, hi);
  if (maps.stride == 1 && photo_size.width == maps.width && photo_size.height == maps.height) {
    return small;
  }
  RgbImage out(photo_size.width, photo_size.height);
  for (int v = 0; v < photo_size.height; ++v) {
    for (int u = 0; u < photo_size.width; ++u) {
      const int i = std::min(maps.width - 1, u / maps.stride);
      const int j = std::min(maps.height - 1, v / maps.stride);
      std::copy_n(small.pixel(i, j), 3, out.pixel(u, v));
    }
  }
  return out;
}

RgbImage render_depth(const DepthBuffer& depth) {
  std::vector<std::uint8_t> valid(depth.depth.size());
  for (std::size_t i = 0; i < valid.size(); ++i) valid[i] = std::isfinite(depth.depth[i]) ? 1 : 0;
  const auto [lo, hi] = valid_range(depth.depth, valid);
  // Near is bright.
  std::vector<double> inverted(depth.depth.size());
  for (std::size_t i = 0; i < inverted.size(); ++i) inverted[i] = valid[i] ? hi - depth.depth[i] : 0.0;
  return colorize(depth.width, depth.height, inverted, valid, 0.0, hi - lo);
}

RgbImage blend_overlay(const RgbImage& photo, const RgbImage& render, double opacity) {
  if (photo.width != render.width || photo.height != render.height) {
    throw InputError("overlay dimension mismatch: photo " + std::to_string(photo.width) + "x" +
                     std::to_string(photo.height) + ", render " + std::to_string(render.width) +
                     "x" + std::to_string(render.height));
  }
  if (!(opacity >= 0.0 && opacity <= 1.0)) throw InputError("opacity must lie in [0, 1]");
  RgbImage out(photo.width, photo.height);
  for (std::size_t i = 0; i < out.values.size(); ++i) {
    const double v = opacity * photo.values[i] + (1.0 - opacity) * render.values[i];
    out.values[i] = static_cast<std::uint8_t>(std::clamp(std::floor(v + 0.5), 0.0, 255.0));
  }
  return out;
}

RgbImage render_overlay(const RgbImage& photo, const CoordinateMaps& maps, double opacity) {
  const int expect_w = (photo.width + maps.stride - 1) / maps.stride;
  const int expect_h = (photo.height + maps.stride - 1) / maps.stride;
  if (expect_w != maps.width || expect_h != maps.height) {
    throw InputError("overlay dimension mismatch between photo and coordinate maps");
  }
  return blend_overlay(photo, render_elevation(maps, {photo.width, photo.height}), opacity);
}

RgbImage render_overlay(const RgbImage& photo, const DepthBuffer& depth, double opacity) {
  return blend_overlay(photo, render_depth(depth), opacity);
}

namespace {

void append_f32_le(std::vector<std::uint8_t>& out, float f) {
  std::uint32_t bits = std::bit_cast<std::uint32_t>(f);
  for (int b = 0; b < 4; ++b) out.push_back(static_cast<std::uint8_t>(bits >> (8 * b)));
}

float read_f32_le(const std::uint8_t* p) {
  std::uint32_t bits = 0;
  for (int b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(p[b]) << (8 * b);
  return std::bit_cast<float>(bits);
}

}  // namespace

std::vector<std::uint8_t> encode_maps_binary(const CoordinateMaps& maps) {
  std::vector<std::uint8_t> out;
  out.reserve(maps.x.size() * 16);
  for (const auto* band : {&maps.x, &maps.y, &maps.z}) {
    for (double v : *band) append_f32_le(out, static_cast<float>(v));
  }
  for (std::uint8_t v : maps.valid) append_f32_le(out, v ? 1.0f : 0.0f);
  return out;
}

MapsWriteSummary write_coordinate_maps(const std::filesystem::path& dir, const CoordinateMaps& maps) {
  std::filesystem::create_directories(dir);
  MapsWriteSummary summary;
  const std::array<const std::vector<double>*, 3> bands = {&maps.x, &maps.y, &maps.z};
  const std::array<const char*, 3> names = {"x", "y", "z"};
  nlohmann::json ranges = nlohmann::json::object();
  for (int b = 0; b < 3; ++b) {
    const auto [lo, hi] = valid_range(*bands[b], maps.valid);
    summary.min[b] = lo;
    summary.max[b] = hi;
    ranges[names[b]] = {{"min", lo}, {"max", hi}};
    write_png(dir / (std::string("maps_") + names[b] + ".png"),
              colorize(maps.width, maps.height, *bands[b], maps.valid, lo, hi));
  }

  nlohmann::json header = {{"width", maps.width},
                           {"height", maps.height},
                           {"dtype", "f32"},
                           {"bands", {"x", "y", "z", "valid"}},
                           {"byte_order", "little"},
                           {"layout", "band-sequential, row-major"},
                           {"stride", maps.stride},
                           {"data", "maps.bin"},
                           {"range", ranges}};
  std::ofstream(dir / "maps.json") << header.dump(2) << "\n";

  const auto bytes = encode_maps_binary(maps);
  std::ofstream bin(dir / "maps.bin", std::ios::binary);
  if (!bin) throw InputError("cannot write " + (dir / "maps.bin").string());
  bin.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  return summary;
}

CoordinateMaps read_coordinate_maps(const std::filesystem::path& dir) {
  std::ifstream hin(dir / "maps.json");
  if (!hin) throw InputError("cannot open " + (dir / "maps.json").string());
  nlohmann::json header;
  try {
    hin >> header;
  } catch (const nlohmann::json::exception& e) {
    throw InputError((dir / "maps.json").string() + ": " + e.what());
  }
  CoordinateMaps maps(header.at("width").get<int>(), header.at("height").get<int>(),
                      header.value("stride", 1));
  std::ifstream bin(dir / "maps.bin", std::ios::binary);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(bin)),
                                  std::istreambuf_iterator<char>());
  const std::size_t n = maps.x.size();
  if (bytes.size() != n * 16) {
    throw InputError((dir / "maps.bin").string() + ": expected " + std::to_string(n * 16) +
                     " bytes, found " + std::to_string(bytes.size()));
  }
  for (std::size_t i = 0; i < n; ++i) {
    maps.x[i] = read_f32_le(&bytes[4 * i]);
    maps.y[i] = read_f32_le(&bytes[4 * (n + i)]);
    maps.z[i] = read_f32_le(&bytes[4 * (2 * n + i)]);
    maps.valid[i] = read_f32_le(&bytes[4 * (3 * n + i)]) != 0.0f ? 1 : 0;
  }
  return maps;
}

}  // namespace monoplot
