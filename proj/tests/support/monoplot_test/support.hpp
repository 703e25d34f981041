#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <limits>
#include <numbers>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "monoplot/camera.hpp"
#include "monoplot/dem.hpp"
#include "monoplot/keypoints.hpp"
#include "monoplot/registration.hpp"
#include "monoplot/synthetic.hpp"

namespace monoplot::test {

inline constexpr double kDeg = std::numbers::pi / 180.0;

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag = "monoplot") {
    std::random_device rd;
    const auto base = std::filesystem::temp_directory_path();
    for (;;) {
      path_ = base / (tag + "-" + std::to_string(rd()));
      if (std::filesystem::create_directory(path_)) break;
    }
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline std::string read_text(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_text(const std::filesystem::path& p, const std::string& text) {
  std::ofstream(p, std::ios::binary) << text;
}

/// Three-box DEM, its ground-truth camera and the exact-fit problem whose
/// image GCPs are the true projections of the detected DEM GCPs.
struct BoxScene {
  DemRaster dem;
  CameraParams truth;
  ImageSize size;
  std::vector<DemGcp> gcps;
  RegistrationProblem exact;
  double extent = 0.0;
};

inline BoxScene make_box_scene(int dem_size = 256, ImageSize size = {512, 512}) {
  DemRaster dem = synthetic::three_box_dem(dem_size, 1.0);
  const CameraParams truth = synthetic::three_box_camera(dem);
  const auto gcps = detect_dem_gcps(dem, DetectorConfig{});
  const Intrinsics intr = intrinsics_from_fov(truth.fov, size.width, size.height);
  RegistrationProblem p;
  p.image = size;
  for (const DemGcp& g : gcps) {
    const auto px = project(truth, intr, g.world);
    if (!px) continue;
    p.world_gcps.push_back(g.world);
    p.image_gcps.emplace_back(px->u, px->v);
  }
  p.initial_camera = truth;
  const double extent = scene_extent(p.world_gcps);
  return BoxScene{std::move(dem), truth, size, gcps, std::move(p), extent};
}

/// Uniform perturbation within +-max_angle per angle and fov and
/// +-frac * extent per translation axis.
inline CameraParams perturb(const CameraParams& cam, double extent, double max_angle, double frac,
                            std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  CameraParams out = cam;
  for (int k = 0; k < 3; ++k) out.t[k] += frac * extent * u(rng);
  out.yaw += max_angle * u(rng);
  out.pitch += max_angle * u(rng);
  out.roll += max_angle * u(rng);
  out.fov += max_angle * u(rng);
  return out;
}

/// Exhaustive nearest-neighbour mean distance; ties go to the lowest index.
struct BruteChamfer {
  double value = 0.0;
  std::vector<std::size_t> nearest;
};

inline BruteChamfer brute_chamfer(std::span<const Eigen::Vector2d> image,
                                  std::span<const Eigen::Vector2d> projected) {
  BruteChamfer out;
  double sum = 0.0;
  for (const auto& q : image) {
    double best = std::numeric_limits<double>::infinity();
    std::size_t best_j = 0;
    for (std::size_t j = 0; j < projected.size(); ++j) {
      const double dx = q.x() - projected[j].x();
      const double dy = q.y() - projected[j].y();
      const double d2 = dx * dx + dy * dy;
      if (d2 < best) {
        best = d2;
        best_j = j;
      }
    }
    out.nearest.push_back(best_j);
    sum += std::sqrt(best);
  }
  out.value = sum / static_cast<double>(image.size());
  return out;
}

/// Random non-degenerate problem with a camera looking at its world GCPs.
inline RegistrationProblem random_problem(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<int> nw(8, 30), ni(5, 25);
  RegistrationProblem p;
  p.image = {640, 480};
  const int n_world = nw(rng), n_image = ni(rng);
  for (int k = 0; k < n_world; ++k) p.world_gcps.push_back({100 * u(rng), 100 * u(rng), 20 * u(rng)});
  for (int k = 0; k < n_image; ++k) p.image_gcps.emplace_back(640 * u(rng), 480 * u(rng));
  const double az = 2 * std::numbers::pi * u(rng);
  const double dist = 120 + 80 * u(rng);
  const Eigen::Vector3d target(50 + 20 * (u(rng) - 0.5), 50 + 20 * (u(rng) - 0.5), 5);
  const Eigen::Vector3d eye = target + Eigen::Vector3d(dist * std::cos(az), dist * std::sin(az), 40 + 80 * u(rng));
  CameraParams cam = camera_looking_at(eye, target, 0.6 + 0.8 * u(rng));
  cam.roll += 0.6 * (u(rng) - 0.5);
  p.initial_camera = cam;
  return p;
}

/// Central-difference steps: translation in world units, angles and fov in
/// radians.
inline CameraParams::Vector fd_steps() {
  CameraParams::Vector h;
  h << 1e-4, 1e-4, 1e-4, 1e-6, 1e-6, 1e-6, 1e-6;
  return h;
}

struct GradientCheck {
  bool usable = false;  // false when +-h crosses an assignment or visibility switch
  double max_rel_error = 0.0;
  CameraParams::Vector analytic = CameraParams::Vector::Zero();
  CameraParams::Vector numeric = CameraParams::Vector::Zero();
};

/// Compares the analytic gradient against central differences at `lambda`.
/// Relative error is |a - n| / max(|a|, |n|, 1e-6); the floor only matters
/// for partials that vanish.
inline GradientCheck check_gradient(const CameraParams& cam, const RegistrationProblem& p, double lambda) {
  GradientCheck out;
  const Evaluation base = evaluate(cam, p);
  if (base.degenerate) return out;
  out.analytic = base.gradient(lambda);
  const CameraParams::Vector x = cam.to_vector();
  const CameraParams::Vector h = fd_steps();
  for (int k = 0; k < CameraParams::kDim; ++k) {
    CameraParams::Vector xp = x, xm = x;
    xp[k] += h[k];
    xm[k] -= h[k];
    const Evaluation ep = evaluate(CameraParams::from_vector(xp), p);
    const Evaluation em = evaluate(CameraParams::from_vector(xm), p);
    for (const Evaluation* e : {&ep, &em}) {
      if (e->degenerate || e->assignment != base.assignment || e->visibility != base.visibility ||
          e->in_front != base.in_front) {
        return out;
      }
    }
    out.numeric[k] = (ep.objective(lambda) - em.objective(lambda)) / (2 * h[k]);
    const double denom = std::max({std::abs(out.analytic[k]), std::abs(out.numeric[k]), 1e-6});
    out.max_rel_error = std::max(out.max_rel_error, std::abs(out.analytic[k] - out.numeric[k]) / denom);
  }
  out.usable = true;
  return out;
}

}  // namespace monoplot::test
