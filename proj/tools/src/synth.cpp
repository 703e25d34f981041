#include "monoplot/app/synth.hpp"

#include <numbers>
#include <random>

#include <nlohmann/json.hpp>

#include "monoplot/session.hpp"
#include "monoplot/synthetic.hpp"

namespace monoplot::app {

CameraParams perturb_camera(const CameraParams& truth, double extent, std::uint64_t seed) {
  constexpr double kAngle = 5.0 * std::numbers::pi / 180.0;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  CameraParams c = truth;
  for (int k = 0; k < 3; ++k) c.t[k] += 0.05 * extent * unit(rng);
  c.yaw += kAngle * unit(rng);
  c.pitch += kAngle * unit(rng);
  c.roll += kAngle * unit(rng);
  c.fov += kAngle * unit(rng);
  return c;
}

SynthOutput write_synthetic_scene(const std::filesystem::path& dir, const SynthOptions& opt) {
  std::filesystem::create_directories(dir);
  SynthOutput out;
  out.dem = dir / "dem.asc";
  out.photo = dir / "photo.png";
  out.session = dir / "session.json";
  out.truth_camera = dir / "truth_camera.json";

  const DemRaster dem = synthetic::three_box_dem(opt.dem_size, 1.0);
  out.truth = synthetic::three_box_camera(dem);
  save_esri_ascii(out.dem, dem);
  write_png(out.photo, synthetic::render_photo(out.truth, dem, opt.image));
  write_file_atomic(out.truth_camera, camera_to_json(out.truth, opt.image).dump(2) + "\n");

  Session s = detect_session(out.photo, out.dem, out.session, DetectorConfig{});
  if (opt.exact) {
    const Intrinsics intr = intrinsics_from_fov(out.truth.fov, opt.image.width, opt.image.height);
    s.image_gcps.clear();
    for (const DemGcp& g : s.dem_gcps) {
      const auto px = project(out.truth, intr, g.world);
      if (!px || px->u < 0.0 || px->v < 0.0 || px->u > opt.image.width - 1.0 ||
          px->v > opt.image.height - 1.0) {
        continue;
      }
      s.image_gcps.push_back({px->u, px->v, 0.0, true});
    }
  }
  std::vector<WorldPoint> world;
  for (const DemGcp& g : s.dem_gcps) world.push_back(g.world);
  s.initial_camera = perturb_camera(out.truth, scene_extent(world), opt.seed);
  save_session(out.session, s);
  return out;
}

}  // namespace monoplot::app
