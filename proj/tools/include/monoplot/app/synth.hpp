#pragma once

#include <cstdint>
#include <filesystem>

#include "monoplot/camera.hpp"

namespace monoplot::app {

struct SynthOptions {
  int dem_size = 256;
  ImageSize image{512, 512};
  // Image GCPs are the true projections of the DEM GCPs instead of
  // detections in the rendered photo.
  bool exact = false;
  // Seeds the perturbation of the initial camera (<= 5 deg per angle and
  // fov, <= 5% of the scene extent per translation axis).
  std::uint64_t seed = 1;
};

struct SynthOutput {
  std::filesystem::path dem;
  std::filesystem::path photo;
  std::filesystem::path session;
  std::filesystem::path truth_camera;
  CameraParams truth;
};

/// Writes dem.asc, photo.png, truth_camera.json and session.json of the
/// three-box scene into `dir`.
SynthOutput write_synthetic_scene(const std::filesystem::path& dir, const SynthOptions& opt);

/// Initial camera perturbed from `truth` as described in SynthOptions.
CameraParams perturb_camera(const CameraParams& truth, double extent, std::uint64_t seed);

}  // namespace monoplot::app
