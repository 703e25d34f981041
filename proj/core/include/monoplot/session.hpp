#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "monoplot/camera.hpp"
#include "monoplot/dem.hpp"
#include "monoplot/georef.hpp"
#include "monoplot/keypoints.hpp"
#include "monoplot/registration.hpp"

namespace monoplot {

inline constexpr int kSessionSchema = 1;

/// State of the semi-automatic loop, persisted as JSON.
///
/// Paths are stored as written (relative to the session file's directory
/// when possible); `base_dir` is where they resolve from and is not
/// serialized.
struct Session {
  std::string photo_path;
  ImageSize photo_size;
  std::string dem_path;
  DetectorConfig detector;
  std::vector<Keypoint> image_gcps;
  std::vector<DemGcp> dem_gcps;
  CameraParams initial_camera;
  std::optional<CameraParams> solved_camera;
  OptimizerSchedule schedule;
  std::optional<RegistrationResult> result;

  std::filesystem::path base_dir;

  std::filesystem::path resolved_photo() const { return base_dir / photo_path; }
  std::filesystem::path resolved_dem() const { return base_dir / dem_path; }

  std::size_t selected_image_count() const;
  std::size_t selected_dem_count() const;

  bool operator==(const Session& o) const;
};

nlohmann::json camera_to_json(const CameraParams& cam, ImageSize image);
CameraParams camera_from_json(const nlohmann::json& j);

nlohmann::json schedule_to_json(const OptimizerSchedule& s);
/// Fields absent from `j` keep their value in `base`.
OptimizerSchedule schedule_from_json(const nlohmann::json& j, OptimizerSchedule base = {});

nlohmann::json detector_to_json(const DetectorConfig& c);
DetectorConfig detector_from_json(const nlohmann::json& j, DetectorConfig base = {});

nlohmann::json keypoint_to_json(const Keypoint& k);
nlohmann::json dem_gcp_to_json(const DemGcp& g);
// Includes the result camera, which is kept even for degenerate solves.
nlohmann::json result_to_json(const RegistrationResult& r, ImageSize image);

nlohmann::json session_to_json(const Session& s);
Session session_from_json(const nlohmann::json& j);

/// Serialized form written by save_session (2-space indent, trailing newline).
std::string session_to_string(const Session& s);

/// Parses and validates; referenced files must exist relative to the
/// session's directory.
Session load_session(const std::filesystem::path& path);

/// Writes to a temporary sibling and renames it over `path`.
void save_session(const std::filesystem::path& path, const Session& s);
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);

/// Trace as CSV with header iter,S,R,lambda,objective.
std::string trace_to_csv(const std::vector<TraceEntry>& trace);

// Pipeline steps shared by the CLI and the HTTP service.

/// Camera southwest of the DEM center, raised above the terrain and looking
/// at the center with a 60 degree field of view.
CameraParams default_initial_camera(const DemRaster& dem);

/// Detects GCPs in both inputs; every detection starts selected.
Session detect_session(const std::filesystem::path& photo_path,
                       const std::filesystem::path& dem_path,
                       const std::filesystem::path& session_path, const DetectorConfig& cfg);

/// Problem built from the selected GCPs. Throws InputError("no selected
/// image GCPs" / "no selected DEM GCPs") when a side is empty.
RegistrationProblem make_problem(const Session& s);

/// Solves and stores the camera and result in the session.
RegistrationResult solve_session(Session& s, std::uint64_t seed);

/// Projections of every DEM GCP through `cam`.
std::vector<ProjectedPoint> project_dem_gcps(const Session& s, const CameraParams& cam);

CoordinateMaps georef_session(const Session& s, const DemRaster& dem, VisibilityMethod method,
                              int stride = 1, const ProgressFn& progress = {});

}  // namespace monoplot
