#include "monoplot/session.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>

#include <nlohmann/json.hpp>

#include "monoplot/error.hpp"

namespace monoplot {

using nlohmann::json;

std::size_t Session::selected_image_count() const {
  return static_cast<std::size_t>(std::count_if(image_gcps.begin(), image_gcps.end(),
                                                [](const Keypoint& k) { return k.selected; }));
}

std::size_t Session::selected_dem_count() const {
  return static_cast<std::size_t>(std::count_if(
      dem_gcps.begin(), dem_gcps.end(), [](const DemGcp& g) { return g.keypoint.selected; }));
}

namespace {

bool same_double(double a, double b) { return a == b || (std::isnan(a) && std::isnan(b)); }

bool same_trace(const std::vector<TraceEntry>& a, const std::vector<TraceEntry>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].iter != b[i].iter || !same_double(a[i].s, b[i].s) || a[i].r != b[i].r ||
        a[i].lambda != b[i].lambda || a[i].objective != b[i].objective) {
      return false;
    }
  }
  return true;
}

bool same_result(const std::optional<RegistrationResult>& a,
                 const std::optional<RegistrationResult>& b) {
  if (a.has_value() != b.has_value()) return false;
  if (!a) return true;
  return a->camera == b->camera && same_double(a->final_loss, b->final_loss) &&
         same_double(a->final_s, b->final_s) && same_trace(a->trace, b->trace) &&
         a->status == b->status && a->iterations == b->iterations &&
         a->restarts_used == b->restarts_used && a->diagnostic == b->diagnostic;
}

// JSON has no NaN or infinity; they travel as null.
json num(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

double num_or(const json& j, double missing) {
  return j.is_null() ? missing : j.get<double>();
}

}  // namespace

bool Session::operator==(const Session& o) const {
  return photo_path == o.photo_path && photo_size == o.photo_size && dem_path == o.dem_path &&
         detector == o.detector && image_gcps == o.image_gcps && dem_gcps == o.dem_gcps &&
         initial_camera == o.initial_camera && solved_camera == o.solved_camera &&
         schedule == o.schedule && same_result(result, o.result);
}

json camera_to_json(const CameraParams& cam, ImageSize image) {
  const Eigen::Vector3d pos = cam.position();
  return {{"t", {cam.t.x(), cam.t.y(), cam.t.z()}},
          {"euler_zxy", {cam.yaw, cam.pitch, cam.roll}},
          {"fov_rad", cam.fov},
          {"image", {{"width", image.width}, {"height", image.height}}},
          {"position", {pos.x(), pos.y(), pos.z()}}};
}

CameraParams camera_from_json(const json& j) {
  CameraParams cam;
  const auto& t = j.at("t");
  const auto& e = j.at("euler_zxy");
  if (t.size() != 3 || e.size() != 3) throw InputError("camera t and euler_zxy need 3 values");
  cam.t = {t[0].get<double>(), t[1].get<double>(), t[2].get<double>()};
  cam.yaw = e[0].get<double>();
  cam.pitch = e[1].get<double>();
  cam.roll = e[2].get<double>();
  cam.fov = j.at("fov_rad").get<double>();
  cam.validate();
  return cam;
}

json schedule_to_json(const OptimizerSchedule& s) {
  return {{"max_iters", s.max_iters},
          {"step_size",
           {{"translation", s.step_translation}, {"angle", s.step_angle}, {"fov", s.step_fov}}},
          {"lambda_0", s.lambda_0},
          {"lambda_rule", {{"adaptive", s.lambda_rule.adaptive}, {"s_ref", s.lambda_rule.s_ref}}},
          {"convergence_tol", s.convergence_tol},
          {"patience", s.patience},
          {"restarts", s.restarts},
          {"restart_threshold", s.restart_threshold}};
}

OptimizerSchedule schedule_from_json(const json& j, OptimizerSchedule s) {
  s.max_iters = j.value("max_iters", s.max_iters);
  if (j.contains("step_size")) {
    const auto& st = j.at("step_size");
    s.step_translation = st.value("translation", s.step_translation);
    s.step_angle = st.value("angle", s.step_angle);
    s.step_fov = st.value("fov", s.step_fov);
  }
  s.lambda_0 = j.value("lambda_0", s.lambda_0);
  if (j.contains("lambda_rule")) {
    const auto& lr = j.at("lambda_rule");
    s.lambda_rule.adaptive = lr.value("adaptive", s.lambda_rule.adaptive);
    s.lambda_rule.s_ref = lr.value("s_ref", s.lambda_rule.s_ref);
  }
  s.convergence_tol = j.value("convergence_tol", s.convergence_tol);
  s.patience = j.value("patience", s.patience);
  s.restarts = j.value("restarts", s.restarts);
  s.restart_threshold = j.value("restart_threshold", s.restart_threshold);
  s.validate();
  return s;
}

json detector_to_json(const DetectorConfig& c) {
  return {{"max_keypoints", c.max_keypoints},
          {"fast_threshold", c.fast_threshold},
          {"nms_radius", c.nms_radius},
          {"harris_k", c.harris_k},
          {"grid_cells", c.grid_cells}};
}

DetectorConfig detector_from_json(const json& j, DetectorConfig c) {
  c.max_keypoints = j.value("max_keypoints", c.max_keypoints);
  c.fast_threshold = j.value("fast_threshold", c.fast_threshold);
  c.nms_radius = j.value("nms_radius", c.nms_radius);
  c.harris_k = j.value("harris_k", c.harris_k);
  c.grid_cells = j.value("grid_cells", c.grid_cells);
  c.validate();
  return c;
}

json keypoint_to_json(const Keypoint& k) {
  return {{"u", k.u}, {"v", k.v}, {"score", k.score}, {"selected", k.selected}};
}

json dem_gcp_to_json(const DemGcp& g) {
  return {{"u", g.keypoint.u},       {"v", g.keypoint.v}, {"x", g.world.x},
          {"y", g.world.y},          {"z", g.world.z},    {"score", g.keypoint.score},
          {"selected", g.keypoint.selected}};
}

json result_to_json(const RegistrationResult& r, ImageSize image) {
  json trace = json::array();
  for (const auto& t : r.trace) {
    trace.push_back({{"iter", t.iter},
                     {"S", num(t.s)},
                     {"R", num(t.r)},
                     {"lambda", num(t.lambda)},
                     {"objective", num(t.objective)}});
  }
  return {{"camera", camera_to_json(r.camera, image)},
          {"final_loss", num(r.final_loss)},
          {"final_s", num(r.final_s)},
          {"status", to_string(r.status)},
          {"iterations", r.iterations},
          {"restarts_used", r.restarts_used},
          {"diagnostic", r.diagnostic},
          {"trace", std::move(trace)}};
}

json session_to_json(const Session& s) {
  json image = json::array();
  for (const auto& k : s.image_gcps) image.push_back(keypoint_to_json(k));
  json dem = json::array();
  for (const auto& g : s.dem_gcps) dem.push_back(dem_gcp_to_json(g));
  json out = {
      {"schema", kSessionSchema},
      {"photo", {{"path", s.photo_path}, {"width", s.photo_size.width}, {"height", s.photo_size.height}}},
      {"dem", {{"path", s.dem_path}}},
      {"detector", detector_to_json(s.detector)},
      {"image_gcps", std::move(image)},
      {"dem_gcps", std::move(dem)},
      {"initial_camera", camera_to_json(s.initial_camera, s.photo_size)},
      {"solved_camera", s.solved_camera ? camera_to_json(*s.solved_camera, s.photo_size) : json(nullptr)},
      {"schedule", schedule_to_json(s.schedule)},
      {"result", s.result ? result_to_json(*s.result, s.photo_size) : json(nullptr)},
  };
  return out;
}

Session session_from_json(const json& j) {
  try {
    const int schema = j.at("schema").get<int>();
    if (schema != kSessionSchema) {
      throw InputError("unsupported session schema " + std::to_string(schema));
    }
    Session s;
    const auto& photo = j.at("photo");
    s.photo_path = photo.at("path").get<std::string>();
    s.photo_size = {photo.at("width").get<int>(), photo.at("height").get<int>()};
    s.dem_path = j.at("dem").at("path").get<std::string>();
    if (j.contains("detector")) s.detector = detector_from_json(j.at("detector"));
    for (const auto& k : j.at("image_gcps")) {
      s.image_gcps.push_back({k.at("u").get<double>(), k.at("v").get<double>(),
                              k.value("score", 0.0), k.value("selected", true)});
    }
    for (const auto& g : j.at("dem_gcps")) {
      s.dem_gcps.push_back({{g.at("u").get<double>(), g.at("v").get<double>(),
                             g.value("score", 0.0), g.value("selected", true)},
                            {g.at("x").get<double>(), g.at("y").get<double>(),
                             g.at("z").get<double>()}});
    }
    s.initial_camera = camera_from_json(j.at("initial_camera"));
    if (j.contains("solved_camera") && !j.at("solved_camera").is_null()) {
      s.solved_camera = camera_from_json(j.at("solved_camera"));
    }
    if (j.contains("schedule")) s.schedule = schedule_from_json(j.at("schedule"));
    if (j.contains("result") && !j.at("result").is_null()) {
      const auto& r = j.at("result");
      RegistrationResult res;
      res.camera = r.contains("camera") ? camera_from_json(r.at("camera"))
                                        : s.solved_camera.value_or(s.initial_camera);
      res.final_loss = num_or(r.at("final_loss"), std::numeric_limits<double>::infinity());
      res.final_s = num_or(r.at("final_s"), std::numeric_limits<double>::infinity());
      res.status = solve_status_from_string(r.at("status").get<std::string>());
      res.iterations = r.value("iterations", 0);
      res.restarts_used = r.value("restarts_used", 0);
      res.diagnostic = r.value("diagnostic", std::string());
      for (const auto& t : r.at("trace")) {
        res.trace.push_back({t.at("iter").get<int>(),
                             num_or(t.at("S"), std::numeric_limits<double>::quiet_NaN()),
                             num_or(t.at("R"), std::numeric_limits<double>::quiet_NaN()),
                             num_or(t.at("lambda"), std::numeric_limits<double>::quiet_NaN()),
                             num_or(t.at("objective"), std::numeric_limits<double>::quiet_NaN())});
      }
      s.result = std::move(res);
    }
    return s;
  } catch (const json::exception& e) {
    throw InputError(std::string("malformed session: ") + e.what());
  }
}

std::string session_to_string(const Session& s) { return session_to_json(s).dump(2) + "\n"; }

Session load_session(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open session file " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw InputError(path.string() + ": " + e.what() + " (byte " + std::to_string(e.byte) + ")");
  }
  Session s;
  try {
    s = session_from_json(j);
  } catch (const InputError& e) {
    throw InputError(path.string() + ": " + e.what());
  }
  s.base_dir = path.parent_path();
  if (!std::filesystem::exists(s.resolved_photo())) {
    throw InputError(path.string() + ": photo " + s.resolved_photo().string() + " does not exist");
  }
  if (!std::filesystem::exists(s.resolved_dem())) {
    throw InputError(path.string() + ": DEM " + s.resolved_dem().string() + " does not exist");
  }
  return s;
}

void write_file_atomic(const std::filesystem::path& path, const std::string& contents) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw InputError("cannot write " + tmp.string());
    out << contents;
    out.flush();
    if (!out) throw InputError("failed writing " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

void save_session(const std::filesystem::path& path, const Session& s) {
  write_file_atomic(path, session_to_string(s));
}

std::string trace_to_csv(const std::vector<TraceEntry>& trace) {
  std::ostringstream out;
  out.precision(17);
  out << "iter,S,R,lambda,objective\n";
  for (const auto& t : trace) {
    out << t.iter << ',' << t.s << ',' << t.r << ',' << t.lambda << ',' << t.objective << '\n';
  }
  return out.str();
}

CameraParams default_initial_camera(const DemRaster& dem) {
  const Eigen::Vector2d a = dem.pixel_to_world(0, 0);
  const Eigen::Vector2d b = dem.pixel_to_world(dem.cols() - 1, dem.rows() - 1);
  const Eigen::Vector2d center = 0.5 * (a + b);
  const double extent = std::max(std::abs(b.x() - a.x()), std::abs(b.y() - a.y()));
  const auto range = dem.elevation_range().value_or(std::make_pair(0.0, 0.0));
  const double mid_z = 0.5 * (range.first + range.second);
  const Eigen::Vector3d target(center.x(), center.y(), mid_z);
  const Eigen::Vector3d eye(center.x() - 0.7 * extent, center.y() - 0.7 * extent,
                            range.second + 0.6 * extent);
  return camera_looking_at(eye, target, std::numbers::pi / 3.0);
}

namespace {

std::string relative_to(const std::filesystem::path& target, const std::filesystem::path& base) {
  std::error_code ec;
  const auto abs_target = std::filesystem::absolute(target, ec);
  const auto abs_base = std::filesystem::absolute(base.empty() ? "." : base, ec);
  auto rel = std::filesystem::relative(abs_target, abs_base, ec);
  if (ec || rel.empty()) return abs_target.string();
  return rel.generic_string();
}

}  // namespace

Session detect_session(const std::filesystem::path& photo_path,
                       const std::filesystem::path& dem_path,
                       const std::filesystem::path& session_path, const DetectorConfig& cfg) {
  cfg.validate();
  const GrayImage photo = read_photo(photo_path);
  const DemRaster dem = load_esri_ascii(dem_path);

  Session s;
  s.base_dir = session_path.parent_path();
  s.photo_path = relative_to(photo_path, s.base_dir);
  s.dem_path = relative_to(dem_path, s.base_dir);
  s.photo_size = {photo.width, photo.height};
  s.detector = cfg;
  if (photo.width >= 8 && photo.height >= 8) s.image_gcps = detect_keypoints(photo, cfg);
  s.dem_gcps = detect_dem_gcps(dem, cfg);
  s.initial_camera = default_initial_camera(dem);
  return s;
}

RegistrationProblem make_problem(const Session& s) {
  if (s.selected_image_count() == 0) throw InputError("no selected image GCPs");
  if (s.selected_dem_count() == 0) throw InputError("no selected DEM GCPs");
  RegistrationProblem p;
  for (const auto& k : s.image_gcps) {
    if (k.selected) p.image_gcps.emplace_back(k.u, k.v);
  }
  for (const auto& g : s.dem_gcps) {
    if (g.keypoint.selected) p.world_gcps.push_back(g.world);
  }
  p.image = s.photo_size;
  p.initial_camera = s.initial_camera;
  p.schedule = s.schedule;
  return p;
}

RegistrationResult solve_session(Session& s, std::uint64_t seed) {
  RegistrationResult r = solve(make_problem(s), seed);
  if (r.status != SolveStatus::kDegenerate) {
    s.solved_camera = r.camera;
  } else {
    s.solved_camera.reset();
  }
  s.result = r;
  return r;
}

std::vector<ProjectedPoint> project_dem_gcps(const Session& s, const CameraParams& cam) {
  std::vector<WorldPoint> pts;
  pts.reserve(s.dem_gcps.size());
  for (const auto& g : s.dem_gcps) pts.push_back(g.world);
  return project_set(cam, intrinsics_from_fov(cam.fov, s.photo_size.width, s.photo_size.height),
                     s.photo_size, pts);
}

CoordinateMaps georef_session(const Session& s, const DemRaster& dem, VisibilityMethod method,
                              int stride, const ProgressFn& progress) {
  if (!s.solved_camera) throw InputError("session has no solved camera; run solve first");
  const CameraParams& cam = *s.solved_camera;
  return georeference_image(cam,
                            intrinsics_from_fov(cam.fov, s.photo_size.width, s.photo_size.height),
                            dem, s.photo_size, method, stride, progress);
}

}  // namespace monoplot
