#include "monoplot/app/cli.hpp"

#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <spdlog/fmt/fmt.h>

#include "monoplot/app/logging.hpp"
#include "monoplot/app/service.hpp"
#include "monoplot/app/synth.hpp"
#include "monoplot/error.hpp"
#include "monoplot/session.hpp"

namespace monoplot::app {

namespace {

CameraParams parse_init(const std::string& text) {
  std::vector<double> values;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t pos = 0;
      values.push_back(std::stod(item, &pos));
      if (item.find_first_not_of(" \t", pos) != std::string::npos) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw InputError("--init: '" + item + "' is not a number");
    }
  }
  if (values.size() != CameraParams::kDim) {
    throw InputError("--init expects 7 comma-separated values tx,ty,tz,yaw,pitch,roll,fov");
  }
  CameraParams cam = CameraParams::from_vector(Eigen::Map<const CameraParams::Vector>(values.data()));
  cam.validate();
  return cam;
}

struct DetectArgs {
  std::string photo, dem, out;
  DetectorConfig cfg;
};

struct SolveArgs {
  std::string session, init, trace, camera_out;
  std::uint64_t seed = 0;
};

struct GeorefArgs {
  std::string session, method = "raytrace", out;
  int stride = 1;
  double opacity = 0.5;
};

struct ServeArgs {
  std::string session, host = "127.0.0.1", ui;
  int port = 8080;
};

struct SynthArgs {
  std::string out;
  SynthOptions opt;
};

int run_detect(const DetectArgs& a, std::ostream& out, spdlog::logger& log) {
  const Session s = detect_session(a.photo, a.dem, a.out, a.cfg);
  if (s.image_gcps.empty()) log.warn("no keypoints detected in photo {}", a.photo);
  if (s.dem_gcps.empty()) log.warn("no GCPs detected in DEM {}", a.dem);
  save_session(a.out, s);
  out << fmt::format("detected {} image GCPs and {} DEM GCPs; wrote {}\n", s.image_gcps.size(),
                     s.dem_gcps.size(), a.out);
  return kExitOk;
}

int run_solve(const SolveArgs& a, std::ostream& out, std::ostream& err, spdlog::logger& log) {
  Session s = load_session(a.session);
  if (!a.init.empty()) s.initial_camera = parse_init(a.init);
  log.debug("solving with {} image and {} DEM GCPs, seed {}", s.selected_image_count(),
            s.selected_dem_count(), a.seed);
  const RegistrationResult r = solve_session(s, a.seed);
  save_session(a.session, s);
  if (!a.trace.empty()) write_file_atomic(a.trace, trace_to_csv(r.trace));
  if (!a.camera_out.empty() && s.solved_camera) {
    write_file_atomic(a.camera_out, camera_to_json(*s.solved_camera, s.photo_size).dump(2) + "\n");
  }
  if (r.status == SolveStatus::kDegenerate) {
    err << "solve failed: " << r.diagnostic << "\n";
    return kExitDegenerate;
  }
  out << fmt::format("final S: {:.6f} px\niterations: {}\nrestarts: {}\nstatus: {}\n", r.final_s,
                     r.iterations, r.restarts_used, to_string(r.status));
  return kExitOk;
}

int run_georef(const GeorefArgs& a, std::ostream& out, spdlog::logger& log) {
  if (a.stride < 1) throw InputError("--stride must be >= 1");
  if (a.opacity < 0.0 || a.opacity > 1.0) throw InputError("--opacity must lie in [0, 1]");
  const VisibilityMethod method = visibility_method_from_string(a.method);
  const Session s = load_session(a.session);
  if (!s.solved_camera) throw InputError("session has no solved camera; run solve first");
  const DemRaster dem = load_esri_ascii(s.resolved_dem());
  int last_percent = -1;
  const CoordinateMaps maps = georef_session(s, dem, method, a.stride, [&](double p) {
    const int percent = static_cast<int>(p * 100.0);
    if (percent / 10 != last_percent / 10) log.debug("georef {}%", percent);
    last_percent = percent;
  });
  std::filesystem::create_directories(a.out);
  const MapsWriteSummary summary = write_coordinate_maps(a.out, maps);
  const RgbImage photo = read_photo_rgb(s.resolved_photo());
  write_png(std::filesystem::path(a.out) / "overlay.png", render_overlay(photo, maps, a.opacity));
  out << fmt::format("valid pixels: {} of {}\n", maps.valid_count(),
                     static_cast<std::size_t>(maps.width) * maps.height);
  if (maps.valid_count() > 0) {
    out << fmt::format("x range: [{:.3f}, {:.3f}]\ny range: [{:.3f}, {:.3f}]\nz range: [{:.3f}, {:.3f}]\n",
                       summary.min[0], summary.max[0], summary.min[1], summary.max[1],
                       summary.min[2], summary.max[2]);
  }
  out << "wrote " << a.out << "\n";
  return kExitOk;
}

int run_serve(const ServeArgs& a, std::ostream& out, std::ostream& err,
              const std::shared_ptr<spdlog::logger>& log) {
  std::optional<std::filesystem::path> ui;
  if (!a.ui.empty()) {
    if (!std::filesystem::is_directory(a.ui)) throw InputError("UI directory " + a.ui + " does not exist");
    ui = a.ui;
  }
  SessionService service(a.session, log);
  HttpServer server(service, ui);
  if (!server.bind(a.host, a.port)) {
    err << "cannot listen on " << a.host << ":" << a.port << " (port unavailable)\n";
    return kExitInput;
  }
  out << "serving " << a.session << " on http://" << a.host << ":" << server.port() << "\n"
      << std::flush;
  server.listen();
  return kExitOk;
}

int run_synth(const SynthArgs& a, std::ostream& out) {
  const SynthOutput o = write_synthetic_scene(a.out, a.opt);
  out << fmt::format("wrote {}, {}, {} and {}\n", o.dem.string(), o.photo.string(),
                     o.session.string(), o.truth_camera.string());
  return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  const auto log = make_logger(err);

  CLI::App app{"Monoplotting: georeference a photograph against a DEM"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "monoplot 0.1.0");

  DetectArgs detect;
  auto* detect_cmd = app.add_subcommand("detect", "Detect GCPs in a photo and a DEM and write a session");
  detect_cmd->add_option("--photo", detect.photo, "Photo (PNG or PGM)")->required();
  detect_cmd->add_option("--dem", detect.dem, "DEM (ESRI ASCII grid)")->required();
  detect_cmd->add_option("--out", detect.out, "Session file to write")->required();
  detect_cmd->add_option("--max-keypoints", detect.cfg.max_keypoints, "Keypoints kept per input")
      ->capture_default_str();
  detect_cmd->add_option("--fast-threshold", detect.cfg.fast_threshold, "FAST intensity threshold")
      ->capture_default_str();
  detect_cmd->add_option("--nms-radius", detect.cfg.nms_radius, "Non-maximum suppression radius (px)")
      ->capture_default_str();
  detect_cmd->add_option("--harris-k", detect.cfg.harris_k, "Harris response constant")
      ->capture_default_str();
  detect_cmd->add_option("--grid", detect.cfg.grid_cells, "Bucketing grid cells per side")
      ->capture_default_str();

  SolveArgs solve;
  auto* solve_cmd = app.add_subcommand("solve", "Recover the camera for a session");
  solve_cmd->add_option("--session", solve.session, "Session file (updated in place)")->required();
  solve_cmd->add_option("--init", solve.init, "Initial camera tx,ty,tz,yaw,pitch,roll,fov (radians)");
  solve_cmd->add_option("--seed", solve.seed, "Seed for restart jitter")->capture_default_str();
  solve_cmd->add_option("--trace", solve.trace, "Write the optimizer trace as CSV");
  solve_cmd->add_option("--camera-out", solve.camera_out, "Write the solved camera as JSON");

  GeorefArgs georef;
  auto* georef_cmd = app.add_subcommand("georef", "Compute per-pixel world coordinates");
  georef_cmd->add_option("--session", georef.session, "Solved session file")->required();
  georef_cmd->add_option("--method", georef.method, "raytrace or zbuffer")
      ->check(CLI::IsMember({"raytrace", "zbuffer"}))
      ->capture_default_str();
  georef_cmd->add_option("--out", georef.out, "Output directory")->required();
  georef_cmd->add_option("--stride", georef.stride, "Georeference every k-th pixel")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  georef_cmd->add_option("--opacity", georef.opacity, "Photo weight in overlay.png")
      ->check(CLI::Range(0.0, 1.0))
      ->capture_default_str();

  ServeArgs serve;
  auto* serve_cmd = app.add_subcommand("serve", "Serve the session over HTTP");
  serve_cmd->add_option("--session", serve.session, "Session file")->required();
  serve_cmd->add_option("--port", serve.port, "TCP port")->check(CLI::Range(0, 65535))->capture_default_str();
  serve_cmd->add_option("--host", serve.host, "Bind address")->capture_default_str();
  serve_cmd->add_option("--ui", serve.ui, "Directory with the static UI bundle");

  SynthArgs synth;
  auto* synth_cmd = app.add_subcommand("synth", "Write the synthetic three-box scene");
  synth_cmd->add_option("--out", synth.out, "Output directory")->required();
  synth_cmd->add_option("--dem-size", synth.opt.dem_size, "DEM cells per side")
      ->check(CLI::Range(32, 4096))
      ->capture_default_str();
  synth_cmd->add_option("--width", synth.opt.image.width, "Photo width")
      ->check(CLI::Range(16, 8192))
      ->capture_default_str();
  synth_cmd->add_option("--height", synth.opt.image.height, "Photo height")
      ->check(CLI::Range(16, 8192))
      ->capture_default_str();
  synth_cmd->add_flag("--exact", synth.opt.exact, "Use true projections as image GCPs");
  synth_cmd->add_option("--seed", synth.opt.seed, "Seed for the initial camera perturbation")
      ->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitInput;
  }

  try {
    if (*detect_cmd) return run_detect(detect, out, *log);
    if (*solve_cmd) return run_solve(solve, out, err, *log);
    if (*georef_cmd) return run_georef(georef, out, *log);
    if (*serve_cmd) return run_serve(serve, out, err, log);
    if (*synth_cmd) return run_synth(synth, out);
  } catch (const InputError& e) {
    err << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitInput;
}

}  // namespace monoplot::app
