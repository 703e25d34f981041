#include "monoplot/app/service.hpp"

#include <charconv>
#include <cmath>
#include <stdexcept>
#include <utility>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "monoplot/error.hpp"

namespace monoplot::app {

using json = nlohmann::json;

namespace {

ApiResponse json_response(int status, const json& j) { return {status, "application/json", j.dump()}; }

ApiResponse error_response(int status, const std::string& message) {
  return json_response(status, json{{"error", message}});
}

ApiResponse png_response(std::vector<std::uint8_t> bytes) {
  return {200, "image/png", std::string(bytes.begin(), bytes.end())};
}

json parse_body(const std::string& body) {
  if (body.empty()) return json::object();
  try {
    json j = json::parse(body);
    if (!j.is_object()) throw InputError("request body must be a JSON object");
    return j;
  } catch (const json::parse_error& e) {
    throw InputError(std::string("malformed JSON body: ") + e.what());
  }
}

template <typename T>
std::optional<T> parse_number(const std::string& s) {
  T value{};
  const char* end = s.data() + s.size();
  const auto [ptr, ec] = std::from_chars(s.data(), end, value);
  if (ec != std::errc() || ptr != end || s.empty()) return std::nullopt;
  return value;
}

std::optional<double> parse_double(const std::string& s) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size() || !std::isfinite(v)) return std::nullopt;
    return v;
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

// Maps exceptions thrown by `fn` to HTTP errors.
template <typename Fn>
ApiResponse guarded(spdlog::logger& log, Fn&& fn) {
  try {
    return fn();
  } catch (const InputError& e) {
    return error_response(400, e.what());
  } catch (const json::exception& e) {
    return error_response(400, e.what());
  } catch (const std::exception& e) {
    log.error("request failed: {}", e.what());
    return error_response(500, e.what());
  }
}

json projections_to_json(const Session& s, const CameraParams& cam) {
  json out = json::array();
  const auto proj = project_dem_gcps(s, cam);
  for (std::size_t i = 0; i < proj.size(); ++i) {
    const bool front = proj[i].in_front;
    out.push_back({{"index", i},
                   {"u", front ? json(proj[i].pixel.u) : json(nullptr)},
                   {"v", front ? json(proj[i].pixel.v) : json(nullptr)},
                   {"in_front", front},
                   {"in_frame", proj[i].in_frame},
                   {"selected", s.dem_gcps[i].keypoint.selected}});
  }
  return out;
}

const char* state_name(int state) {
  switch (state) {
    case 0:
      return "running";
    case 1:
      return "done";
    default:
      return "failed";
  }
}

}  // namespace

SessionService::SessionService(std::filesystem::path session_path,
                               std::shared_ptr<spdlog::logger> log)
    : session_path_(std::move(session_path)),
      log_(std::move(log)),
      session_(load_session(session_path_)),
      dem_(load_esri_ascii(session_.resolved_dem())),
      photo_(read_photo_rgb(session_.resolved_photo())) {
  if (photo_.width != session_.photo_size.width || photo_.height != session_.photo_size.height) {
    throw InputError("photo " + session_.resolved_photo().string() +
                     " no longer matches the session's dimensions");
  }
  photo_png_ = encode_png(photo_);
  hillshade_png_ = encode_png(dem_hillshade(dem_));
}

SessionService::~SessionService() { wait_for_jobs(); }

Session SessionService::snapshot() const {
  std::shared_lock lock(session_mutex_);
  return session_;
}

ApiResponse SessionService::get_session() const {
  std::shared_lock lock(session_mutex_);
  return json_response(200, session_to_json(session_));
}

ApiResponse SessionService::get_photo() const { return png_response(photo_png_); }

ApiResponse SessionService::get_hillshade() const { return png_response(hillshade_png_); }

ApiResponse SessionService::patch_gcp(const std::string& kind, const std::string& index,
                                      const std::string& body) {
  return guarded(*log_, [&]() -> ApiResponse {
    if (kind != "image" && kind != "dem") return error_response(404, "unknown GCP kind '" + kind + "'");
    const auto idx = parse_number<std::size_t>(index);
    if (!idx) return error_response(400, "GCP index must be a non-negative integer");
    const json j = parse_body(body);
    if (!j.contains("selected") || !j["selected"].is_boolean()) {
      return error_response(400, "body must contain boolean 'selected'");
    }
    const bool selected = j["selected"].get<bool>();

    std::unique_lock lock(session_mutex_);
    Session next = session_;
    json item;
    if (kind == "image") {
      if (*idx >= next.image_gcps.size()) return error_response(404, "image GCP index out of range");
      next.image_gcps[*idx].selected = selected;
      item = keypoint_to_json(next.image_gcps[*idx]);
    } else {
      if (*idx >= next.dem_gcps.size()) return error_response(404, "DEM GCP index out of range");
      next.dem_gcps[*idx].keypoint.selected = selected;
      item = dem_gcp_to_json(next.dem_gcps[*idx]);
    }
    save_session(session_path_, next);
    session_ = std::move(next);
    log_->info("{} GCP {} selected={}", kind, *idx, selected);
    return json_response(200, item);
  });
}

ApiResponse SessionService::put_initial_camera(const std::string& body) {
  return guarded(*log_, [&]() -> ApiResponse {
    const json j = parse_body(body);
    CameraParams cam;
    if (j.contains("vector")) {
      const auto v = j["vector"].get<std::vector<double>>();
      if (v.size() != CameraParams::kDim) throw InputError("camera vector needs 7 values");
      cam = CameraParams::from_vector(Eigen::Map<const CameraParams::Vector>(v.data()));
    } else {
      cam = camera_from_json(j);
    }
    cam.validate();

    std::unique_lock lock(session_mutex_);
    Session next = session_;
    next.initial_camera = cam;
    save_session(session_path_, next);
    session_ = std::move(next);
    return json_response(200, camera_to_json(cam, session_.photo_size));
  });
}

ApiResponse SessionService::post_solve(const std::string& body) {
  return guarded(*log_, [&]() -> ApiResponse {
    const json j = parse_body(body);
    std::uint64_t seed = 0;
    if (j.contains("seed")) seed = j["seed"].get<std::uint64_t>();

    std::unique_lock lock(session_mutex_);
    Session next = session_;
    next.schedule = schedule_from_json(j, next.schedule);
    next.schedule.validate();
    const bool preview = next.schedule.max_iters == 0;

    if (preview) {
      const json out{{"preview", true},
                     {"camera", camera_to_json(next.initial_camera, next.photo_size)},
                     {"projections", projections_to_json(next, next.initial_camera)}};
      return json_response(200, out);
    }

    const RegistrationResult r = solve_session(next, seed);
    save_session(session_path_, next);
    session_ = std::move(next);
    log_->info("solve: S={} status={} iterations={}", r.final_s, to_string(r.status), r.iterations);
    json out{{"preview", false}, {"result", result_to_json(r, session_.photo_size)}};
    if (session_.solved_camera) {
      out["camera"] = camera_to_json(*session_.solved_camera, session_.photo_size);
      out["projections"] = projections_to_json(session_, *session_.solved_camera);
    } else {
      out["camera"] = nullptr;
      out["projections"] = json::array();
    }
    return json_response(200, out);
  });
}

ApiResponse SessionService::post_georef(const std::string& body) {
  return guarded(*log_, [&]() -> ApiResponse {
    const json j = parse_body(body);
    const VisibilityMethod method =
        visibility_method_from_string(j.value("method", std::string("raytrace")));
    const int stride = j.value("stride", 1);
    if (stride < 1) throw InputError("stride must be >= 1");

    Session snap = snapshot();
    if (!snap.solved_camera) return error_response(409, "session has no solved camera; run solve first");

    auto job = std::make_shared<Job>();
    {
      std::lock_guard lock(jobs_mutex_);
      job->id = std::to_string(next_job_++);
      jobs_[job->id] = job;
    }
    job->worker = std::thread([this, job, snap = std::move(snap), method, stride]() {
      try {
        CoordinateMaps maps = georef_session(snap, dem_, method, stride,
                                             [&job](double p) { job->progress.store(p); });
        job->maps = std::make_shared<const CoordinateMaps>(std::move(maps));
        job->progress.store(1.0);
        job->state.store(1);
      } catch (const std::exception& e) {
        job->error = e.what();
        job->state.store(2);
        log_->error("georef job {} failed: {}", job->id, e.what());
      }
    });
    log_->info("georef job {} started ({}, stride {})", job->id, to_string(method), stride);
    return json_response(202, json{{"job", job->id}});
  });
}

std::shared_ptr<SessionService::Job> SessionService::find_job(const std::string& id) const {
  std::lock_guard lock(jobs_mutex_);
  const auto it = jobs_.find(id);
  return it == jobs_.end() ? nullptr : it->second;
}

ApiResponse SessionService::get_job(const std::string& id) const {
  const auto job = find_job(id);
  if (!job) return error_response(404, "unknown job " + id);
  const int state = job->state.load();
  json out{{"id", job->id}, {"kind", "georef"}, {"state", state_name(state)},
           {"progress", job->progress.load()}};
  if (state == 2) out["error"] = job->error;
  if (state == 1) {
    const CoordinateMaps& m = *job->maps;
    out["maps"] = {{"width", m.width},
                   {"height", m.height},
                   {"stride", m.stride},
                   {"valid_count", m.valid_count()}};
  }
  return json_response(200, out);
}

ApiResponse SessionService::get_job_probe(const std::string& id, const std::string& u,
                                          const std::string& v) const {
  const auto job = find_job(id);
  if (!job) return error_response(404, "unknown job " + id);
  if (job->state.load() != 1) return error_response(409, "job " + id + " has no maps");
  const auto pu = parse_number<int>(u);
  const auto pv = parse_number<int>(v);
  if (!pu || !pv) return error_response(400, "u and v must be integer pixel coordinates");
  const CoordinateMaps& m = *job->maps;
  const int i = *pu / m.stride;
  const int jj = *pv / m.stride;
  if (*pu < 0 || *pv < 0 || i >= m.width || jj >= m.height) {
    return error_response(400, "pixel outside the photo");
  }
  const std::size_t idx = m.index(i, jj);
  json out{{"u", i * m.stride}, {"v", jj * m.stride}, {"valid", m.valid[idx] != 0}};
  if (m.valid[idx]) {
    // Same float32 values as the binary maps.
    out["x"] = static_cast<float>(m.x[idx]);
    out["y"] = static_cast<float>(m.y[idx]);
    out["z"] = static_cast<float>(m.z[idx]);
  }
  return json_response(200, out);
}

ApiResponse SessionService::get_job_maps(const std::string& id) const {
  const auto job = find_job(id);
  if (!job) return error_response(404, "unknown job " + id);
  if (job->state.load() != 1) return error_response(409, "job " + id + " has no maps");
  const auto bytes = encode_maps_binary(*job->maps);
  return {200, "application/octet-stream", std::string(bytes.begin(), bytes.end())};
}

ApiResponse SessionService::get_overlay(const std::string& opacity_text) {
  return guarded(*log_, [&]() -> ApiResponse {
    double opacity = 0.5;
    if (!opacity_text.empty()) {
      const auto o = parse_double(opacity_text);
      if (!o || *o < 0.0 || *o > 1.0) return error_response(400, "opacity must lie in [0, 1]");
      opacity = *o;
    }
    const Session snap = snapshot();
    if (!snap.solved_camera) return error_response(409, "session has no solved camera; run solve first");

    std::shared_ptr<const CoordinateMaps> maps;
    {
      std::lock_guard lock(overlay_mutex_);
      if (!overlay_camera_ || overlay_camera_->to_vector() != snap.solved_camera->to_vector()) {
        overlay_maps_ = std::make_shared<const CoordinateMaps>(
            georef_session(snap, dem_, VisibilityMethod::kDepthBuffer, 1));
        overlay_camera_ = snap.solved_camera;
      }
      maps = overlay_maps_;
    }
    return png_response(encode_png(render_overlay(photo_, *maps, opacity)));
  });
}

void SessionService::wait_for_jobs() {
  std::vector<std::shared_ptr<Job>> jobs;
  {
    std::lock_guard lock(jobs_mutex_);
    for (auto& [id, job] : jobs_) jobs.push_back(job);
  }
  for (auto& job : jobs) {
    if (job->worker.joinable()) job->worker.join();
  }
}

namespace {

void reply(httplib::Response& res, const ApiResponse& r) {
  res.status = r.status;
  res.set_content(r.body, r.content_type);
}

}  // namespace

void mount_routes(httplib::Server& server, SessionService& service,
                  const std::optional<std::filesystem::path>& ui_dir) {
  using httplib::Request;
  using httplib::Response;
  server.Get("/api/session", [&](const Request&, Response& res) { reply(res, service.get_session()); });
  server.Get("/api/photo", [&](const Request&, Response& res) { reply(res, service.get_photo()); });
  server.Get("/api/dem/hillshade",
             [&](const Request&, Response& res) { reply(res, service.get_hillshade()); });
  server.Patch(R"(/api/gcps/([^/]+)/([^/]+))", [&](const Request& req, Response& res) {
    reply(res, service.patch_gcp(req.matches[1], req.matches[2], req.body));
  });
  server.Put("/api/camera/initial", [&](const Request& req, Response& res) {
    reply(res, service.put_initial_camera(req.body));
  });
  server.Post("/api/solve",
              [&](const Request& req, Response& res) { reply(res, service.post_solve(req.body)); });
  server.Post("/api/georef",
              [&](const Request& req, Response& res) { reply(res, service.post_georef(req.body)); });
  server.Get(R"(/api/jobs/([^/]+))",
             [&](const Request& req, Response& res) { reply(res, service.get_job(req.matches[1])); });
  server.Get(R"(/api/jobs/([^/]+)/probe)", [&](const Request& req, Response& res) {
    reply(res, service.get_job_probe(req.matches[1], req.get_param_value("u"),
                                     req.get_param_value("v")));
  });
  server.Get(R"(/api/jobs/([^/]+)/maps\.bin)", [&](const Request& req, Response& res) {
    reply(res, service.get_job_maps(req.matches[1]));
  });
  server.Get("/api/overlay", [&](const Request& req, Response& res) {
    reply(res, service.get_overlay(req.get_param_value("opacity")));
  });
  if (ui_dir) server.set_mount_point("/", ui_dir->string());
}

HttpServer::HttpServer(SessionService& service, std::optional<std::filesystem::path> ui_dir)
    : server_(std::make_unique<httplib::Server>()) {
  // The library default sets SO_REUSEPORT, which lets a second server share
  // a port that is already in use.
  server_->set_socket_options([](socket_t sock) {
    int yes = 1;
    ::setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, reinterpret_cast<const void*>(&yes), sizeof(yes));
  });
  mount_routes(*server_, service, ui_dir);
}

HttpServer::~HttpServer() { stop(); }

bool HttpServer::bind(const std::string& host, int port) {
  if (port == 0) {
    port_ = server_->bind_to_any_port(host);
    return port_ > 0;
  }
  if (!server_->bind_to_port(host, port)) return false;
  port_ = port;
  return true;
}

void HttpServer::listen() { server_->listen_after_bind(); }

void HttpServer::start() {
  thread_ = std::thread([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
}

void HttpServer::stop() {
  server_->stop();
  if (thread_.joinable()) thread_.join();
}

}  // namespace monoplot::app
