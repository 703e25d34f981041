#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <thread>

#include <spdlog/logger.h>

#include "monoplot/dem.hpp"
#include "monoplot/georef.hpp"
#include "monoplot/image.hpp"
#include "monoplot/session.hpp"

namespace httplib {
class Server;
}

namespace monoplot::app {

struct ApiResponse {
  int status = 200;
  std::string content_type = "application/json";
  std::string body;
};

/// Session state behind the HTTP API. Mutations are serialized and each one
/// is persisted atomically before it becomes visible; reads may run
/// concurrently. Georeferencing runs as background jobs.
class SessionService {
 public:
  SessionService(std::filesystem::path session_path, std::shared_ptr<spdlog::logger> log);
  ~SessionService();

  SessionService(const SessionService&) = delete;
  SessionService& operator=(const SessionService&) = delete;

  ApiResponse get_session() const;
  ApiResponse get_photo() const;
  ApiResponse get_hillshade() const;
  ApiResponse patch_gcp(const std::string& kind, const std::string& index, const std::string& body);
  ApiResponse put_initial_camera(const std::string& body);
  /// Body: schedule overrides plus optional "seed". max_iters = 0 returns
  /// projections for the initial camera without touching the session.
  ApiResponse post_solve(const std::string& body);
  ApiResponse post_georef(const std::string& body);
  ApiResponse get_job(const std::string& id) const;
  ApiResponse get_job_probe(const std::string& id, const std::string& u, const std::string& v) const;
  ApiResponse get_job_maps(const std::string& id) const;
  ApiResponse get_overlay(const std::string& opacity);

  /// Blocks until every job has finished.
  void wait_for_jobs();

  Session snapshot() const;

 private:
  struct Job {
    std::string id;
    std::atomic<double> progress{0.0};
    std::atomic<int> state{0};  // 0 running, 1 done, 2 failed
    std::string error;
    std::shared_ptr<const CoordinateMaps> maps;
    std::thread worker;
  };

  std::shared_ptr<Job> find_job(const std::string& id) const;

  std::filesystem::path session_path_;
  std::shared_ptr<spdlog::logger> log_;

  mutable std::shared_mutex session_mutex_;
  Session session_;

  DemRaster dem_;
  RgbImage photo_;
  std::vector<std::uint8_t> photo_png_;
  std::vector<std::uint8_t> hillshade_png_;

  mutable std::mutex jobs_mutex_;
  std::map<std::string, std::shared_ptr<Job>> jobs_;
  std::uint64_t next_job_ = 1;

  std::mutex overlay_mutex_;
  std::optional<CameraParams> overlay_camera_;
  std::shared_ptr<const CoordinateMaps> overlay_maps_;
};

/// Registers the /api routes and, when `ui_dir` is set, serves it at "/".
void mount_routes(httplib::Server& server, SessionService& service,
                  const std::optional<std::filesystem::path>& ui_dir);

/// HTTP front end running on its own thread.
class HttpServer {
 public:
  HttpServer(SessionService& service, std::optional<std::filesystem::path> ui_dir);
  ~HttpServer();

  /// Binds; port 0 picks a free port. False when the port is unavailable.
  bool bind(const std::string& host, int port);
  int port() const { return port_; }
  /// Serves on the calling thread until stop().
  void listen();
  void start();
  void stop();

 private:
  std::unique_ptr<httplib::Server> server_;
  std::thread thread_;
  int port_ = -1;
};

}  // namespace monoplot::app
