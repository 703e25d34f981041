#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "monoplot/camera.hpp"

namespace monoplot {

/// Adaptive regularization weight lambda = lambda_0 * S / (S + s_ref).
/// With `adaptive` off the weight is held at lambda_0.
struct LambdaRule {
  bool adaptive = true;
  double s_ref = 50.0;  // pixels

  bool operator==(const LambdaRule&) const = default;
};

struct OptimizerSchedule {
  int max_iters = 3000;
  // Per-parameter step sizes: the optimizer works in parameters divided by
  // these, and its first step has unit length there. Translation is a
  // fraction of the scene extent; angles and fov are radians.
  double step_translation = 0.01;
  double step_angle = 0.002;
  double step_fov = 0.001;
  double lambda_0 = 0.9;
  LambdaRule lambda_rule;
  double convergence_tol = 1e-3;  // pixels
  int patience = 25;
  int restarts = 8;
  // A run whose final S stays above this (pixels) triggers a restart.
  double restart_threshold = 1.0;

  void validate() const;

  bool operator==(const OptimizerSchedule&) const = default;
};

struct RegistrationProblem {
  std::vector<Eigen::Vector2d> image_gcps;
  std::vector<WorldPoint> world_gcps;
  ImageSize image;
  CameraParams initial_camera;
  OptimizerSchedule schedule;

  void validate() const;
  Intrinsics intrinsics(double fov) const {
    return intrinsics_from_fov(fov, image.width, image.height);
  }
};

enum class SolveStatus { kConverged, kMaxIters, kDegenerate };

std::string to_string(SolveStatus s);
SolveStatus solve_status_from_string(const std::string& s);

struct TraceEntry {
  int iter = 0;
  double s = 0.0;
  double r = 0.0;
  double lambda = 0.0;
  double objective = 0.0;

  bool operator==(const TraceEntry&) const = default;
};

struct RegistrationResult {
  CameraParams camera;
  double final_loss = 0.0;
  double final_s = 0.0;
  std::vector<TraceEntry> trace;
  SolveStatus status = SolveStatus::kDegenerate;
  int iterations = 0;
  int restarts_used = 0;
  std::string diagnostic;

  bool operator==(const RegistrationResult&) const = default;
};

struct ChamferResult {
  double value = 0.0;
  std::vector<std::size_t> nearest;  // per image GCP, index into `projected`
};

/// Mean distance from each image GCP to its nearest projected point. Ties go
/// to the lowest projected index. nullopt when `projected` is empty.
std::optional<ChamferResult> chamfer_loss(std::span<const Eigen::Vector2d> image_gcps,
                                          std::span<const Eigen::Vector2d> projected);

/// Squared distance between the two centroids. Both sets must be non-empty.
double centroid_regularizer(std::span<const Eigen::Vector2d> image_gcps,
                            std::span<const Eigen::Vector2d> projected);

double adapt_lambda(double s, double lambda_0, const LambdaRule& rule);

/// Everything the optimizer needs at one camera.
struct Evaluation {
  bool degenerate = true;  // no visible projection
  double s = 0.0;
  double r = 0.0;
  std::size_t visible = 0;
  std::size_t in_front = 0;
  CameraParams::Vector grad_s = CameraParams::Vector::Zero();
  CameraParams::Vector grad_r = CameraParams::Vector::Zero();
  // Per image GCP, index into world_gcps of the nearest visible projection.
  std::vector<std::size_t> assignment;
  std::vector<bool> visibility;  // per world GCP

  /// (1 - lambda) S + lambda R, or a large sentinel plus R when degenerate.
  double objective(double lambda) const;
  CameraParams::Vector gradient(double lambda) const;
};

inline constexpr double kDegenerateObjective = 1e12;

Evaluation evaluate(const CameraParams& cam, const RegistrationProblem& problem);

/// Objective value; nullopt when degenerate.
std::optional<double> objective(const CameraParams& cam, const RegistrationProblem& problem,
                                double lambda);

/// Analytic gradient with assignment and visibility held fixed. In the
/// degenerate case this is the centroid-only gradient.
CameraParams::Vector gradient(const CameraParams& cam, const RegistrationProblem& problem,
                              double lambda);

/// Largest side of the axis-aligned bounding box of the world GCPs (>= 1).
double scene_extent(std::span<const WorldPoint> points);

/// Gradient descent with backtracking and jittered restarts.
RegistrationResult solve(const RegistrationProblem& problem, std::uint64_t seed = 0);

}  // namespace monoplot
