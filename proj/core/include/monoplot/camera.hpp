#pragma once

#include <array>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "monoplot/dem.hpp"

namespace monoplot {

/// Depth below which a camera-frame point counts as behind the camera.
inline constexpr double kMinDepth = 1e-6;

/// Margin around the image, as a fraction of max(width, height), inside
/// which projections still count as in-frame.
inline constexpr double kFrameMargin = 0.5;

/// The seven camera unknowns.
///
/// Points map to the camera frame as q = R * (P + t), so the optical center
/// sits at world position -t. R = Rz(roll) * Rx(pitch) * Ry(yaw).
struct CameraParams {
  Eigen::Vector3d t = Eigen::Vector3d::Zero();
  double yaw = 0.0;
  double pitch = 0.0;
  double roll = 0.0;
  double fov = 1.0;  // horizontal, radians

  static constexpr int kDim = 7;
  using Vector = Eigen::Matrix<double, kDim, 1>;

  /// (t_x, t_y, t_z, yaw, pitch, roll, fov)
  Vector to_vector() const;
  static CameraParams from_vector(const Vector& v);

  Eigen::Vector3d position() const { return -t; }
  Eigen::Matrix3d rotation() const;

  /// Throws InputError unless 0 < fov < pi and every value is finite.
  void validate() const;

  bool operator==(const CameraParams&) const = default;
};

struct ImageSize {
  int width = 0;
  int height = 0;

  bool operator==(const ImageSize&) const = default;
};

struct Intrinsics {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;
};

struct PixelPoint {
  double u = 0.0;
  double v = 0.0;
  double depth = 0.0;
};

struct ProjectedPoint {
  PixelPoint pixel;
  bool in_front = false;
  bool in_frame = false;

  bool visible() const { return in_front && in_frame; }
};

/// f = (width / 2) / tan(fov / 2), principal point at (width / 2, height / 2).
Intrinsics intrinsics_from_fov(double fov, int width, int height);

/// Rz(roll) * Rx(pitch) * Ry(yaw).
Eigen::Matrix3d rotation_from_euler(double yaw, double pitch, double roll);

/// Inverse of rotation_from_euler for |pitch| < pi/2: (yaw, pitch, roll).
std::array<double, 3> euler_from_rotation(const Eigen::Matrix3d& r);

/// Camera-frame coordinates R * (P + t).
Eigen::Vector3d to_camera_frame(const CameraParams& cam, const Eigen::Vector3d& p);

/// Perspective projection; nullopt when the point lies behind the camera.
std::optional<PixelPoint> project(const CameraParams& cam, const Intrinsics& intr,
                                  const WorldPoint& p);

std::vector<ProjectedPoint> project_set(const CameraParams& cam, const Intrinsics& intr,
                                        ImageSize size, std::span<const WorldPoint> points);

/// Camera at `eye` looking toward `target` with world +z up and the image
/// v axis pointing down.
CameraParams camera_looking_at(const Eigen::Vector3d& eye, const Eigen::Vector3d& target,
                               double fov);

}  // namespace monoplot
