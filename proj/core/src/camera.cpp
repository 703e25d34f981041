#include "monoplot/camera.hpp"

#include <cmath>
#include <numbers>

#include <Eigen/Geometry>

#include "monoplot/error.hpp"

namespace monoplot {

CameraParams::Vector CameraParams::to_vector() const {
  Vector v;
  v << t.x(), t.y(), t.z(), yaw, pitch, roll, fov;
  return v;
}

CameraParams CameraParams::from_vector(const Vector& v) {
  CameraParams c;
  c.t = v.head<3>();
  c.yaw = v[3];
  c.pitch = v[4];
  c.roll = v[5];
  c.fov = v[6];
  return c;
}

Eigen::Matrix3d CameraParams::rotation() const { return rotation_from_euler(yaw, pitch, roll); }

void CameraParams::validate() const {
  if (!to_vector().allFinite()) throw InputError("camera parameters must be finite");
  if (!(fov > 0.0 && fov < std::numbers::pi)) throw InputError("fov must lie in (0, pi)");
}

Intrinsics intrinsics_from_fov(double fov, int width, int height) {
  const double f = (width / 2.0) / std::tan(fov / 2.0);
  return {f, f, width / 2.0, height / 2.0};
}

Eigen::Matrix3d rotation_from_euler(double yaw, double pitch, double roll) {
  const double cy = std::cos(yaw), sy = std::sin(yaw);
  const double cp = std::cos(pitch), sp = std::sin(pitch);
  const double cr = std::cos(roll), sr = std::sin(roll);
  Eigen::Matrix3d ry, rx, rz;
  ry << cy, 0, sy, 0, 1, 0, -sy, 0, cy;
  rx << 1, 0, 0, 0, cp, -sp, 0, sp, cp;
  rz << cr, -sr, 0, sr, cr, 0, 0, 0, 1;
  return rz * rx * ry;
}

std::array<double, 3> euler_from_rotation(const Eigen::Matrix3d& r) {
  // Row 2 is (-cp sy, sp, cp cy); column 1 is (-sr cp, cr cp, sp).
  const double pitch = std::asin(std::clamp(r(2, 1), -1.0, 1.0));
  const double yaw = std::atan2(-r(2, 0), r(2, 2));
  const double roll = std::atan2(-r(0, 1), r(1, 1));
  return {yaw, pitch, roll};
}

Eigen::Vector3d to_camera_frame(const CameraParams& cam, const Eigen::Vector3d& p) {
  return cam.rotation() * (p + cam.t);
}

std::optional<PixelPoint> project(const CameraParams& cam, const Intrinsics& intr,
                                  const WorldPoint& p) {
  const Eigen::Vector3d q = to_camera_frame(cam, p.vec());
  if (q.z() <= kMinDepth) return std::nullopt;
  return PixelPoint{intr.fx * q.x() / q.z() + intr.cx, intr.fy * q.y() / q.z() + intr.cy, q.z()};
}

std::vector<ProjectedPoint> project_set(const CameraParams& cam, const Intrinsics& intr,
                                        ImageSize size, std::span<const WorldPoint> points) {
  const Eigen::Matrix3d rot = cam.rotation();
  const double margin = kFrameMargin * std::max(size.width, size.height);
  std::vector<ProjectedPoint> out;
  out.reserve(points.size());
  for (const WorldPoint& p : points) {
    ProjectedPoint pp;
    const Eigen::Vector3d q = rot * (p.vec() + cam.t);
    if (q.z() > kMinDepth) {
      pp.in_front = true;
      pp.pixel = {intr.fx * q.x() / q.z() + intr.cx, intr.fy * q.y() / q.z() + intr.cy, q.z()};
      pp.in_frame = pp.pixel.u >= -margin && pp.pixel.u <= size.width + margin &&
                    pp.pixel.v >= -margin && pp.pixel.v <= size.height + margin;
    } else {
      pp.pixel.depth = q.z();
    }
    out.push_back(pp);
  }
  return out;
}

CameraParams camera_looking_at(const Eigen::Vector3d& eye, const Eigen::Vector3d& target,
                               double fov) {
  const Eigen::Vector3d forward = (target - eye).normalized();
  Eigen::Vector3d right = forward.cross(Eigen::Vector3d::UnitZ());
  if (right.norm() < 1e-9) right = Eigen::Vector3d::UnitX();
  right.normalize();
  const Eigen::Vector3d down = forward.cross(right);
  Eigen::Matrix3d r;
  r.row(0) = right;
  r.row(1) = down;
  r.row(2) = forward;
  const auto [yaw, pitch, roll] = euler_from_rotation(r);
  CameraParams cam;
  cam.t = -eye;
  cam.yaw = yaw;
  cam.pitch = pitch;
  cam.roll = roll;
  cam.fov = fov;
  return cam;
}

}  // namespace monoplot
