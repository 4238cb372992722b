#include "sensors/sensors.hpp"

#include <cmath>
#include <numbers>

#include "core/errors.hpp"
#include "scene/scene.hpp"

namespace scaletwin {

std::int64_t encoder_ticks(double revs_accum, const VehicleConfig& cfg) {
  const double counts = static_cast<double>(cfg.encoder_ppr) * cfg.gear_ratio * revs_accum;
  return static_cast<std::int64_t>(std::trunc(counts));
}

std::array<std::int64_t, 2> read_encoders(const WheelState& rear_left, const WheelState& rear_right,
                                          const VehicleConfig& cfg) {
  return {encoder_ticks(rear_left.revs_accum, cfg), encoder_ticks(rear_right.revs_accum, cfg)};
}

Vec3 read_ips(const Transform3& pose, double noise_std, std::mt19937_64& rng) {
  Vec3 p = pose.translation();
  if (noise_std > 0.0) {
    std::normal_distribution<double> n(0.0, noise_std);
    for (int i = 0; i < 3; ++i) p(i) += n(rng);
  }
  return p;
}

Vec3 world_velocity(const ChassisState& s) {
  const double c = std::cos(s.psi), sn = std::sin(s.psi);
  return {c * s.v_x - sn * s.v_y, sn * s.v_x + c * s.v_y, 0.0};
}

ImuReading read_imu(const ChassisState& state, const Vec3& prev_velocity, const Transform3& pose, double dt,
                    GravityMode gravity) {
  if (!(dt > 0.0)) throw StateError("read_imu: dt must be positive");
  ImuReading r;
  const Vec3 accel_world = (world_velocity(state) - prev_velocity) / dt;
  r.accel = pose.rotation().transpose() * accel_world;
  if (gravity == GravityMode::kProperForce) r.accel.z() += 9.81;
  r.gyro = Vec3(0.0, 0.0, state.psidot);
  r.euler = rotation_to_euler(pose.rotation());
  r.quat = euler_to_quaternion(r.euler.roll, r.euler.pitch, r.euler.yaw);
  return r;
}

std::vector<double> scan_lidar(const Transform3& lidar_in_world, const Scene& scene, const LidarSpec& spec,
                               std::span<const Polygon> extra_obstacles) {
  constexpr double kDeg = std::numbers::pi / 180.0;
  const int beams = spec.beam_count();
  const Vec2 origin = lidar_in_world.translation().head<2>();
  const double heading = lidar_in_world.yaw();
  std::vector<double> ranges(static_cast<std::size_t>(beams), kNoReturn);
  for (int i = 0; i < beams; ++i) {
    const double a = heading + (spec.theta_min + i * spec.theta_res) * kDeg;
    const auto hit = raycast(scene, origin, Vec2(std::cos(a), std::sin(a)), spec.r_max, extra_obstacles);
    if (hit && hit->distance >= spec.r_min) ranges[static_cast<std::size_t>(i)] = hit->distance;
  }
  return ranges;
}

Mat4 camera_view_matrix(const Transform3& camera_in_world) { return invert(camera_in_world).matrix(); }

Mat4 camera_projection_matrix(const CameraIntrinsics& intr) {
  const double N = intr.near_plane, F = intr.far_plane;
  // f = 2N/(R−L) with f expressed in sensor-width units gives R−L = N·s_x/f.
  const double R = 0.5 * N * intr.sensor_x / intr.focal_length, L = -R;
  const double T = 0.5 * N * intr.sensor_y / intr.focal_length, B = -T;
  Mat4 P = Mat4::Zero();
  P(0, 0) = 2 * N / (R - L);
  P(0, 2) = (R + L) / (R - L);
  P(1, 1) = 2 * N / (T - B);
  P(1, 2) = (T + B) / (T - B);
  P(2, 2) = -(F + N) / (F - N);
  P(2, 3) = -2 * F * N / (F - N);
  P(3, 2) = -1.0;
  return P;
}

double horizontal_fov(const CameraIntrinsics& intr) { return 2.0 * std::atan(intr.sensor_x / (2.0 * intr.focal_length)); }

Projection project_point(const Mat4& view, const Mat4& proj, const Vec3& world, int width, int height) {
  const Eigen::Vector4d cam = view * world.homogeneous();
  const Eigen::Vector4d clip = proj * cam;
  if (clip.w() == 0.0) throw StateError("project_point: point lies on the camera centre plane");
  Projection p;
  p.ndc = Vec2(clip.x() / clip.w(), clip.y() / clip.w());
  p.pixel = Vec2((p.ndc.x() + 1.0) * 0.5 * width, (1.0 - p.ndc.y()) * 0.5 * height);
  // Recover near/far from the projection so no intrinsics are needed here.
  const double a = proj(2, 2), b = proj(2, 3);
  const double near = b / (a - 1.0), far = b / (a + 1.0);
  const double depth = -cam.z();
  p.depth_ok = depth >= near && depth <= far;
  return p;
}

Vec3 unproject(const Mat4& view, const Mat4& proj, const Vec2& ndc, double depth) {
  const double z = -depth;
  const double x = (ndc.x() * depth - proj(0, 2) * z) / proj(0, 0);
  const double y = (ndc.y() * depth - proj(1, 2) * z) / proj(1, 1);
  const Eigen::Vector4d world = view.inverse() * Eigen::Vector4d(x, y, z, 1.0);
  return world.head<3>();
}

std::vector<LandmarkObservation> observe_landmarks(const Transform3& camera_in_world, const CameraIntrinsics& intr,
                                                   const Scene& scene) {
  const Mat4 V = camera_view_matrix(camera_in_world);
  const Mat4 P = camera_projection_matrix(intr);
  std::vector<LandmarkObservation> out;
  for (const Landmark& lm : scene.landmarks) {
    const Eigen::Vector4d cam = V * lm.position.homogeneous();
    if (cam.z() >= 0.0) continue;
    const Projection p = project_point(V, P, lm.position, intr.width, intr.height);
    if (!p.depth_ok || std::abs(p.ndc.x()) > 1.0 || std::abs(p.ndc.y()) > 1.0) continue;
    out.push_back({lm.id, p.pixel, p.ndc});
  }
  return out;
}

}  // namespace scaletwin
