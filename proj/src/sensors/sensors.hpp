#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "core/config.hpp"
#include "core/transform.hpp"
#include "dynamics/vehicle.hpp"
#include "scene/geometry.hpp"

namespace scaletwin {

struct Scene;

inline constexpr double kNoReturn = std::numeric_limits<double>::infinity();

/// Signed quadrature count: trunc(PPR·GR·revs), so ticks(−r) = −ticks(r).
std::int64_t encoder_ticks(double revs_accum, const VehicleConfig& cfg);
std::array<std::int64_t, 2> read_encoders(const WheelState& rear_left, const WheelState& rear_right,
                                          const VehicleConfig& cfg);

/// Translation of the vehicle pose plus N(0, σ²) per axis drawn from `rng`.
/// σ = 0 reads through exactly and leaves the generator untouched.
Vec3 read_ips(const Transform3& pose, double noise_std, std::mt19937_64& rng);

struct ImuReading {
  Vec3 accel = Vec3::Zero();  // body frame, m/s²
  Vec3 gyro = Vec3::Zero();   // body frame, rad/s
  EulerAngles euler;
  Quaternion quat;
};

/// `prev_velocity` is the world-frame velocity one step earlier; acceleration
/// is its backward difference expressed in the body frame.
ImuReading read_imu(const ChassisState& state, const Vec3& prev_velocity, const Transform3& pose, double dt,
                    GravityMode gravity);
Vec3 world_velocity(const ChassisState& state);

/// One planar scan. Beam i points theta_min + i·theta_res degrees
/// counter-clockwise from the sensor's +x axis. The nearest hit is reported
/// when it lies in [r_min, r_max], otherwise kNoReturn.
std::vector<double> scan_lidar(const Transform3& lidar_in_world, const Scene& scene, const LidarSpec& spec,
                               std::span<const Polygon> extra_obstacles = {});

/// World-to-camera transform: the homogeneous inverse of the camera pose.
Mat4 camera_view_matrix(const Transform3& camera_in_world);
/// OpenGL-style symmetric frustum; the camera looks along its −z axis.
Mat4 camera_projection_matrix(const CameraIntrinsics& intr);
/// 2·atan(s_x / 2f), radians.
double horizontal_fov(const CameraIntrinsics& intr);

struct Projection {
  Vec2 ndc = Vec2::Zero();
  Vec2 pixel = Vec2::Zero();  // origin top-left, +y down
  bool depth_ok = false;      // in front of the camera between near and far
};

/// Throws StateError when the point lies on the camera centre plane (w = 0).
Projection project_point(const Mat4& view, const Mat4& proj, const Vec3& world, int width, int height);
/// Inverse of project_point for a point `depth` metres in front of the camera.
Vec3 unproject(const Mat4& view, const Mat4& proj, const Vec2& ndc, double depth);

struct LandmarkObservation {
  std::string id;
  Vec2 pixel = Vec2::Zero();
  Vec2 ndc = Vec2::Zero();
};

/// Ideal landmark camera: scene landmarks that land inside the image.
std::vector<LandmarkObservation> observe_landmarks(const Transform3& camera_in_world, const CameraIntrinsics& intr,
                                                   const Scene& scene);

}  // namespace scaletwin
