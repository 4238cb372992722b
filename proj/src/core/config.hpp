#pragma once

#include <array>
#include <numbers>
#include <string>
#include <string_view>

#include <nlohmann/json_fwd.hpp>

#include "core/transform.hpp"

namespace scaletwin {

// Corner index order used by every per-corner array.
enum Corner : int { kFrontLeft = 0, kFrontRight = 1, kRearLeft = 2, kRearRight = 3 };
inline constexpr int kCorners = 4;

struct LidarSpec {
  double r_min = 0.15;       // m
  double r_max = 12.0;       // m
  double theta_min = 0.0;    // deg
  double theta_max = 360.0;  // deg
  double theta_res = 1.0;    // deg
  double rate = 7.0;         // Hz

  int beam_count() const;
};

struct CameraIntrinsics {
  double focal_length = 3.04;  // mm
  double sensor_x = 3.68;      // mm
  double sensor_y = 2.76;      // mm
  int width = 1280;            // px
  int height = 720;            // px
  double near_plane = 0.01;    // m
  double far_plane = 1000.0;   // m
};

/// Two-piece friction spline control points. Output is force per unit normal load.
struct FrictionParams {
  double extremum_slip = 0.2;
  double extremum_value = 1.0;
  double asymptote_slip = 0.6;
  double asymptote_value = 0.75;
  double initial_slope = 10.0;
};

/// Planar mounting of a sensor on the chassis.
struct MountPose {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
  double roll = 0.0;   // rad
  double pitch = 0.0;  // rad
  double yaw = 0.0;    // rad

  Transform3 transform() const { return Transform3::from_euler(roll, pitch, yaw, Vec3(x, y, z)); }
};

enum class GravityMode { kProperForce, kCoordinate };

/// Physical and calibration constants for one scaled vehicle. Defaults follow
/// the 1:14 testbed car; see docs/config.md for which values are measured and
/// which are invented placeholders.
struct VehicleConfig {
  double scale = 14.0;  // model is 1:scale
  double wheelbase = 0.141;
  double track_width = 0.153;
  double wheel_radius = 0.0196;  // from 130 RPM ↔ 0.267 m/s
  double wheel_mass = 0.035;
  std::array<double, kCorners> sprung_mass{0.3, 0.3, 0.3, 0.3};
  std::array<double, kCorners> spring_stiffness{300.0, 300.0, 300.0, 300.0};
  std::array<double, kCorners> damping{6.0, 6.0, 6.0, 6.0};
  int encoder_ppr = 16;
  double gear_ratio = 120.0;
  double steer_limit = std::numbers::pi / 6.0;  // 30°
  double steer_rate = 0.805;                    // rad/s
  double max_wheel_speed = 13.6;                // rad/s (130 RPM)
  double drive_torque_max = 0.05;               // N·m stall torque at the wheel
  double brake_torque = 0.02;                   // N·m idle holding torque
  double com_height = 0.04;
  double tire_stiffness = 2.0e4;  // vertical contact spring, N/m
  double tire_damping = 5.0;      // N·s/m
  double suspension_travel = 0.05;
  double body_length = 0.24;
  double body_width = 0.16;
  FrictionParams friction_longitudinal{};
  FrictionParams friction_lateral{};
  LidarSpec lidar{};
  MountPose lidar_mount{0.0, 0.0, 0.1, 0.0, 0.0, 0.0};
  CameraIntrinsics camera{};
  // Camera looks along vehicle +x: camera −z → vehicle +x, camera +y → vehicle +z.
  MountPose camera_mount{0.08, 0.0, 0.06, std::numbers::pi / 2.0, 0.0, -std::numbers::pi / 2.0};
  GravityMode imu_gravity = GravityMode::kProperForce;
  double ips_noise_std = 0.0;

  double total_sprung_mass() const;
  double wheel_inertia() const { return 0.5 * wheel_mass * wheel_radius * wheel_radius; }
  int encoder_cpr() const { return static_cast<int>(encoder_ppr * gear_ratio); }
  double top_speed() const { return wheel_radius * max_wheel_speed; }

  /// Throws ConfigError naming the first offending field.
  void validate() const;
};

/// Parses a JSON document. Unspecified keys keep their defaults, unknown keys
/// are rejected. `encoder_cpr` may be given instead of `encoder_ppr`.
VehicleConfig load_vehicle_config(std::string_view document);
VehicleConfig load_vehicle_config_file(const std::string& path);
nlohmann::json vehicle_config_to_json(const VehicleConfig& cfg);

}  // namespace scaletwin
