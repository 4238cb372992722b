#pragma once

#include <array>
#include <string>

#include "core/config.hpp"
#include "core/transform.hpp"
#include "core/types.hpp"
#include "dynamics/friction.hpp"
#include "dynamics/suspension.hpp"
#include "scene/geometry.hpp"

namespace scaletwin {

struct Scene;

/// Planar chassis state; (x, y) is the centre of mass of the sprung masses.
struct ChassisState {
  double x = 0.0;
  double y = 0.0;
  double psi = 0.0;
  double v_x = 0.0;  // body-longitudinal, m/s
  double v_y = 0.0;  // body-lateral, m/s
  double psidot = 0.0;
};

struct WheelState {
  double omega = 0.0;        // rad/s
  double steer_angle = 0.0;  // rad, zero for rear wheels
  double revs_accum = 0.0;   // signed revolutions since reset
  double slip_x = 0.0;
  double slip_y = 0.0;
  double force_x = 0.0;  // N, wheel frame
  double force_y = 0.0;
  double normal_load = 0.0;  // N
};

struct VehicleState {
  ChassisState chassis;
  std::array<SuspensionCornerState, kCorners> corners{};
  std::array<WheelState, kCorners> wheels{};
  double steer_angle = 0.0;  // virtual centre steering angle δ
  double throttle = 0.0;     // throttle applied during the last step
  Vec2 accel_body = Vec2::Zero();
  bool collided = false;  // latched until reset
};

/// Quantities derived once from a VehicleConfig.
class VehicleModel {
 public:
  explicit VehicleModel(const VehicleConfig& cfg);

  const VehicleConfig& config() const noexcept { return cfg_; }
  const FrictionCurve& curve_x() const noexcept { return curve_x_; }
  const FrictionCurve& curve_y() const noexcept { return curve_y_; }
  /// Contact points relative to the centre of mass, body frame.
  const std::array<Vec2, kCorners>& wheel_offsets() const noexcept { return wheel_offsets_; }
  /// Centre of mass relative to the rear-axle midpoint: Σ Mᵢ Xᵢ / Σ Mᵢ.
  const Vec2& com_from_rear_axle() const noexcept { return com_; }
  double mass() const noexcept { return mass_; }
  double yaw_inertia() const noexcept { return yaw_inertia_; }
  const CornerParams& corner(int i) const { return corners_[i]; }
  CornerEnvironment corner_environment(double external_force) const;

  OrientedRect footprint(const ChassisState& chassis) const;

 private:
  VehicleConfig cfg_;
  FrictionCurve curve_x_;
  FrictionCurve curve_y_;
  std::array<Vec2, kCorners> wheel_offsets_{};
  Vec2 com_ = Vec2::Zero();
  Vec2 body_center_ = Vec2::Zero();
  double mass_ = 0.0;
  double yaw_inertia_ = 0.0;
  std::array<CornerParams, kCorners> corners_{};
};

/// At rest at `pose` with every corner at static sag.
VehicleState initial_vehicle_state(const VehicleModel& model, const Pose2& pose);

Transform3 vehicle_pose(const VehicleState& state);

/// Advances one vehicle by one tick. Fixed order: steering and Ackermann split,
/// rear drive wheels, tire slips and forces, suspension corners (load transfer
/// from the previous tick's acceleration), planar chassis, encoder
/// accumulators, then the scene collision check (stop on contact).
///
/// Bit-deterministic for identical inputs. Throws SimulationFault naming the
/// first non-finite or out-of-range quantity.
VehicleState vehicle_step(const VehicleState& state, const ActuationCommand& cmd, const Scene& scene,
                          const VehicleModel& model, double dt);
VehicleState vehicle_step(const VehicleState& state, const ActuationCommand& cmd, const Scene& scene,
                          const VehicleConfig& cfg, double dt);

/// Zeroes chassis and wheel speeds and latches the collision flag.
void stop_on_contact(VehicleState& state);

}  // namespace scaletwin
