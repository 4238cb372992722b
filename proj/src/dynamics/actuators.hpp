#pragma once

#include <functional>

#include "core/config.hpp"

namespace scaletwin {

/// One backward-Euler step of a rear drive wheel,
///   I_w·(ω' − ω)/dt = τ_motor(ω') − load(ω') − τ_brake,
/// with I_w = ½·m_w·r_w² and τ_motor = throttle·τ_max·(1 − |ω'|/ω_max). With zero
/// throttle the idle torque acts as Coulomb friction of magnitude brake_torque:
/// the wheel sticks at zero whenever that torque can hold it, so the brake never
/// reverses the spin. The root is bracketed in [−ω_max, ω_max] and found by
/// bisection, which keeps the stiff wheel/tire coupling stable at any dt.
double drive_step(double omega, double throttle, const VehicleConfig& cfg, double dt,
                  const std::function<double(double)>& load_torque);

/// Same with a constant load torque.
double drive_step(double omega, double throttle, const VehicleConfig& cfg, double load_torque, double dt);

/// Rate-limited servo: moves toward clamp(target, ±steer_limit) by at most
/// steer_rate·dt, landing exactly on the target once within one step.
double steer_step(double current, double target, const VehicleConfig& cfg, double dt);

struct AckermannAngles {
  double left = 0.0;
  double right = 0.0;
};

/// Per-wheel steering angles for a virtual centre angle `delta` (positive turns
/// left, so the left wheel is the inner one):
///   inner = atan(2l·tanδ / (2l − w·tanδ)),  outer = atan(2l·tanδ / (2l + w·tanδ)).
AckermannAngles ackermann_split(double delta, double wheelbase, double track);

}  // namespace scaletwin
