#include "dynamics/actuators.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace scaletwin {

namespace {

// Bisection on [lo, hi] where f(lo) < 0 < f(hi); stops when the midpoint
// collapses onto an endpoint.
double bisect(const std::function<double(double)>& f, double lo, double hi) {
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    (f(mid) < 0.0 ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace

double drive_step(double omega, double throttle, const VehicleConfig& cfg, double dt,
                  const std::function<double(double)>& load_torque) {
  if (!(dt > 0.0)) throw std::invalid_argument("drive_step: dt must be positive");
  throttle = std::clamp(throttle, -1.0, 1.0);
  const double inertia = cfg.wheel_inertia();
  const double w_max = cfg.max_wheel_speed;
  const double brake = throttle == 0.0 ? cfg.brake_torque : 0.0;
  const auto residual = [&](double w) {
    const double motor = throttle * cfg.drive_torque_max * (1.0 - std::abs(w) / w_max);
    return inertia * (w - omega) / dt - motor + load_torque(w);
  };
  const double at_rest = residual(0.0);
  if (std::abs(at_rest) <= brake) return 0.0;
  if (at_rest < 0.0) {
    const auto forward = [&](double w) { return residual(w) + brake; };
    if (forward(w_max) <= 0.0) return w_max;
    return bisect(forward, 0.0, w_max);
  }
  const auto backward = [&](double w) { return residual(w) - brake; };
  if (backward(-w_max) >= 0.0) return -w_max;
  return bisect(backward, -w_max, 0.0);
}

double drive_step(double omega, double throttle, const VehicleConfig& cfg, double load_torque, double dt) {
  return drive_step(omega, throttle, cfg, dt, [load_torque](double) { return load_torque; });
}

double steer_step(double current, double target, const VehicleConfig& cfg, double dt) {
  if (!(dt > 0.0)) throw std::invalid_argument("steer_step: dt must be positive");
  const double goal = std::clamp(target, -cfg.steer_limit, cfg.steer_limit);
  const double max_move = cfg.steer_rate * dt;
  const double diff = goal - current;
  if (std::abs(diff) <= max_move) return goal;
  return current + std::copysign(max_move, diff);
}

AckermannAngles ackermann_split(double delta, double wheelbase, double track) {
  if (!(std::abs(delta) < std::numbers::pi / 2.0)) throw std::invalid_argument("ackermann_split: |delta| must be < pi/2");
  if (delta == 0.0) return {};
  const double t = std::tan(delta);
  const double two_l = 2.0 * wheelbase;
  // Valid for either sign of delta: the left wheel is inner for left turns and
  // outer for right turns.
  return {std::atan(two_l * t / (two_l - track * t)), std::atan(two_l * t / (two_l + track * t))};
}

}  // namespace scaletwin
