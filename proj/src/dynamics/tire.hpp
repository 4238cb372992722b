#pragma once

#include "dynamics/friction.hpp"

namespace scaletwin {

/// Slip denominators never drop below this speed (m/s).
inline constexpr double kSlipSpeedFloor = 0.01;

/// (r·ω − v_x) / v_x with the denominator's magnitude floored at kSlipSpeedFloor.
/// Below the floor the denominator is +kSlipSpeedFloor.
double longitudinal_slip(double radius, double omega, double v_x);

/// tan(α) = v_y / |v_x|, with the same floor.
double lateral_slip(double v_x, double v_y);

struct TireForce {
  double longitudinal = 0.0;  // N, along the wheel heading
  double lateral = 0.0;       // N, opposes lateral slip
};

/// Curve output is force per unit normal load, scaled by the terrain's
/// friction multiplier.
TireForce tire_forces(const FrictionCurve& curve_x, const FrictionCurve& curve_y, double slip_x, double slip_y,
                      double normal_load, double friction_scale = 1.0);

}  // namespace scaletwin
