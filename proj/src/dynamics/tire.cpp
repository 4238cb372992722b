#include "dynamics/tire.hpp"

#include <cmath>

namespace scaletwin {

double longitudinal_slip(double radius, double omega, double v_x) {
  const double denom = std::abs(v_x) > kSlipSpeedFloor ? v_x : kSlipSpeedFloor;
  return (radius * omega - v_x) / denom;
}

double lateral_slip(double v_x, double v_y) { return v_y / std::max(std::abs(v_x), kSlipSpeedFloor); }

TireForce tire_forces(const FrictionCurve& curve_x, const FrictionCurve& curve_y, double slip_x, double slip_y,
                      double normal_load, double friction_scale) {
  if (!(normal_load > 0.0)) return {};
  const double load = normal_load * friction_scale;
  return {eval_friction(curve_x, slip_x) * load, -eval_friction(curve_y, slip_y) * load};
}

}  // namespace scaletwin
