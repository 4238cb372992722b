#pragma once

#include <array>

#include "core/config.hpp"

namespace scaletwin {

struct Cubic {
  double a = 0.0, b = 0.0, c = 0.0, d = 0.0;

  double operator()(double s) const { return ((a * s + b) * s + c) * s + d; }
  double slope(double s) const { return (3.0 * a * s + 2.0 * b) * s + c; }
};

/// Two cubic segments: [0, Se) rises from the origin with slope k0 to the
/// extremum (Se, Fe) with zero slope; [Se, Sa) falls to the asymptote (Sa, Fa),
/// again with zero slope. Beyond Sa the value saturates at Fa.
struct FrictionCurve {
  double S0 = 0.0;
  double F0 = 0.0;
  double Se = 0.0;
  double Fe = 0.0;
  double Sa = 0.0;
  double Fa = 0.0;
  double k0 = 0.0;
  std::array<Cubic, 2> segments{};
};

/// Each segment is a 4×4 Hermite solve. Throws std::invalid_argument on bad
/// control points or a singular system.
FrictionCurve build_friction_curve(double Se, double Fe, double Sa, double Fa, double k0);
FrictionCurve build_friction_curve(const FrictionParams& p);

/// Odd in S: eval(-S) == -eval(S).
double eval_friction(const FrictionCurve& curve, double S);
/// dF/dS, even in S; zero in the saturated region.
double eval_friction_slope(const FrictionCurve& curve, double S);

}  // namespace scaletwin
