#include "dynamics/friction.hpp"

#include <Eigen/LU>
#include <cmath>
#include <stdexcept>

namespace scaletwin {

namespace {

// Solves for a cubic with prescribed value/slope at two abscissae.
Cubic hermite_cubic(double s0, double f0, double df0, double s1, double f1, double df1) {
  Eigen::Matrix4d m;
  m << s0 * s0 * s0, s0 * s0, s0, 1.0,
       3.0 * s0 * s0, 2.0 * s0, 1.0, 0.0,
       s1 * s1 * s1, s1 * s1, s1, 1.0,
       3.0 * s1 * s1, 2.0 * s1, 1.0, 0.0;
  const Eigen::Vector4d rhs(f0, df0, f1, df1);
  Eigen::FullPivLU<Eigen::Matrix4d> lu(m);
  lu.setThreshold(1e-12);
  if (!lu.isInvertible()) throw std::invalid_argument("friction spline: degenerate segment (Se too close to Sa)");
  const Eigen::Vector4d x = lu.solve(rhs);
  return {x[0], x[1], x[2], x[3]};
}

}  // namespace

FrictionCurve build_friction_curve(double Se, double Fe, double Sa, double Fa, double k0) {
  if (!(Se > 0.0 && Sa > Se)) throw std::invalid_argument("friction spline: need 0 < Se < Sa");
  if (!(Fa > 0.0 && Fe >= Fa)) throw std::invalid_argument("friction spline: need Fe >= Fa > 0");
  if (!(k0 > 0.0)) throw std::invalid_argument("friction spline: initial slope must be positive");
  if ((Sa - Se) < 1e-9 * Sa) throw std::invalid_argument("friction spline: degenerate segment (Se too close to Sa)");
  FrictionCurve c;
  c.Se = Se;
  c.Fe = Fe;
  c.Sa = Sa;
  c.Fa = Fa;
  c.k0 = k0;
  c.segments[0] = hermite_cubic(0.0, 0.0, k0, Se, Fe, 0.0);
  c.segments[1] = hermite_cubic(Se, Fe, 0.0, Sa, Fa, 0.0);
  return c;
}

FrictionCurve build_friction_curve(const FrictionParams& p) {
  return build_friction_curve(p.extremum_slip, p.extremum_value, p.asymptote_slip, p.asymptote_value,
                              p.initial_slope);
}

double eval_friction(const FrictionCurve& curve, double S) {
  const double mag = std::abs(S);
  double f;
  if (mag == curve.Se) {
    f = curve.Fe;
  } else if (mag >= curve.Sa) {
    f = curve.Fa;
  } else if (mag < curve.Se) {
    f = curve.segments[0](mag);
  } else {
    f = curve.segments[1](mag);
  }
  return S < 0.0 ? -f : f;
}

double eval_friction_slope(const FrictionCurve& curve, double S) {
  const double mag = std::abs(S);
  if (mag >= curve.Sa) return 0.0;
  if (mag < curve.Se) return curve.segments[0].slope(mag);
  return curve.segments[1].slope(mag);
}

}  // namespace scaletwin
