#include "dynamics/suspension.hpp"

#include <Eigen/Core>
#include <Eigen/LU>
#include <stdexcept>

namespace scaletwin {

namespace {

using Vec4 = Eigen::Vector4d;
using Mat4x4 = Eigen::Matrix4d;

struct LinearSystem {
  Mat4x4 A = Mat4x4::Zero();
  Vec4 b = Vec4::Zero();
};

// State vector [Z, Ż, z, ż].
LinearSystem assemble(const CornerParams& p, const CornerEnvironment& env, bool contact) {
  const double M = p.sprung_mass, m = p.unsprung_mass, K = p.stiffness, B = p.damping;
  LinearSystem s;
  s.A(0, 1) = 1.0;
  s.A(1, 0) = -K / M;
  s.A(1, 1) = -B / M;
  s.A(1, 2) = K / M;
  s.A(1, 3) = B / M;
  s.A(2, 3) = 1.0;
  s.A(3, 0) = K / m;
  s.A(3, 1) = B / m;
  s.A(3, 2) = -K / m;
  s.A(3, 3) = -B / m;
  if (contact) {
    s.A(3, 2) -= env.ground_stiffness / m;
    s.A(3, 3) -= env.ground_damping / m;
  }
  s.b(1) = -env.gravity - env.external_force / M;
  s.b(3) = -env.gravity;
  return s;
}

Vec4 trapezoid(const LinearSystem& s, const Vec4& x, double dt) {
  const Mat4x4 I = Mat4x4::Identity();
  const Mat4x4 lhs = I - 0.5 * dt * s.A;
  const Vec4 rhs = (I + 0.5 * dt * s.A) * x + dt * s.b;
  return lhs.partialPivLu().solve(rhs);
}

}  // namespace

SuspensionCornerState suspension_step(const SuspensionCornerState& corner, const CornerParams& p,
                                      const CornerEnvironment& env, double dt) {
  if (!(dt > 0.0)) throw std::invalid_argument("suspension_step: dt must be positive");
  if (!(p.sprung_mass > 0.0 && p.unsprung_mass > 0.0)) throw std::invalid_argument("suspension_step: masses must be positive");
  const Vec4 x(corner.Z, corner.Zdot, corner.z, corner.zdot);
  Vec4 next;
  if (!env.ground_contact) {
    next = trapezoid(assemble(p, env, false), x, dt);
  } else if (corner.z < 0.0) {
    next = trapezoid(assemble(p, env, true), x, dt);
  } else {
    // Airborne at the start of the step: only engage the tire spring if the
    // free flight would put the wheel through the ground.
    next = trapezoid(assemble(p, env, false), x, dt);
    if (next(2) < 0.0) next = trapezoid(assemble(p, env, true), x, dt);
  }
  SuspensionCornerState out;
  out.Z = next(0);
  out.Zdot = next(1);
  out.z = next(2);
  out.zdot = next(3);
  out.F_s = p.damping * (out.Zdot - out.zdot) + p.stiffness * (out.Z - out.z);
  return out;
}

SuspensionCornerState static_equilibrium(const CornerParams& p, const CornerEnvironment& env) {
  SuspensionCornerState s;
  const double sprung_load = p.sprung_mass * env.gravity + env.external_force;
  if (env.ground_contact) {
    const double normal = sprung_load + p.unsprung_mass * env.gravity;
    s.z = -normal / env.ground_stiffness;
  }
  s.Z = s.z - sprung_load / p.stiffness;
  s.F_s = p.stiffness * (s.Z - s.z);
  return s;
}

double ground_reaction(const SuspensionCornerState& c, const CornerEnvironment& env) {
  if (!env.ground_contact) return 0.0;
  return std::max(0.0, -env.ground_stiffness * c.z - env.ground_damping * c.zdot);
}

double corner_energy(const SuspensionCornerState& c, const CornerParams& p) {
  const double stretch = c.Z - c.z;
  return 0.5 * p.sprung_mass * c.Zdot * c.Zdot + 0.5 * p.unsprung_mass * c.zdot * c.zdot +
         0.5 * p.stiffness * stretch * stretch;
}

}  // namespace scaletwin
