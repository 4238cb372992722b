#pragma once

namespace scaletwin {

inline constexpr double kGravity = 9.81;

/// Vertical state of one corner. Displacements are measured upward from the
/// unloaded geometry (spring at rest length, tire just touching the ground).
struct SuspensionCornerState {
  double Z = 0.0;     // sprung mass displacement, m
  double Zdot = 0.0;  // m/s
  double z = 0.0;     // unsprung (wheel) displacement, m
  double zdot = 0.0;  // m/s
  double F_s = 0.0;   // B(Ż−ż) + K(Z−z); negative while the spring carries load
};

struct CornerParams {
  double sprung_mass = 0.0;    // M
  double unsprung_mass = 0.0;  // m
  double damping = 0.0;        // B
  double stiffness = 0.0;      // K
};

/// Forces from outside the sprung/unsprung pair.
struct CornerEnvironment {
  double gravity = kGravity;
  bool ground_contact = true;
  double ground_stiffness = 2.0e4;  // unilateral tire spring at z = 0
  double ground_damping = 5.0;
  double external_force = 0.0;  // downward push on the sprung mass (load transfer), N

  /// No gravity, no ground: the isolated two-mass oscillator.
  static CornerEnvironment free() { return {0.0, false, 0.0, 0.0, 0.0}; }
};

/// Advances the pair one step with the trapezoidal rule:
///   M·Z̈ = −(B(Ż−ż) + K(Z−z)) − M·g − F_ext
///   m·z̈ =  (B(Ż−ż) + K(Z−z)) − m·g + N,   N = max(0, −k_g·z − c_g·ż)
/// Contact is linearized per step. Throws std::invalid_argument for dt <= 0.
SuspensionCornerState suspension_step(const SuspensionCornerState& corner, const CornerParams& params,
                                      const CornerEnvironment& env, double dt);

/// The fixed point of suspension_step under `env`.
SuspensionCornerState static_equilibrium(const CornerParams& params, const CornerEnvironment& env);

/// Ground reaction on the wheel (tire normal load).
double ground_reaction(const SuspensionCornerState& corner, const CornerEnvironment& env);

/// ½MŻ² + ½mż² + ½K(Z−z)²
double corner_energy(const SuspensionCornerState& corner, const CornerParams& params);

}  // namespace scaletwin
