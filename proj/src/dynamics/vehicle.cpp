#include "dynamics/vehicle.hpp"

#include <Eigen/LU>
#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "core/errors.hpp"
#include "dynamics/actuators.hpp"
#include "dynamics/tire.hpp"
#include "scene/scene.hpp"

namespace scaletwin {

namespace {

constexpr double kSuspensionSubstep = 1.0e-3;
constexpr double kJacobianStep = 1.0e-6;
constexpr double kSpeedGuard = 1.5;
constexpr int kMaxNewton = 12;
constexpr int kMaxHalvings = 8;
constexpr double kNewtonTolerance = 1.0e-12;

bool is_front(int i) { return i == kFrontLeft || i == kFrontRight; }

// Contact-point velocity in the wheel frame (longitudinal, lateral).
Vec2 wheel_velocity(const Eigen::Vector3d& c, const Vec2& offset, double steer) {
  const double vx = c(0) - c(2) * offset.y();
  const double vy = c(1) + c(2) * offset.x();
  const double cs = std::cos(steer), sn = std::sin(steer);
  return {cs * vx + sn * vy, -sn * vx + cs * vy};
}

// Driven-wheel slip whose sign follows the traction direction in reverse too.
double traction_slip(double radius, double omega, double v_long) {
  const double s = longitudinal_slip(radius, omega, v_long);
  return v_long < -kSlipSpeedFloor ? -s : s;
}

struct TickInputs {
  const VehicleModel* model = nullptr;
  double throttle = 0.0;
  double dt = 0.0;
  std::array<double, kCorners> omega_prev{};
  std::array<double, kCorners> steer{};
  std::array<double, kCorners> load{};  // normal load × terrain scale
};

struct WheelEval {
  double omega = 0.0;
  double slip_x = 0.0;
  double slip_y = 0.0;
  TireForce force;
};

// Rear wheels are solved backward-Euler against the tire reaction at the
// candidate chassis velocity; front wheels roll freely.
WheelEval eval_wheel(const TickInputs& in, const Eigen::Vector3d& c, int i) {
  const VehicleModel& model = *in.model;
  const VehicleConfig& cfg = model.config();
  const double radius = cfg.wheel_radius;
  const Vec2 v = wheel_velocity(c, model.wheel_offsets()[i], in.steer[i]);
  WheelEval w;
  if (is_front(i)) {
    w.omega = v.x() / radius;
  } else {
    const double load = in.load[i];
    const auto reaction = [&](double om) {
      return eval_friction(model.curve_x(), traction_slip(radius, om, v.x())) * load * radius;
    };
    w.omega = drive_step(in.omega_prev[i], in.throttle, cfg, in.dt, reaction);
    w.slip_x = traction_slip(radius, w.omega, v.x());
  }
  w.slip_y = lateral_slip(v.x(), v.y());
  w.force = tire_forces(model.curve_x(), model.curve_y(), w.slip_x, w.slip_y, in.load[i]);
  return w;
}

// Body-frame [v̇x, v̇y, ψ̈].
Eigen::Vector3d chassis_rates(const TickInputs& in, const Eigen::Vector3d& c) {
  const VehicleModel& model = *in.model;
  double fx = 0.0, fy = 0.0, mz = 0.0;
  for (int i = 0; i < kCorners; ++i) {
    const TireForce f = eval_wheel(in, c, i).force;
    const double cs = std::cos(in.steer[i]), sn = std::sin(in.steer[i]);
    const double bx = cs * f.longitudinal - sn * f.lateral;
    const double by = sn * f.longitudinal + cs * f.lateral;
    const Vec2& r = model.wheel_offsets()[i];
    fx += bx;
    fy += by;
    mz += r.x() * by - r.y() * bx;
  }
  const double m = model.mass();
  return {fx / m + c(2) * c(1), fy / m - c(2) * c(0), mz / model.yaw_inertia()};
}

Eigen::Matrix3d rates_jacobian(const TickInputs& in, const Eigen::Vector3d& c) {
  Eigen::Matrix3d J;
  for (int k = 0; k < 3; ++k) {
    Eigen::Vector3d hi = c, lo = c;
    hi(k) += kJacobianStep;
    lo(k) -= kJacobianStep;
    J.col(k) = (chassis_rates(in, hi) - chassis_rates(in, lo)) / (2.0 * kJacobianStep);
  }
  return J;
}

// Backward Euler c' = c0 + dt·f(c') by damped Newton. The first iterate is the
// linearly implicit step; later ones resolve stick/slip at the drive wheels.
Eigen::Vector3d implicit_chassis(const TickInputs& in, const Eigen::Vector3d& c0) {
  const double dt = in.dt;
  const auto residual = [&](const Eigen::Vector3d& c) -> Eigen::Vector3d { return c - c0 - dt * chassis_rates(in, c); };
  Eigen::Vector3d c = c0;
  Eigen::Vector3d r = residual(c);
  for (int iter = 0; iter < kMaxNewton; ++iter) {
    const Eigen::Matrix3d A = Eigen::Matrix3d::Identity() - dt * rates_jacobian(in, c);
    const auto lu = A.fullPivLu();
    if (!lu.isInvertible()) {
      if (iter == 0) c = c0 - r;
      break;
    }
    const Eigen::Vector3d step = lu.solve(-r);
    double lambda = 1.0;
    Eigen::Vector3d trial = c + step;
    Eigen::Vector3d r_trial = residual(trial);
    for (int k = 0; k < kMaxHalvings && !(r_trial.norm() < r.norm()); ++k) {
      lambda *= 0.5;
      trial = c + lambda * step;
      r_trial = residual(trial);
    }
    if (!(r_trial.norm() < r.norm())) {
      if (iter == 0) c += step;
      break;
    }
    c = trial;
    r = r_trial;
    if (lambda * step.lpNorm<Eigen::Infinity>() < kNewtonTolerance) break;
  }
  return c;
}

void require_finite(double v, const std::string& name) {
  if (!std::isfinite(v)) throw SimulationFault(name, "non-finite value");
}

void check_state(const VehicleState& s, const VehicleModel& model) {
  static const char* kCornerNames[kCorners] = {"fl", "fr", "rl", "rr"};
  const ChassisState& c = s.chassis;
  require_finite(c.x, "chassis.x");
  require_finite(c.y, "chassis.y");
  require_finite(c.psi, "chassis.psi");
  require_finite(c.v_x, "chassis.v_x");
  require_finite(c.v_y, "chassis.v_y");
  require_finite(c.psidot, "chassis.psidot");
  for (int i = 0; i < kCorners; ++i) {
    const std::string p = std::string("corner.") + kCornerNames[i] + ".";
    const SuspensionCornerState& k = s.corners[i];
    require_finite(k.Z, p + "Z");
    require_finite(k.Zdot, p + "Zdot");
    require_finite(k.z, p + "z");
    require_finite(k.zdot, p + "zdot");
    const double travel = model.config().suspension_travel;
    if (std::abs(k.Z) > travel) throw SimulationFault(p + "Z", "exceeds suspension travel");
    if (std::abs(k.z) > travel) throw SimulationFault(p + "z", "exceeds suspension travel");
    const std::string w = std::string("wheel.") + kCornerNames[i] + ".";
    require_finite(s.wheels[i].omega, w + "omega");
    require_finite(s.wheels[i].force_x, w + "force_x");
    require_finite(s.wheels[i].force_y, w + "force_y");
  }
  const double limit = kSpeedGuard * model.config().top_speed();
  if (std::hypot(c.v_x, c.v_y) > limit) throw SimulationFault("chassis.speed", "exceeds 1.5x top speed");
}

const VehicleConfig& validated(const VehicleConfig& cfg) {
  cfg.validate();
  return cfg;
}

}  // namespace

VehicleModel::VehicleModel(const VehicleConfig& cfg)
    : cfg_(validated(cfg)),
      curve_x_(build_friction_curve(cfg.friction_longitudinal)),
      curve_y_(build_friction_curve(cfg.friction_lateral)) {
  const double l = cfg_.wheelbase, hw = 0.5 * cfg_.track_width;
  const std::array<Vec2, kCorners> corner_pos{Vec2(l, hw), Vec2(l, -hw), Vec2(0.0, hw), Vec2(0.0, -hw)};
  const double sprung = cfg_.total_sprung_mass();
  Vec2 weighted = Vec2::Zero();
  for (int i = 0; i < kCorners; ++i) weighted += cfg_.sprung_mass[i] * corner_pos[i];
  com_ = weighted / sprung;
  body_center_ = Vec2(0.5 * l, 0.0) - com_;
  mass_ = sprung + kCorners * cfg_.wheel_mass;
  for (int i = 0; i < kCorners; ++i) {
    wheel_offsets_[i] = corner_pos[i] - com_;
    yaw_inertia_ += (cfg_.sprung_mass[i] + cfg_.wheel_mass) * wheel_offsets_[i].squaredNorm();
    corners_[i] = {cfg_.sprung_mass[i], cfg_.wheel_mass, cfg_.damping[i], cfg_.spring_stiffness[i]};
  }
}

CornerEnvironment VehicleModel::corner_environment(double external_force) const {
  CornerEnvironment env;
  env.ground_stiffness = cfg_.tire_stiffness;
  env.ground_damping = cfg_.tire_damping;
  env.external_force = external_force;
  return env;
}

OrientedRect VehicleModel::footprint(const ChassisState& c) const {
  const double cs = std::cos(c.psi), sn = std::sin(c.psi);
  OrientedRect r;
  r.center = Vec2(c.x + cs * body_center_.x() - sn * body_center_.y(), c.y + sn * body_center_.x() + cs * body_center_.y());
  r.yaw = c.psi;
  r.half_length = 0.5 * cfg_.body_length;
  r.half_width = 0.5 * cfg_.body_width;
  return r;
}

VehicleState initial_vehicle_state(const VehicleModel& model, const Pose2& pose) {
  VehicleState s;
  s.chassis.x = pose.x;
  s.chassis.y = pose.y;
  s.chassis.psi = pose.yaw;
  const CornerEnvironment env = model.corner_environment(0.0);
  for (int i = 0; i < kCorners; ++i) {
    s.corners[i] = static_equilibrium(model.corner(i), env);
    s.wheels[i].normal_load = ground_reaction(s.corners[i], env);
  }
  return s;
}

Transform3 vehicle_pose(const VehicleState& state) {
  return Transform3::from_yaw(state.chassis.psi, Vec3(state.chassis.x, state.chassis.y, 0.0));
}

void stop_on_contact(VehicleState& s) {
  s.chassis.v_x = s.chassis.v_y = s.chassis.psidot = 0.0;
  for (WheelState& w : s.wheels) w.omega = 0.0;
  s.accel_body = Vec2::Zero();
  s.collided = true;
}

VehicleState vehicle_step(const VehicleState& state, const ActuationCommand& cmd, const Scene& scene,
                          const VehicleModel& model, double dt) {
  if (!(dt > 0.0)) throw StateError("vehicle_step: dt must be positive");
  const VehicleConfig& cfg = model.config();
  const double throttle = std::clamp(cmd.throttle, -1.0, 1.0);
  const double steering = std::clamp(cmd.steering, -1.0, 1.0);
  if (!std::isfinite(throttle)) throw SimulationFault("command.throttle", "non-finite value");
  if (!std::isfinite(steering)) throw SimulationFault("command.steering", "non-finite value");

  VehicleState next = state;
  next.throttle = throttle;
  const ChassisState& c = state.chassis;
  const Eigen::Vector3d c0(c.v_x, c.v_y, c.psidot);

  // (1) steering
  next.steer_angle = steer_step(state.steer_angle, steering * cfg.steer_limit, cfg, dt);
  const AckermannAngles split = ackermann_split(next.steer_angle, cfg.wheelbase, cfg.track_width);
  TickInputs in;
  in.model = &model;
  in.throttle = throttle;
  in.dt = dt;
  in.steer = {split.left, split.right, 0.0, 0.0};

  const double cs = std::cos(c.psi), sn = std::sin(c.psi);
  for (int i = 0; i < kCorners; ++i) {
    const Vec2& r = model.wheel_offsets()[i];
    const Vec2 world(c.x + cs * r.x() - sn * r.y(), c.y + sn * r.x() + cs * r.y());
    in.load[i] = state.wheels[i].normal_load * terrain_or_default(scene, world);
    in.omega_prev[i] = state.wheels[i].omega;
  }

  // (2), (3), (5): the drive wheels are solved inside the implicit chassis
  // update so the tire force they transmit stays consistent with it.
  const Eigen::Vector3d c1 = implicit_chassis(in, c0);
  for (int i = 0; i < kCorners; ++i) {
    const WheelEval w = eval_wheel(in, c1, i);
    WheelState& ws = next.wheels[i];
    ws.omega = w.omega;
    ws.steer_angle = in.steer[i];
    ws.slip_x = w.slip_x;
    ws.slip_y = w.slip_y;
    ws.force_x = w.force.longitudinal;
    ws.force_y = w.force.lateral;
  }

  // (4) suspension with load transfer from the previous tick
  const double m = model.mass();
  const double dF_long = m * state.accel_body.x() * cfg.com_height / cfg.wheelbase;
  const double dF_lat = m * state.accel_body.y() * cfg.com_height / cfg.track_width;
  const std::array<double, kCorners> transfer{-0.5 * dF_long - 0.5 * dF_lat, -0.5 * dF_long + 0.5 * dF_lat,
                                              0.5 * dF_long - 0.5 * dF_lat, 0.5 * dF_long + 0.5 * dF_lat};
  const int substeps = std::max(1, static_cast<int>(std::ceil(dt / kSuspensionSubstep - 1e-9)));
  const double h = dt / substeps;
  for (int i = 0; i < kCorners; ++i) {
    const CornerEnvironment env = model.corner_environment(transfer[i]);
    for (int k = 0; k < substeps; ++k) next.corners[i] = suspension_step(next.corners[i], model.corner(i), env, h);
    next.wheels[i].normal_load = ground_reaction(next.corners[i], env);
  }

  // chassis pose, midpoint heading
  ChassisState& n = next.chassis;
  n.v_x = c1(0);
  n.v_y = c1(1);
  n.psidot = c1(2);
  const double psi_mid = c.psi + 0.5 * dt * n.psidot;
  n.psi = c.psi + dt * n.psidot;
  n.x = c.x + dt * (n.v_x * std::cos(psi_mid) - n.v_y * std::sin(psi_mid));
  n.y = c.y + dt * (n.v_x * std::sin(psi_mid) + n.v_y * std::cos(psi_mid));
  // Inertial acceleration in the body frame.
  next.accel_body = Vec2((n.v_x - c.v_x) / dt - n.psidot * n.v_y, (n.v_y - c.v_y) / dt + n.psidot * n.v_x);

  // (6) encoders
  for (int i = 0; i < kCorners; ++i) next.wheels[i].revs_accum += next.wheels[i].omega * dt / (2.0 * std::numbers::pi);

  check_state(next, model);

  // (7) collision
  if (footprint_collision(scene, model.footprint(n))) {
    n.x = c.x;
    n.y = c.y;
    n.psi = c.psi;
    stop_on_contact(next);
  }
  return next;
}

VehicleState vehicle_step(const VehicleState& state, const ActuationCommand& cmd, const Scene& scene,
                          const VehicleConfig& cfg, double dt) {
  return vehicle_step(state, cmd, scene, VehicleModel(cfg), dt);
}

}  // namespace scaletwin
