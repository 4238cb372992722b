#include <cmath>
#include <cstring>
#include <numbers>
#include <random>
#include <unsupported/Eigen/MatrixFunctions>

#include "core/errors.hpp"
#include "doctest.h"
#include "dynamics/actuators.hpp"
#include "dynamics/friction.hpp"
#include "dynamics/suspension.hpp"
#include "dynamics/tire.hpp"
#include "dynamics/vehicle.hpp"
#include "scene/scene.hpp"

using namespace scaletwin;
using std::numbers::pi;

namespace {

// Cubic Hermite interpolation on [x0, x1]; an independent construction of
// each spline segment.
double hermite(double x, double x0, double x1, double p0, double m0, double p1, double m1) {
  const double h = x1 - x0, t = (x - x0) / h;
  const double t2 = t * t, t3 = t2 * t;
  return (2 * t3 - 3 * t2 + 1) * p0 + (t3 - 2 * t2 + t) * h * m0 + (-2 * t3 + 3 * t2) * p1 + (t3 - t2) * h * m1;
}

double friction_oracle(double S, double Se, double Fe, double Sa, double Fa, double k0) {
  const double a = std::abs(S), sign = S < 0 ? -1.0 : 1.0;
  if (a >= Sa) return sign * Fa;
  if (a < Se) return sign * hermite(a, 0, Se, 0, k0, Fe, 0);
  return sign * hermite(a, Se, Sa, Fe, 0, Fa, 0);
}

Scene open_ground(double half = 50.0) {
  const std::string h = std::to_string(half);
  return load_scene(R"({"format": "scaletwin-scene", "version": 1, "bounds": {"min": [-)" + h + ", -" + h +
                    R"(], "max": [)" + h + ", " + h + "]}}");
}

bool bit_equal(double a, double b) { return std::memcmp(&a, &b, sizeof a) == 0; }

}  // namespace

TEST_CASE("friction spline interpolation conditions") {
  const FrictionCurve c = build_friction_curve(0.2, 1.0, 0.6, 0.75, 10.0);
  CHECK(eval_friction(c, 0.0) == 0.0);
  CHECK(std::abs(eval_friction(c, 0.2) - 1.0) < 1e-12);
  CHECK(std::abs(eval_friction(c, 0.6) - 0.75) < 1e-12);
  CHECK(std::abs(eval_friction_slope(c, 0.0) - 10.0) < 1e-9);
  CHECK(std::abs(c.segments[0].slope(0.2)) < 1e-9);
  CHECK(std::abs(c.segments[1].slope(0.2)) < 1e-9);
  CHECK(std::abs(c.segments[1].slope(0.6)) < 1e-9);
  CHECK(std::abs(c.segments[0](0.2) - c.segments[1](0.2)) < 1e-9);
  CHECK(eval_friction(c, 1.2) == 0.75);
  CHECK(eval_friction(c, -0.2) == -eval_friction(c, 0.2));
}

TEST_CASE("friction spline matches the Hermite oracle") {
  const FrictionCurve c = build_friction_curve(0.2, 1.0, 0.6, 0.75, 10.0);
  CHECK(std::abs(eval_friction(c, 0.1) - 0.75) < 1e-12);  // hand value: 0.25 + 0.5
  for (double S = -1.0; S <= 1.0; S += 0.0137) {
    CHECK(std::abs(eval_friction(c, S) - friction_oracle(S, 0.2, 1.0, 0.6, 0.75, 10.0)) < 1e-12);
  }
  const FrictionCurve d = build_friction_curve(0.15, 0.9, 0.9, 0.4, 20.0);
  for (double S = 0.0; S <= 1.0; S += 0.01) {
    CHECK(std::abs(eval_friction(d, S) - friction_oracle(S, 0.15, 0.9, 0.9, 0.4, 20.0)) < 1e-12);
  }
}

TEST_CASE("default segment 0 is monotone") {
  const FrictionCurve c = build_friction_curve(FrictionParams{});
  double prev = 0.0;
  for (int i = 1; i <= 1000; ++i) {
    const double v = eval_friction(c, 0.2 * i / 1000.0);
    CHECK(v >= prev);
    prev = v;
  }
}

TEST_CASE("friction spline rejects bad control points") {
  CHECK_THROWS(build_friction_curve(0.2, 1.0, 0.2, 0.75, 10.0));
  CHECK_THROWS(build_friction_curve(0.2, 0.5, 0.6, 0.75, 10.0));
  CHECK_THROWS(build_friction_curve(0.2, 1.0, 0.6, 0.75, 0.0));
}

TEST_CASE("slip formulas") {
  CHECK(longitudinal_slip(0.0196, 0.2 / 0.0196, 0.2) == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(longitudinal_slip(0.0196, 20.4, 0.2) == doctest::Approx((0.0196 * 20.4 - 0.2) / 0.2));
  CHECK(longitudinal_slip(0.0196, 20.4, 0.2) == doctest::Approx(1.0).epsilon(0.001));
  CHECK(longitudinal_slip(0.0196, 5.0, 0.0) == doctest::Approx(0.0196 * 5.0 / 0.01));
  CHECK(lateral_slip(0.2, 0.0) == 0.0);
  CHECK(lateral_slip(0.2, 0.2) == doctest::Approx(1.0));
  CHECK(lateral_slip(-0.2, 0.1) == doctest::Approx(0.5));
  CHECK(std::isfinite(lateral_slip(0.0, 0.1)));
}

TEST_CASE("tire forces scale with normal load") {
  const FrictionCurve c = build_friction_curve(FrictionParams{});
  auto f = tire_forces(c, c, 0.0, 0.0, 5.0);
  CHECK(f.longitudinal == 0.0);
  CHECK(f.lateral == 0.0);
  f = tire_forces(c, c, 0.3, 0.3, 0.0);
  CHECK(f.longitudinal == 0.0);
  CHECK(f.lateral == 0.0);
  f = tire_forces(c, c, 0.2, 0.0, 5.0);
  CHECK(f.longitudinal == doctest::Approx(1.0 * 5.0));
  f = tire_forces(c, c, 0.0, 0.1, 4.0);
  CHECK(f.lateral == doctest::Approx(-0.75 * 4.0));
  f = tire_forces(c, c, 0.2, 0.0, 5.0, 0.3);
  CHECK(f.longitudinal == doctest::Approx(1.5));
}

TEST_CASE("suspension equilibrium is a fixed point") {
  const CornerParams p{0.3, 0.035, 6.0, 300.0};
  const CornerEnvironment env;
  const SuspensionCornerState eq = static_equilibrium(p, env);
  SuspensionCornerState s = eq;
  for (int i = 0; i < 1000; ++i) s = suspension_step(s, p, env, 0.001);
  CHECK(std::abs(s.Z - eq.Z) < 1e-9);
  CHECK(std::abs(s.z - eq.z) < 1e-9);
  CHECK(std::abs(s.Zdot) < 1e-9);
  // Ground carries the full corner weight.
  CHECK(ground_reaction(eq, env) == doctest::Approx((0.3 + 0.035) * kGravity));
  CHECK_THROWS_AS(suspension_step(s, p, env, 0.0), std::invalid_argument);
}

TEST_CASE("undamped sprung mass oscillates at sqrt(K/M)/2pi") {
  // A very heavy unsprung mass pins the wheel, leaving the textbook oscillator.
  const CornerParams p{0.3, 1e12, 0.0, 300.0};
  const double f = std::sqrt(300.0 / 0.3) / (2 * pi);
  const double dt = 0.001;
  SuspensionCornerState s;
  s.Z = 0.01;
  std::vector<double> up_crossings;
  double prev = s.Z;
  for (int i = 1; up_crossings.size() < 11; ++i) {
    s = suspension_step(s, p, CornerEnvironment::free(), dt);
    if (prev < 0.0 && s.Z >= 0.0) up_crossings.push_back(dt * (i - 1 + prev / (prev - s.Z)));
    prev = s.Z;
    REQUIRE(i < 100000);
  }
  const double measured = 10.0 / (up_crossings.back() - up_crossings.front());
  CHECK(std::abs(measured - f) / f < 0.02);
}

TEST_CASE("damped step response follows the analytic second-order solution") {
  const double M = 0.3, K = 300.0, B = 6.0, F = 1.0, dt = 0.001;
  const CornerParams p{M, 1e12, B, K};
  CornerEnvironment env = CornerEnvironment::free();
  env.external_force = F;
  const double wn = std::sqrt(K / M), zeta = B / (2 * std::sqrt(K * M)), wd = wn * std::sqrt(1 - zeta * zeta);
  REQUIRE(zeta < 1.0);
  SuspensionCornerState s;
  double sq_err = 0.0, sq_ref = 0.0;
  const int n = static_cast<int>(std::lround(2.0 / dt));
  for (int i = 1; i <= n; ++i) {
    s = suspension_step(s, p, env, dt);
    const double t = i * dt;
    const double ref =
        -F / K * (1 - std::exp(-zeta * wn * t) * (std::cos(wd * t) + zeta / std::sqrt(1 - zeta * zeta) * std::sin(wd * t)));
    sq_err += (s.Z - ref) * (s.Z - ref);
    sq_ref += ref * ref;
  }
  CHECK(std::sqrt(sq_err / sq_ref) < 0.01);
}

TEST_CASE("coupled pair tracks the matrix-exponential solution") {
  const double M = 0.3, m = 0.035, K = 300.0, B = 2.0, dt = 0.001;
  const CornerParams p{M, m, B, K};
  Eigen::Matrix4d A;
  A << 0, 1, 0, 0, -K / M, -B / M, K / M, B / M, 0, 0, 0, 1, K / m, B / m, -K / m, -B / m;
  const Eigen::Vector4d x0(0.01, 0.0, -0.005, 0.0);
  SuspensionCornerState s{x0(0), x0(1), x0(2), x0(3), 0.0};
  double max_err = 0.0;
  for (int i = 1; i <= 500; ++i) {
    s = suspension_step(s, p, CornerEnvironment::free(), dt);
    const Eigen::Matrix4d At = A * (i * dt);
    const Eigen::Vector4d ref = At.exp() * x0;
    max_err = std::max({max_err, std::abs(s.Z - ref(0)), std::abs(s.z - ref(2))});
  }
  CHECK(max_err < 5e-4);
}

TEST_CASE("suspension energy never increases when damped") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-0.02, 0.02), uv(-0.5, 0.5);
  for (double B : {0.1, 1.0, 6.0}) {
    for (double dt : {0.001, 0.0005}) {
      const CornerParams p{0.3, 0.035, B, 300.0};
      SuspensionCornerState s{u(rng), uv(rng), u(rng), uv(rng), 0.0};
      double e = corner_energy(s, p);
      for (int i = 0; i < 5000; ++i) {
        s = suspension_step(s, p, CornerEnvironment::free(), dt);
        const double e2 = corner_energy(s, p);
        CHECK(e2 <= e + 1e-9);
        e = e2;
      }
    }
  }
}

TEST_CASE("drive_step") {
  const VehicleConfig cfg;
  CHECK(drive_step(0.0, 0.0, cfg, 0.0, 0.01) == 0.0);
  SUBCASE("full throttle converges to the no-load speed without overshoot") {
    double w = 0.0;
    for (int i = 0; i < 2000; ++i) {
      w = drive_step(w, 1.0, cfg, 0.0, 0.01);
      CHECK(w <= cfg.max_wheel_speed);
    }
    CHECK(std::abs(w - 13.6) < 1e-9);
  }
  SUBCASE("idle brake decays without reversing") {
    for (double dt : {0.01, 0.001, 1e-5}) {
      double w = 5.0, prev = w;
      for (int i = 0; i < 200000 && w != 0.0; ++i) {
        w = drive_step(w, 0.0, cfg, 0.0, dt);
        CHECK(w >= 0.0);
        CHECK(w <= prev);
        prev = w;
      }
      CHECK(w == 0.0);
    }
  }
  SUBCASE("reverse throttle mirrors forward") {
    double f = 0.0, r = 0.0;
    for (int i = 0; i < 50; ++i) {
      f = drive_step(f, 0.7, cfg, 0.0, 1e-4);
      r = drive_step(r, -0.7, cfg, 0.0, 1e-4);
      CHECK(f == doctest::Approx(-r));
    }
  }
  SUBCASE("constant load is backward Euler on the wheel inertia") {
    const double I = cfg.wheel_inertia(), dt = 1e-4, tau = 0.05 * 0.5;
    // Closed-form root of I(w'-w)/dt = 0.5·τmax(1 - w'/wmax) - τ for w' > 0.
    const double w0 = 1.0, load = 0.001;
    const double expected = (I * w0 / dt + tau - load) / (I / dt + tau / cfg.max_wheel_speed);
    CHECK(drive_step(w0, 0.5, cfg, load, dt) == doctest::Approx(expected).epsilon(1e-12));
  }
}

TEST_CASE("steer_step") {
  const VehicleConfig cfg;
  CHECK(steer_step(0.0, 0.0, cfg, 0.01) == 0.0);
  CHECK(steer_step(0.0, pi / 6, cfg, 0.01) == doctest::Approx(0.00805));
  double d = 0.0;
  for (int i = 0; i < 200; ++i) d = steer_step(d, pi / 4, cfg, 0.01);
  CHECK(d == cfg.steer_limit);
  for (int i = 0; i < 200; ++i) d = steer_step(d, -pi / 4, cfg, 0.01);
  CHECK(d == -cfg.steer_limit);
}

TEST_CASE("ackermann split closed forms") {
  CHECK(ackermann_split(0.0, 0.2, 0.1).left == 0.0);
  CHECK(ackermann_split(0.0, 0.2, 0.1).right == 0.0);
  const double l = 0.2, w = 0.1, d = 20.0 * pi / 180.0, t = std::tan(d);
  const AckermannAngles a = ackermann_split(d, l, w);
  // Positive delta turns left, so the left wheel is the inner one.
  CHECK(a.left == doctest::Approx(std::atan(2 * l * t / (2 * l - w * t))).epsilon(1e-14));
  CHECK(a.right == doctest::Approx(std::atan(2 * l * t / (2 * l + w * t))).epsilon(1e-14));
  CHECK(std::abs(a.left) > std::abs(a.right));
  const AckermannAngles b = ackermann_split(-d, l, w);
  CHECK(std::abs(b.right) > std::abs(b.left));
  CHECK(b.left == doctest::Approx(-a.right));
  CHECK_THROWS(ackermann_split(pi / 2, l, w));
}

TEST_CASE("ackermann centres coincide") {
  const VehicleConfig cfg;
  const double l = cfg.wheelbase, w = cfg.track_width;
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-pi / 6, pi / 6);
  for (int i = 0; i < 100; ++i) {
    const double d = u(rng);
    if (d == 0.0) continue;
    const AckermannAngles a = ackermann_split(d, l, w);
    // Each wheel's axle line meets the rear-axle line x = 0 at y = y_w + l/tan(δ_w).
    const double y_left = w / 2 + l / std::tan(a.left);
    const double y_right = -w / 2 + l / std::tan(a.right);
    CHECK(std::abs(y_left - y_right) < 1e-9);
    CHECK(std::abs(y_left - l / std::tan(d)) < 1e-9);
  }
}

TEST_CASE("vehicle at rest stays at rest") {
  const VehicleModel model{VehicleConfig{}};
  const Scene scene = open_ground();
  const VehicleState s0 = initial_vehicle_state(model, {1.0, 2.0, 0.3});
  VehicleState s = s0;
  for (int i = 0; i < 500; ++i) s = vehicle_step(s, {}, scene, model, 0.01);
  CHECK(s.chassis.x == s0.chassis.x);
  CHECK(s.chassis.y == s0.chassis.y);
  CHECK(s.chassis.psi == s0.chassis.psi);
  for (int i = 0; i < kCorners; ++i) {
    CHECK(std::abs(s.corners[i].Z - s0.corners[i].Z) < 1e-9);
    CHECK(s.wheels[i].revs_accum == 0.0);
  }
  double total = 0.0;
  for (const auto& w : s.wheels) total += w.normal_load;
  CHECK(total == doctest::Approx(model.mass() * kGravity).epsilon(1e-9));
}

TEST_CASE("full throttle reaches the rated top speed") {
  const VehicleConfig cfg;
  const VehicleModel model{cfg};
  const Scene scene = open_ground();
  VehicleState s = initial_vehicle_state(model, {-45.0, 0.0, 0.0});
  const ActuationCommand cmd{"v", 1.0, 0.0, 0};
  double max_slip = 0.0;
  for (int i = 0; i < 3000; ++i) {
    s = vehicle_step(s, cmd, scene, model, 0.01);
    for (const auto& w : s.wheels) {
      CHECK(std::abs(w.omega) <= cfg.max_wheel_speed);
      if (i > 500) max_slip = std::max(max_slip, std::abs(w.slip_x));
    }
  }
  CHECK(std::abs(s.chassis.v_x - 0.267) <= 0.013);
  CHECK(max_slip < 0.05);
  CHECK(std::abs(s.chassis.y) < 1e-12);
}

TEST_CASE("steady turn radius matches the kinematic bicycle model") {
  const VehicleConfig cfg;
  const VehicleModel model{cfg};
  const Scene scene = open_ground();
  const double l_r = model.com_from_rear_axle().x();
  for (double steer : {0.2, 0.5, 1.0}) {
    VehicleState s = initial_vehicle_state(model, {0.0, 0.0, 0.0});
    const ActuationCommand cmd{"v", 0.3, steer, 0};
    for (int i = 0; i < 3000; ++i) {
      s = vehicle_step(s, cmd, scene, model, 0.01);
      CHECK(std::abs(s.steer_angle) <= cfg.steer_limit);
    }
    const double delta = steer * cfg.steer_limit;
    const double r_rear = cfg.wheelbase / std::tan(delta);
    const double expected = std::hypot(r_rear, l_r);
    const double measured = std::hypot(s.chassis.v_x, s.chassis.v_y) / s.chassis.psidot;
    CHECK(measured > 0.0);
    CHECK(std::abs(measured - expected) / expected < 0.10);
  }
}

TEST_CASE("idle brake stops the car without rolling back") {
  const VehicleModel model{VehicleConfig{}};
  const Scene scene = open_ground();
  VehicleState s = initial_vehicle_state(model, {0.0, 0.0, 0.0});
  for (int i = 0; i < 300; ++i) s = vehicle_step(s, {"v", 1.0, 0.0, 0}, scene, model, 0.01);
  for (int i = 0; i < 300; ++i) {
    s = vehicle_step(s, {}, scene, model, 0.01);
    CHECK(s.chassis.v_x >= 0.0);
  }
  CHECK(s.chassis.v_x < 1e-9);
}

TEST_CASE("vehicle step is bit-deterministic") {
  const VehicleModel model{VehicleConfig{}};
  const Scene scene = open_ground();
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<ActuationCommand> log;
  for (int i = 0; i < 400; ++i) log.push_back({"v", u(rng), u(rng), i});
  auto run = [&] {
    VehicleState s = initial_vehicle_state(model, {0.0, 0.0, 0.0});
    std::vector<double> trace;
    for (const auto& c : log) {
      s = vehicle_step(s, c, scene, model, 0.01);
      trace.insert(trace.end(), {s.chassis.x, s.chassis.y, s.chassis.psi, s.wheels[2].revs_accum});
    }
    return trace;
  };
  const auto a = run(), b = run();
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(bit_equal(a[i], b[i]));
}

TEST_CASE("vehicle stops on contact with a wall") {
  const VehicleModel model{VehicleConfig{}};
  const Scene scene = load_scene(R"({"format": "scaletwin-scene", "version": 1,
    "bounds": {"min": [-5, -5], "max": [5, 5]},
    "collision": [{"id": "w", "kind": "wall", "polygon": [[1, -1], [1.1, -1], [1.1, 1], [1, 1]]}]})");
  VehicleState s = initial_vehicle_state(model, {0.0, 0.0, 0.0});
  int steps = 0;
  while (!s.collided && steps < 2000) {
    s = vehicle_step(s, {"v", 1.0, 0.0, 0}, scene, model, 0.01);
    ++steps;
  }
  REQUIRE(s.collided);
  CHECK(s.chassis.v_x == 0.0);
  CHECK_FALSE(footprint_collision(scene, model.footprint(s.chassis)));
  // The latch survives further steps.
  s = vehicle_step(s, {}, scene, model, 0.01);
  CHECK(s.collided);
}

TEST_CASE("non-finite state raises a named simulation fault") {
  const VehicleModel model{VehicleConfig{}};
  const Scene scene = open_ground();
  VehicleState s = initial_vehicle_state(model, {0.0, 0.0, 0.0});
  s.corners[kRearRight].Zdot = std::nan("");
  try {
    (void)vehicle_step(s, {}, scene, model, 0.01);
    FAIL("expected a fault");
  } catch (const SimulationFault& e) {
    CHECK(e.quantity() == "corner.rr.Z");
  }
  CHECK_THROWS_AS(vehicle_step(initial_vehicle_state(model, {}), {"v", std::nan(""), 0.0, 0}, scene, model, 0.01),
                  SimulationFault);
}
