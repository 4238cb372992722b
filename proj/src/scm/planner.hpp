#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "core/config.hpp"
#include "core/types.hpp"
#include "scene/geometry.hpp"
#include "world/world.hpp"

namespace scaletwin {

struct BehaviorTrigger {
  ElementKind kind = ElementKind::kStop;
  std::optional<LightState> state;  // lights only
  std::optional<std::string> label;
};

/// Trim added to the base command while a matching element is within its
/// detection radius. Stop rules hold zero throttle while the element is not
/// in `resume_on`.
struct BehaviorRule {
  std::string id;
  BehaviorTrigger trigger;
  double throttle_trim = 0.0;
  double steering_trim = 0.0;
  bool stop = false;
  std::optional<LightState> resume_on;

  void validate() const;  // throws ConfigError
};

std::vector<BehaviorRule> load_rules(std::string_view document);
std::vector<BehaviorRule> load_rules_file(const std::string& path);

struct PlannerOutput {
  ActuationCommand command;
  std::vector<std::string> active;  // "element:rule" pairs that fired
  bool stopped = false;
};

/// Pure function of its inputs; elements are visited in id order and each
/// element fires its first matching rule. Trims add up, then clamp; any
/// active stop rule forces zero throttle.
PlannerOutput behavior_planner(const Pose2& pose, std::span<const ElementSnapshot> elements,
                               std::span<const BehaviorRule> rules, const ActuationCommand& base);

struct FollowerParams {
  double lookahead = 0.25;       // m
  double target_speed = 0.2;     // m/s
  double speed_gain = 2.0;       // throttle per m/s of speed error
  double goal_tolerance = 0.05;  // m
  double slow_radius = 0.3;      // m, ramp down approaching the end
  double wheelbase = 0.141;
  double steer_limit = 0.5235987755982988;
  double top_speed = 0.26656;

  static FollowerParams from(const VehicleConfig& cfg);
};

struct FollowerOutput {
  ActuationCommand command;
  bool done = false;
};

/// Pure-pursuit steering toward a lookahead point on `path` plus a
/// proportional speed loop. Zero command and done once within goal_tolerance
/// of the last point. Throws StateError for an empty path.
FollowerOutput waypoint_follower(const Pose2& pose, double speed, std::span<const Vec2> path,
                                 const FollowerParams& params);

}  // namespace scaletwin

namespace scaletwin {

struct PilotStep {
  ActuationCommand command;
  bool done = false;
  bool stopped = false;
  std::vector<std::string> active;
};

/// Waypoint follower output shaped by the behavior planner; zero once done.
PilotStep pilot_step(const Pose2& pose, double speed, std::span<const Vec2> path,
                     std::span<const ElementSnapshot> elements, std::span<const BehaviorRule> rules,
                     const FollowerParams& params);

}  // namespace scaletwin
