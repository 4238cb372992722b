#include "scm/planner.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include <nlohmann/json.hpp>

#include "core/errors.hpp"

namespace scaletwin {

using nlohmann::json;

void BehaviorRule::validate() const {
  const std::string where = "rule '" + id + "'";
  if (!std::isfinite(throttle_trim) || std::abs(throttle_trim) > 1.0)
    throw ConfigError(where + ": |throttle_trim| must be <= 1");
  if (!std::isfinite(steering_trim) || std::abs(steering_trim) > 1.0)
    throw ConfigError(where + ": |steering_trim| must be <= 1");
  if (stop && throttle_trim != 0.0) throw ConfigError(where + ": stop and throttle_trim are exclusive");
  if (trigger.state && trigger.kind != ElementKind::kTrafficLight)
    throw ConfigError(where + ": only traffic lights have a state");
  if (resume_on && !stop) throw ConfigError(where + ": resume_on needs stop");
}

std::vector<BehaviorRule> load_rules(std::string_view document) {
  json doc;
  try {
    doc = json::parse(document);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("rules: ") + e.what());
  }
  auto light = [](const json& j, const std::string& where) {
    const auto s = light_state_from_string(j.get<std::string>());
    if (!s || *s == LightState::kNone) throw ConfigError(where + ": bad light state");
    return *s;
  };
  std::vector<BehaviorRule> rules;
  try {
    if (doc.value("format", "") != "scaletwin-rules") throw ConfigError("rules: not a rules document");
    if (doc.value("version", 0) != 1) throw ConfigError("rules: unsupported version");
    int n = 0;
    for (const json& r : doc.at("rules")) {
      BehaviorRule rule;
      rule.id = r.value("id", "rule" + std::to_string(n++));
      const json& t = r.at("trigger");
      const auto kind = element_kind_from_string(t.at("kind").get<std::string>());
      if (!kind) throw ConfigError("rule '" + rule.id + "': unknown element kind");
      rule.trigger.kind = *kind;
      if (t.contains("state")) rule.trigger.state = light(t["state"], "rule '" + rule.id + "'");
      if (t.contains("label")) rule.trigger.label = t["label"].get<std::string>();
      rule.throttle_trim = r.value("throttle_trim", 0.0);
      rule.steering_trim = r.value("steering_trim", 0.0);
      rule.stop = r.value("stop", false);
      if (r.contains("resume_on")) rule.resume_on = light(r["resume_on"], "rule '" + rule.id + "'");
      rule.validate();
      rules.push_back(std::move(rule));
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("rules: ") + e.what());
  }
  return rules;
}

std::vector<BehaviorRule> load_rules_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open rules file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return load_rules(ss.str());
}

namespace {

bool matches(const BehaviorTrigger& t, const ElementSnapshot& e) {
  if (t.kind != e.kind) return false;
  if (t.state && *t.state != e.state) return false;
  if (t.label && *t.label != e.label) return false;
  return true;
}

}  // namespace

PlannerOutput behavior_planner(const Pose2& pose, std::span<const ElementSnapshot> elements,
                               std::span<const BehaviorRule> rules, const ActuationCommand& base) {
  std::vector<const ElementSnapshot*> sorted;
  for (const auto& e : elements) sorted.push_back(&e);
  std::sort(sorted.begin(), sorted.end(), [](auto* a, auto* b) { return a->id < b->id; });

  PlannerOutput out;
  double throttle_trim = 0.0, steering_trim = 0.0;
  for (const ElementSnapshot* e : sorted) {
    if (std::hypot(pose.x - e->pose.x, pose.y - e->pose.y) > e->detection_radius) continue;
    for (const BehaviorRule& r : rules) {
      if (!matches(r.trigger, *e)) continue;
      if (r.stop) {
        if (r.resume_on && e->state == *r.resume_on) break;
        out.stopped = true;
      }
      throttle_trim += r.throttle_trim;
      steering_trim += r.steering_trim;
      out.active.push_back(e->id + ":" + r.id);
      break;
    }
  }
  out.command = base;
  out.command.throttle = out.stopped ? 0.0 : std::clamp(base.throttle + throttle_trim, -1.0, 1.0);
  out.command.steering = std::clamp(base.steering + steering_trim, -1.0, 1.0);
  return out;
}

FollowerParams FollowerParams::from(const VehicleConfig& cfg) {
  FollowerParams p;
  p.wheelbase = cfg.wheelbase;
  p.steer_limit = cfg.steer_limit;
  p.top_speed = cfg.top_speed();
  return p;
}

FollowerOutput waypoint_follower(const Pose2& pose, double speed, std::span<const Vec2> path,
                                 const FollowerParams& p) {
  if (path.empty()) throw StateError("waypoint_follower: empty path");
  FollowerOutput out;
  const Vec2 here(pose.x, pose.y);
  const double to_goal = (path.back() - here).norm();
  if (to_goal <= p.goal_tolerance) {
    out.done = true;
    return out;
  }

  // Closest point on the polyline, as (segment index, parameter).
  std::size_t seg = 0;
  double best = std::numeric_limits<double>::infinity(), best_t = 0.0;
  for (std::size_t i = 0; i + 1 < path.size(); ++i) {
    const Vec2 d = path[i + 1] - path[i];
    const double len2 = d.squaredNorm();
    const double t = len2 > 0.0 ? std::clamp((here - path[i]).dot(d) / len2, 0.0, 1.0) : 0.0;
    const double dist = (path[i] + t * d - here).norm();
    if (dist < best) {
      best = dist;
      seg = i;
      best_t = t;
    }
  }
  // Walk `lookahead` metres along the path from there.
  Vec2 target = path.back();
  if (path.size() > 1) {
    double remaining = p.lookahead;
    Vec2 from = path[seg] + best_t * (path[seg + 1] - path[seg]);
    for (std::size_t i = seg; i + 1 < path.size(); ++i) {
      const double len = (path[i + 1] - from).norm();
      if (len >= remaining) {
        target = from + (path[i + 1] - from) * (remaining / len);
        break;
      }
      remaining -= len;
      from = path[i + 1];
    }
  }

  const double c = std::cos(pose.yaw), s = std::sin(pose.yaw);
  const Vec2 d = target - here;
  const double xb = c * d.x() + s * d.y(), yb = -s * d.x() + c * d.y();
  const double l2 = xb * xb + yb * yb;
  const double curvature = l2 > 0.0 ? 2.0 * yb / l2 : 0.0;
  const double delta = std::atan(curvature * p.wheelbase);
  out.command.steering = std::clamp(delta / p.steer_limit, -1.0, 1.0);

  const double v_ref = p.target_speed * std::min(1.0, to_goal / p.slow_radius);
  out.command.throttle = std::clamp(v_ref / p.top_speed + p.speed_gain * (v_ref - speed), -1.0, 1.0);
  return out;
}

}  // namespace scaletwin

namespace scaletwin {

PilotStep pilot_step(const Pose2& pose, double speed, std::span<const Vec2> path,
                     std::span<const ElementSnapshot> elements, std::span<const BehaviorRule> rules,
                     const FollowerParams& params) {
  PilotStep out;
  const FollowerOutput base = waypoint_follower(pose, speed, path, params);
  if (base.done) {
    out.done = true;
    return out;
  }
  PlannerOutput shaped = behavior_planner(pose, elements, rules, base.command);
  out.command = shaped.command;
  out.stopped = shaped.stopped;
  out.active = std::move(shaped.active);
  return out;
}

}  // namespace scaletwin
