#include "env/env.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "core/errors.hpp"

namespace scaletwin {

void EnvConfig::validate() const {
  world.validate();
  if (ticks_per_step < 1) throw ConfigError("env.ticks_per_step: must be >= 1");
  if (!(std::abs(throttle) <= 1.0)) throw ConfigError("env.throttle: must be in [-1, 1]");
  if (!(goal_tolerance > 0.0) || !std::isfinite(goal_tolerance)) throw ConfigError("env.goal_tolerance: must be > 0");
  if (max_steps < 1) throw ConfigError("env.max_steps: must be >= 1");
  if (!(collision_coefficient >= 0.0) || !std::isfinite(collision_coefficient))
    throw ConfigError("env.collision_coefficient: must be >= 0");
  if (!(spawn_jitter >= 0.0) || !std::isfinite(spawn_jitter)) throw ConfigError("env.spawn_jitter: must be >= 0");
}

std::string_view to_string(DoneReason r) {
  switch (r) {
    case DoneReason::kGoal: return "goal";
    case DoneReason::kCollision: return "collision";
    case DoneReason::kTimeout: return "timeout";
    case DoneReason::kNone: break;
  }
  return "none";
}

double goal_reward() { return 1.0; }

double collision_reward(double goal_distance, double coefficient) { return -coefficient * goal_distance; }

std::vector<double> AgentObservation::vector() const {
  std::vector<double> v{goal.x(), goal.y()};
  for (const auto& p : peers) v.insert(v.end(), {p.position.x(), p.position.y(), p.yaw, p.velocity});
  return v;
}

IntersectionEnv::IntersectionEnv(Scene scene, EnvConfig config) : scene_(std::move(scene)), cfg_(std::move(config)) {
  cfg_.validate();
  if (scene_.scenarios.empty()) throw SceneError("scene '" + scene_.name + "' defines no scenarios");
}

std::vector<std::string> IntersectionEnv::scenarios() const {
  std::vector<std::string> out;
  for (const auto& s : scene_.scenarios) out.push_back(s.name);
  return out;
}

const World& IntersectionEnv::world() const {
  if (!world_) throw StateError("no episode has been started");
  return *world_;
}

std::vector<std::string> IntersectionEnv::agents() const {
  std::vector<std::string> out;
  for (const auto& a : agents_) out.push_back(a.id);
  return out;
}

std::vector<AgentObservation> IntersectionEnv::reset(const std::string& name, std::uint64_t seed) {
  const Scenario& scenario = scene_.scenario(name);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> jitter(0.0, 1.0);
  std::vector<VehicleSpawn> spawns;
  std::vector<Agent> agents;
  for (std::size_t i = 0; i < scenario.agents.size(); ++i) {
    const ScenarioAgent& sa = scenario.agents[i];
    Pose2 pose = scene_.spawn(sa.spawn).pose;
    if (cfg_.spawn_jitter > 0.0) {
      pose.x += cfg_.spawn_jitter * jitter(rng);
      pose.y += cfg_.spawn_jitter * jitter(rng);
    }
    const std::string id = "agent_" + std::to_string(i);
    spawns.push_back({id, pose});
    agents.push_back({id, scene_.goal(sa.goal).position});
  }
  WorldConfig wc = cfg_.world;
  wc.seed = seed;
  world_ = std::make_unique<World>(scene_, wc, std::move(spawns));
  agents_ = std::move(agents);
  steps_ = 0;
  episode_done_ = false;
  return observations();
}

AgentObservation IntersectionEnv::observe(const Agent& a, const std::vector<PeerState>& peers) const {
  AgentObservation o;
  o.agent = a.id;
  const PeerState* self = nullptr;
  for (const auto& p : peers)
    if (p.vehicle_id == a.id) self = &p;
  const double c = std::cos(self->yaw), s = std::sin(self->yaw);
  const Vec2 d = a.goal - self->position;
  o.goal = Vec2(c * d.x() + s * d.y(), -s * d.x() + c * d.y());
  for (const auto& p : peers) {
    if (p.vehicle_id == a.id) continue;
    const PeerState r = relative_peer(*self, p);
    o.peers.push_back({p.vehicle_id, r.position, r.yaw, r.velocity});
  }
  return o;
}

std::vector<AgentObservation> IntersectionEnv::observations() const {
  const auto peers = world().peers();  // ordered by id
  std::vector<AgentObservation> out;
  for (const auto& a : agents_) out.push_back(observe(a, peers));
  return out;
}

EnvStepResult IntersectionEnv::step(const std::map<std::string, int>& actions) {
  if (!world_) throw StateError("reset the environment before stepping");
  if (episode_done_) throw StateError("episode is over; reset to start another");
  EnvStepResult result;
  std::map<std::string, int> applied;
  for (const auto& [id, action] : actions) {
    auto it = std::find_if(agents_.begin(), agents_.end(), [&](const Agent& a) { return a.id == id; });
    if (it == agents_.end()) throw NotFoundError("unknown agent '" + id + "'");
    if (action < -1 || action > 1) throw ConfigError("action for '" + id + "' must be -1, 0 or +1");
    if (it->done) {
      result.warnings.push_back("action for finished agent '" + id + "' ignored");
      continue;
    }
    applied[id] = action;
  }
  for (const auto& a : agents_)
    if (!a.done && !applied.count(a.id)) throw StateError("missing action for live agent '" + a.id + "'");

  std::map<std::string, AgentStep> outcome;
  for (const auto& a : agents_) outcome[a.id] = {a.id, a.done ? 0 : applied[a.id], 0.0, a.done, a.reason};

  auto command = [&](const Agent& a) {
    ActuationCommand c;
    c.vehicle_id = a.id;
    if (!a.done) {
      c.throttle = cfg_.throttle;
      c.steering = applied[a.id];
    }
    world_->set_command(c);
  };
  for (const auto& a : agents_) command(a);

  for (int k = 0; k < cfg_.ticks_per_step; ++k) {
    world_->step();
    std::map<std::string, Vec2> position;
    for (const auto& p : world_->peers()) position[p.vehicle_id] = p.position;
    for (Agent& a : agents_) {
      if (a.done) continue;
      const double dist = (a.goal - position.at(a.id)).norm();
      AgentStep& s = outcome[a.id];
      if (world_->state(a.id).collided) {
        a.reason = DoneReason::kCollision;
        s.reward = collision_reward(dist, cfg_.collision_coefficient);
      } else if (dist <= cfg_.goal_tolerance) {
        a.reason = DoneReason::kGoal;
        s.reward = goal_reward();
      } else {
        continue;
      }
      a.done = true;
      s.done = true;
      s.reason = a.reason;
      command(a);  // stop for the rest of the episode
    }
  }
  ++steps_;
  if (steps_ >= cfg_.max_steps) {
    for (auto& a : agents_) {
      if (a.done) continue;
      a.done = true;
      a.reason = DoneReason::kTimeout;
      outcome[a.id].done = true;
      outcome[a.id].reason = DoneReason::kTimeout;
      command(a);
    }
  }
  episode_done_ = std::all_of(agents_.begin(), agents_.end(), [](const Agent& a) { return a.done; });
  result.step = steps_;
  result.observations = observations();
  for (const auto& a : agents_) result.agents.push_back(outcome[a.id]);
  result.episode_done = episode_done_;
  return result;
}

}  // namespace scaletwin
