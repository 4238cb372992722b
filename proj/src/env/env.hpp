#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "world/world.hpp"

namespace scaletwin {

struct EnvConfig {
  WorldConfig world;
  int ticks_per_step = 5;
  double throttle = 0.8;
  double goal_tolerance = 0.05;  // m
  int max_steps = 2000;
  double collision_coefficient = 0.425;
  double spawn_jitter = 0.0;  // m, std of a seeded offset applied at reset

  void validate() const;  // throws ConfigError
};

enum class DoneReason { kNone, kGoal, kCollision, kTimeout };
std::string_view to_string(DoneReason r);

struct PeerObservation {
  std::string agent;
  Vec2 position = Vec2::Zero();  // agent frame
  double yaw = 0.0;              // relative heading
  double velocity = 0.0;         // peer's forward speed
};

struct AgentObservation {
  std::string agent;
  Vec2 goal = Vec2::Zero();  // goal minus position, agent frame
  std::vector<PeerObservation> peers;  // every other agent, ordered by id

  /// [g.x, g.y, then x, y, yaw, v per peer]
  std::vector<double> vector() const;
};

struct AgentStep {
  std::string agent;
  int action = 0;
  double reward = 0.0;
  bool done = false;
  DoneReason reason = DoneReason::kNone;
};

struct EnvStepResult {
  std::int64_t step = 0;
  std::vector<AgentObservation> observations;
  std::vector<AgentStep> agents;
  bool episode_done = false;
  std::vector<std::string> warnings;
};

/// Multi-agent intersection traversal: discrete steering at constant throttle.
/// Agents are named agent_0..agent_n-1 in scenario order. A finished agent
/// stays in the world, stopped, as an obstacle for the others.
class IntersectionEnv {
 public:
  IntersectionEnv(Scene scene, EnvConfig config = {});

  /// Throws NotFoundError for an unknown scenario.
  std::vector<AgentObservation> reset(const std::string& scenario, std::uint64_t seed);
  /// One action in {-1, 0, +1} per live agent. Throws StateError without an
  /// active episode or when a live agent has no action, ConfigError for an
  /// action outside the set. Actions for finished agents are ignored with a
  /// warning.
  EnvStepResult step(const std::map<std::string, int>& actions);

  std::vector<std::string> agents() const;
  std::vector<AgentObservation> observations() const;
  bool active() const { return world_ && !episode_done_; }
  std::int64_t steps() const { return steps_; }
  const World& world() const;
  const EnvConfig& config() const { return cfg_; }
  const Scene& scene() const { return scene_; }
  std::vector<std::string> scenarios() const;

 private:
  struct Agent {
    std::string id;
    Vec2 goal = Vec2::Zero();
    bool done = false;
    DoneReason reason = DoneReason::kNone;
  };

  AgentObservation observe(const Agent& a, const std::vector<PeerState>& peers) const;

  Scene scene_;
  EnvConfig cfg_;
  std::unique_ptr<World> world_;
  std::vector<Agent> agents_;
  std::int64_t steps_ = 0;
  bool episode_done_ = false;
};

double goal_reward();
double collision_reward(double goal_distance, double coefficient = 0.425);

}  // namespace scaletwin
