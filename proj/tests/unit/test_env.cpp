#include <cmath>
#include <random>
#include <set>

#include "bridge/ws.hpp"
#include "core/errors.hpp"
#include "doctest.h"
#include "env/env.hpp"
#include "env/server.hpp"

using namespace scaletwin;
using namespace std::chrono_literals;
using nlohmann::json;

namespace {

const std::string kScenes = SCALETWIN_SOURCE_DIR "/scenes/";

const Scene& school() {
  static const Scene s = load_scene_file(kScenes + "intersection_school.json");
  return s;
}

std::map<std::string, int> all(const IntersectionEnv& env, int action) {
  std::map<std::string, int> m;
  for (const auto& a : env.agents()) m[a] = action;
  return m;
}

// Goal minus position, rotated by -yaw: the agent-frame oracle.
Vec2 in_frame(const Vec2& goal, const Vec2& pos, double yaw) {
  const Vec2 d = goal - pos;
  return {std::cos(yaw) * d.x() + std::sin(yaw) * d.y(), -std::sin(yaw) * d.x() + std::cos(yaw) * d.y()};
}

constexpr double kDeg = M_PI / 180.0;

}  // namespace

TEST_CASE("reward expressions") {
  CHECK(goal_reward() == 1.0);
  CHECK(collision_reward(2.0) == -0.85);
  CHECK(collision_reward(0.0) == 0.0);
  CHECK(collision_reward(1.0, 0.5) == -0.5);
}

TEST_CASE("single-agent reset observes the goal in the agent frame") {
  IntersectionEnv env(school());
  const auto obs = env.reset("single", 1);
  REQUIRE(obs.size() == 1);
  CHECK(obs[0].agent == "agent_0");
  CHECK(obs[0].peers.empty());
  CHECK(obs[0].vector().size() == 2);
  // Spawn (0.3, -2.4) facing +y, goal (0.3, 2.4): straight ahead, 4.8 m.
  const Vec2 g = in_frame({0.3, 2.4}, {0.3, -2.4}, 90 * kDeg);
  CHECK(obs[0].goal.x() == doctest::Approx(4.8).epsilon(1e-12));
  CHECK(std::abs(obs[0].goal.y()) < 1e-12);
  CHECK((obs[0].goal - g).norm() < 1e-12);
  CHECK(env.steps() == 0);
  CHECK(env.active());
}

TEST_CASE("multi-agent reset is deterministic and orders peers by id") {
  IntersectionEnv a(school()), b(school());
  const auto oa = a.reset("multi", 42), ob = b.reset("multi", 42);
  REQUIRE(oa.size() == 4);
  for (std::size_t i = 0; i < oa.size(); ++i) {
    CHECK(oa[i].vector() == ob[i].vector());
    REQUIRE(oa[i].peers.size() == 3);
    for (std::size_t j = 1; j < oa[i].peers.size(); ++j) CHECK(oa[i].peers[j - 1].agent < oa[i].peers[j].agent);
  }
  // agent_0 spawns south facing north; agent_1 north facing south.
  const PeerObservation& p = oa[0].peers[0];
  CHECK(p.agent == "agent_1");
  const Vec2 rel = in_frame({-0.3, 2.4}, {0.3, -2.4}, 90 * kDeg);
  CHECK((p.position - rel).norm() < 1e-12);
  CHECK(std::abs(std::abs(p.yaw) - M_PI) < 1e-12);
  for (const auto& o : oa)
    for (double v : o.vector()) CHECK(std::isfinite(v));

  // Jittered spawns depend on the seed only.
  EnvConfig jit;
  jit.spawn_jitter = 0.02;
  IntersectionEnv c(school(), jit), d(school(), jit);
  CHECK(c.reset("multi", 7)[0].vector() == d.reset("multi", 7)[0].vector());
  CHECK(c.reset("multi", 8)[0].vector() != d.reset("multi", 7)[0].vector());
}

TEST_CASE("head-on agents see identical observations by symmetry") {
  IntersectionEnv env(school());
  auto obs = env.reset("head_on", 3);
  REQUIRE(obs.size() == 2);
  auto check_symmetric = [](const std::vector<AgentObservation>& o) {
    const auto a = o[0].vector(), b = o[1].vector();
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(std::abs(a[i] - b[i]) <= 1e-9);
  };
  check_symmetric(obs);
  EnvStepResult r;
  int steps = 0;
  while (env.active()) {
    r = env.step(all(env, 0));
    ++steps;
    check_symmetric(r.observations);
    CHECK(r.agents[0].reward == doctest::Approx(r.agents[1].reward).epsilon(1e-9));
  }
  // Straight at each other: both collide in the same step with equal penalties.
  CHECK(r.agents[0].reason == DoneReason::kCollision);
  CHECK(r.agents[1].reason == DoneReason::kCollision);
  const double expected = -0.425 * r.observations[0].goal.norm();
  CHECK(r.agents[0].reward == doctest::Approx(expected).epsilon(1e-6));
  CHECK(r.agents[0].reward < 0.0);
  CHECK(steps < 200);
}

TEST_CASE("a steered agent reaches its goal for exactly +1") {
  IntersectionEnv env(school());
  auto obs = env.reset("single", 0);
  EnvStepResult r;
  int zero_reward_steps = 0;
  while (env.active()) {
    const double gy = obs[0].goal.y();
    r = env.step({{"agent_0", gy > 0.005 ? 1 : gy < -0.005 ? -1 : 0}});
    obs = r.observations;
    if (!r.agents[0].done) {
      CHECK(r.agents[0].reward == 0.0);
      ++zero_reward_steps;
    }
  }
  CHECK(r.agents[0].reason == DoneReason::kGoal);
  CHECK(r.agents[0].reward == 1.0);
  CHECK(r.episode_done);
  CHECK(obs[0].goal.norm() <= 0.05 + 0.01);
  CHECK(zero_reward_steps > 100);
  CHECK_THROWS_AS(env.step({{"agent_0", 0}}), StateError);
}

TEST_CASE("collision reward is exactly -0.425 |g| over 50 randomized collisions") {
  int collisions = 0;
  for (std::uint64_t seed = 0; collisions < 50 && seed < 200; ++seed) {
    EnvConfig cfg;
    cfg.spawn_jitter = 0.02;
    cfg.max_steps = 300;
    IntersectionEnv env(school(), cfg);
    env.reset(seed % 3 ? "multi" : "single", seed);
    const auto& goals = school().scenario(seed % 3 ? "multi" : "single").agents;
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> act(-1, 1);
    std::bernoulli_distribution keep(0.9);
    std::map<std::string, int> held;
    std::set<std::string> finished;
    while (env.active() && collisions < 50) {
      std::map<std::string, int> actions;
      for (const auto& a : env.agents()) {
        if (!held.count(a) || !keep(rng)) held[a] = act(rng);
        if (!finished.count(a)) actions[a] = held[a];
      }
      const EnvStepResult r = env.step(actions);
      CHECK(r.warnings.empty());
      const auto truth = env.world().peers();
      for (std::size_t i = 0; i < r.agents.size(); ++i) {
        const AgentStep& s = r.agents[i];
        if (!s.done) {
          CHECK(s.reward == 0.0);
          continue;
        }
        if (finished.count(s.agent)) continue;
        finished.insert(s.agent);
        if (s.reason != DoneReason::kCollision) continue;
        ++collisions;
        // Independent evaluation from ground truth; the vehicle is held
        // stopped from the contact tick on.
        const Vec2 goal = school().goal(goals[i].goal).position;
        const Vec2 pos = std::find_if(truth.begin(), truth.end(), [&](const PeerState& p) {
                           return p.vehicle_id == s.agent;
                         })->position;
        CHECK(s.reward == -0.425 * (goal - pos).norm());
        CHECK(s.reward < 0.0);
        CHECK(s.reward == doctest::Approx(-0.425 * r.observations[i].goal.norm()).epsilon(1e-12));
      }
    }
  }
  CHECK(collisions == 50);
}

TEST_CASE("episodes are deterministic given seed and actions") {
  auto run = [](std::uint64_t seed) {
    IntersectionEnv env(school());
    env.reset("multi", seed);
    std::mt19937_64 rng(99);
    std::uniform_int_distribution<int> act(-1, 1);
    std::vector<double> trace;
    for (int k = 0; k < 120 && env.active(); ++k) {
      std::map<std::string, int> actions;
      for (const auto& a : env.agents()) actions[a] = act(rng);
      const EnvStepResult r = env.step(actions);
      for (const auto& o : r.observations)
        for (double v : o.vector()) trace.push_back(v);
      for (const auto& s : r.agents) trace.push_back(s.reward);
    }
    return trace;
  };
  CHECK(run(5) == run(5));
}

TEST_CASE("environment argument and state errors") {
  IntersectionEnv env(school());
  CHECK_THROWS_AS(env.step({{"agent_0", 0}}), StateError);
  CHECK_THROWS_AS(env.world(), StateError);
  CHECK_THROWS_AS(env.reset("roundabout", 0), NotFoundError);
  env.reset("head_on", 0);
  CHECK_THROWS_AS(env.step({{"agent_0", 0}}), StateError);  // agent_1 missing
  CHECK_THROWS_AS(env.step({{"agent_0", 2}, {"agent_1", 0}}), ConfigError);
  CHECK_THROWS_AS(env.step({{"agent_0", 0}, {"agent_1", 0}, {"agent_9", 0}}), NotFoundError);
  CHECK(env.steps() == 0);

  EnvConfig bad;
  bad.ticks_per_step = 0;
  CHECK_THROWS_AS(IntersectionEnv(school(), bad), ConfigError);
  bad = {};
  bad.goal_tolerance = -1;
  CHECK_THROWS_AS(IntersectionEnv(school(), bad), ConfigError);
  CHECK_THROWS_AS(IntersectionEnv(load_scene_file(kScenes + "tiny_town.json")), SceneError);

  // Timeout ends every live agent with zero reward.
  EnvConfig quick;
  quick.max_steps = 3;
  IntersectionEnv t(school(), quick);
  t.reset("multi", 0);
  EnvStepResult r;
  for (int i = 0; i < 3; ++i) r = t.step(all(t, 0));
  CHECK(r.episode_done);
  for (const auto& s : r.agents) {
    CHECK(s.reason == DoneReason::kTimeout);
    CHECK(s.reward == 0.0);
  }
}

TEST_CASE("actions for finished agents are ignored with a warning") {
  IntersectionEnv env(school());
  env.reset("multi", 0);
  // Hard left from the south spawn hits the corner block quickly.
  EnvStepResult r;
  for (int k = 0; k < 400; ++k) {
    std::map<std::string, int> actions;
    for (const auto& a : env.agents()) actions[a] = 0;
    actions["agent_0"] = 1;
    for (const auto& s : r.agents)
      if (s.done) actions.erase(s.agent);
    r = env.step(actions);
    if (r.agents[0].done) break;
  }
  REQUIRE(r.agents[0].done);
  CHECK(r.agents[0].reason == DoneReason::kCollision);
  std::map<std::string, int> actions;
  for (std::size_t i = 0; i < r.agents.size(); ++i)
    if (!r.agents[i].done || i == 0) actions[r.agents[i].agent] = 0;
  if (!r.episode_done) {
    const EnvStepResult next = env.step(actions);
    REQUIRE(next.warnings.size() == 1);
    CHECK(next.warnings[0].find("agent_0") != std::string::npos);
    CHECK(next.agents[0].reward == 0.0);
    CHECK(next.agents[0].done);
  }
}

TEST_CASE("trainers drive the environment over the socket") {
  EnvServer server(school(), EnvConfig{});
  WsServer ws(server, {"127.0.0.1", 0});
  const HostPort addr{"127.0.0.1", ws.port()};
  auto request = [](WsClient& c, const std::string& type, json payload, std::int64_t seq) {
    Envelope e;
    e.type = type;
    e.seq = seq;
    e.payload = std::move(payload);
    c.send(e);
    return c.wait_for([&](const Envelope& r) { return r.seq == seq && (r.type == msg::kAck || r.type == msg::kErr); }, 5s);
  };

  WsClient intruder(addr);
  const Envelope no = request(intruder, msg::kHello, {{"role", "observer"}}, 1);
  CHECK(no.type == msg::kErr);
  CHECK(no.payload["code"] == "BAD_HANDSHAKE");

  WsClient t1(addr), t2(addr);
  const Envelope hi = request(t1, msg::kHello, {{"role", "trainer"}}, 1);
  REQUIRE(hi.type == msg::kAck);
  CHECK(hi.payload["scenarios"] == json({"single", "multi", "head_on"}));
  CHECK(hi.payload["config"]["ticks_per_step"] == 5);
  CHECK(hi.payload["config"]["throttle"] == 0.8);
  request(t2, msg::kHello, {{"role", "trainer"}}, 1);

  CHECK(request(t1, msg::kEnvStep, {{"actions", {{"agent_0", 0}}}}, 2).payload["code"] == "INVALID_STATE");
  CHECK(request(t1, msg::kEnvReset, {{"scenario", "roundabout"}}, 3).payload["code"] == "NOT_FOUND");

  // Remote and in-process runs agree exactly.
  IntersectionEnv local(school());
  const auto local_obs = local.reset("multi", 11);
  const Envelope reset = request(t1, msg::kEnvReset, {{"scenario", "multi"}, {"seed", 11}}, 4);
  REQUIRE(reset.type == msg::kAck);
  REQUIRE(reset.payload["observations"].size() == 4);
  for (std::size_t i = 0; i < 4; ++i)
    CHECK(observation_from_json(reset.payload["observations"][i]).vector() == local_obs[i].vector());
  request(t2, msg::kEnvReset, {{"scenario", "single"}, {"seed", 1}}, 2);

  std::mt19937_64 rng(1);
  std::uniform_int_distribution<int> act(-1, 1);
  for (int k = 0; k < 30; ++k) {
    std::map<std::string, int> actions;
    json payload = json::object();
    for (const auto& a : local.agents()) payload[a] = actions[a] = act(rng);
    const EnvStepResult expect = local.step(actions);
    const Envelope got = request(t1, msg::kEnvStep, {{"actions", payload}}, 10 + k);
    REQUIRE(got.type == msg::kAck);
    CHECK(got.payload["step"] == k + 1);
    for (std::size_t i = 0; i < 4; ++i) {
      CHECK(observation_from_json(got.payload["observations"][i]).vector() == expect.observations[i].vector());
      CHECK(got.payload["agents"][i]["reward"].get<double>() == expect.agents[i].reward);
    }
    // The second trainer's episode is unaffected.
    if (k == 0) CHECK(request(t2, msg::kEnvStep, {{"actions", {{"agent_0", 0}}}}, 3).payload["step"] == 1);
  }
  CHECK(request(t1, msg::kEnvStep, {{"actions", {{"agent_0", 5}}}}, 99).payload["code"] == "BAD_REQUEST");
  CHECK(request(t1, msg::kEnvStep, {{"actions", json::array()}}, 100).payload["code"] == "BAD_REQUEST");
  CHECK(request(t1, msg::kEnvStep, json::object(), 101).payload["code"] == "BAD_REQUEST");
  CHECK(request(t1, msg::kCmd, json::object(), 102).payload["code"] == "BAD_REQUEST");
  CHECK(server.sessions() == 2);  // the rejected client was closed
}
