#include "env/server.hpp"

#include "bridge/protocol.hpp"
#include "core/errors.hpp"

namespace scaletwin {

using nlohmann::json;

json to_json(const AgentObservation& o) {
  json peers = json::array();
  for (const auto& p : o.peers)
    peers.push_back({{"agent", p.agent}, {"position", {p.position.x(), p.position.y()}}, {"yaw", p.yaw},
                     {"velocity", p.velocity}});
  return {{"agent", o.agent}, {"goal", {o.goal.x(), o.goal.y()}}, {"peers", peers}, {"vector", o.vector()}};
}

AgentObservation observation_from_json(const json& j) {
  try {
    AgentObservation o;
    o.agent = j.at("agent").get<std::string>();
    o.goal = Vec2(j.at("goal").at(0).get<double>(), j.at("goal").at(1).get<double>());
    for (const json& p : j.at("peers"))
      o.peers.push_back({p.at("agent").get<std::string>(),
                         Vec2(p.at("position").at(0).get<double>(), p.at("position").at(1).get<double>()),
                         p.at("yaw").get<double>(), p.at("velocity").get<double>()});
    return o;
  } catch (const json::exception& e) {
    throw FormatError(std::string("bad observation: ") + e.what());
  }
}

json to_json(const EnvStepResult& r) {
  json obs = json::array(), agents = json::array(), warnings = json::array();
  for (const auto& o : r.observations) obs.push_back(to_json(o));
  for (const auto& a : r.agents)
    agents.push_back({{"agent", a.agent}, {"action", a.action}, {"reward", a.reward}, {"done", a.done},
                      {"reason", a.done ? json(to_string(a.reason)) : json(nullptr)}});
  for (const auto& w : r.warnings) warnings.push_back({{"code", code::kFinished}, {"message", w}});
  return {{"step", r.step}, {"observations", obs}, {"agents", agents}, {"episode_done", r.episode_done},
          {"warnings", warnings}};
}

EnvServer::EnvServer(Scene scene, EnvConfig config) : scene_(std::move(scene)), config_(std::move(config)) {
  IntersectionEnv probe(scene_, config_);  // validates both up front
}

Endpoint::ClientId EnvServer::open(std::shared_ptr<Outbox> outbox) {
  std::lock_guard lock(mutex_);
  auto s = std::make_shared<Session>();
  s->outbox = std::move(outbox);
  sessions_[next_id_] = s;
  return next_id_++;
}

void EnvServer::close(ClientId id) {
  std::lock_guard lock(mutex_);
  sessions_.erase(id);
}

std::size_t EnvServer::sessions() const {
  std::lock_guard lock(mutex_);
  return sessions_.size();
}

void EnvServer::receive(ClientId id, const std::string& text) {
  std::shared_ptr<Session> s;
  {
    std::lock_guard lock(mutex_);
    auto it = sessions_.find(id);
    if (it == sessions_.end()) return;
    s = it->second;
  }
  std::lock_guard lock(s->mutex);
  auto reply = [&](const Envelope& e) { s->outbox->push(std::make_shared<const std::string>(encode(e))); };

  Envelope e;
  try {
    e = decode(text);
  } catch (const FormatError& ex) {
    reply(error(Envelope{}, s->greeted ? code::kBadRequest : code::kBadHandshake, ex.what()));
    if (!s->greeted) s->outbox->close_after_flush();
    return;
  }
  if (!s->greeted) {
    if (e.type != msg::kHello || e.payload.value("role", "") != "trainer") {
      reply(error(e, code::kBadHandshake, "first message must be HELLO with role 'trainer'"));
      s->outbox->close_after_flush();
      return;
    }
    s->greeted = true;
    s->env = std::make_unique<IntersectionEnv>(scene_, config_);
    reply(ack(e, code::kOk,
              {{"client_id", id},
               {"role", "trainer"},
               {"scenarios", s->env->scenarios()},
               {"config",
                {{"dt", config_.world.dt},
                 {"ticks_per_step", config_.ticks_per_step},
                 {"throttle", config_.throttle},
                 {"goal_tolerance", config_.goal_tolerance},
                 {"max_steps", config_.max_steps},
                 {"collision_coefficient", config_.collision_coefficient}}}}));
    return;
  }

  try {
    if (e.type == msg::kEnvReset) {
      const std::string scenario = e.payload.value("scenario", "");
      const auto seed = e.payload.value("seed", std::uint64_t{0});
      json obs = json::array();
      for (const auto& o : s->env->reset(scenario, seed)) obs.push_back(to_json(o));
      reply(ack(e, code::kOk, {{"scenario", scenario}, {"agents", s->env->agents()}, {"step", 0}, {"observations", obs}}));
    } else if (e.type == msg::kEnvStep) {
      const json& a = e.payload.at("actions");
      if (!a.is_object()) throw ConfigError("'actions' must map agent ids to -1, 0 or +1");
      std::map<std::string, int> actions;
      for (const auto& [agent, v] : a.items()) {
        if (!v.is_number_integer()) throw ConfigError("action for '" + agent + "' must be an integer");
        actions[agent] = v.get<int>();
      }
      reply(ack(e, code::kOk, to_json(s->env->step(actions))));
    } else {
      reply(error(e, code::kBadRequest, "trainers may send ENV_RESET and ENV_STEP only"));
    }
  } catch (const NotFoundError& ex) {
    reply(error(e, code::kNotFound, ex.what()));
  } catch (const StateError& ex) {
    reply(error(e, code::kInvalidState, ex.what()));
  } catch (const ConfigError& ex) {
    reply(error(e, code::kBadRequest, ex.what()));
  } catch (const nlohmann::json::exception& ex) {
    reply(error(e, code::kBadRequest, ex.what()));
  }
}

}  // namespace scaletwin
