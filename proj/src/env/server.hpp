#pragma once

#include <map>
#include <memory>
#include <mutex>

#include <nlohmann/json.hpp>

#include "bridge/outbox.hpp"
#include "env/env.hpp"

namespace scaletwin {

nlohmann::json to_json(const AgentObservation& o);
AgentObservation observation_from_json(const nlohmann::json& j);
nlohmann::json to_json(const EnvStepResult& r);

/// Serves ENV_RESET / ENV_STEP to trainer clients. Every connection owns an
/// independent environment, so trainers never share state. Requests are
/// answered synchronously with ACK or ERR.
class EnvServer : public Endpoint {
 public:
  EnvServer(Scene scene, EnvConfig config);

  ClientId open(std::shared_ptr<Outbox> outbox) override;
  void receive(ClientId client, const std::string& text) override;
  void close(ClientId client) override;
  std::size_t sessions() const;

 private:
  struct Session {
    std::shared_ptr<Outbox> outbox;
    bool greeted = false;
    std::unique_ptr<IntersectionEnv> env;
    std::mutex mutex;
  };

  Scene scene_;
  EnvConfig config_;
  mutable std::mutex mutex_;
  std::map<ClientId, std::shared_ptr<Session>> sessions_;
  ClientId next_id_ = 1;
};

}  // namespace scaletwin
