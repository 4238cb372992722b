#pragma once

#include <atomic>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "bridge/ws.hpp"
#include "scm/database.hpp"
#include "scm/planner.hpp"

namespace scaletwin {

struct ScmPilotOptions {
  HostPort server;
  std::string vehicle;
  std::vector<Vec2> path;
  std::vector<BehaviorRule> rules;
  FollowerParams params;
};

/// Drives one vehicle as its controller: every FRAME for that vehicle yields
/// one CMD from pilot_step() over the database's element states. While the
/// database is stale it commands a stop.
class ScmPilot {
 public:
  /// Connects and claims the vehicle. Throws NetworkError.
  ScmPilot(const ScmDatabase& db, ScmPilotOptions options);
  ~ScmPilot();
  ScmPilot(const ScmPilot&) = delete;
  ScmPilot& operator=(const ScmPilot&) = delete;

  bool done() const { return done_; }
  std::uint64_t commands_sent() const { return sent_; }
  PilotStep last() const;
  void stop();

 private:
  void run();

  const ScmDatabase& db_;
  ScmPilotOptions options_;
  WsClient ws_;
  std::atomic<bool> stopping_{false};
  std::atomic<bool> done_{false};
  std::atomic<std::uint64_t> sent_{0};
  mutable std::mutex mutex_;
  PilotStep last_;
  std::thread thread_;
};

}  // namespace scaletwin
