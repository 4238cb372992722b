#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <thread>

#include "bridge/protocol.hpp"
#include "bridge/ws.hpp"
#include "scm/database.hpp"

namespace scaletwin {

struct ScmClientOptions {
  HostPort server;
  std::chrono::milliseconds connect_timeout{2000};
  std::chrono::milliseconds backoff_min{50};
  std::chrono::milliseconds backoff_max{2000};
};

/// Keeps an ScmDatabase in sync with a bridge over WebSocket. Every
/// (re)connection starts with a HELLO whose snapshot replaces the database;
/// a dropped connection marks the database stale until the next snapshot.
class ScmClient {
 public:
  ScmClient(ScmDatabase& db, ScmClientOptions options);
  ~ScmClient();
  ScmClient(const ScmClient&) = delete;
  ScmClient& operator=(const ScmClient&) = delete;

  /// Sends `e` with a fresh seq and waits for the matching ACK or ERR.
  /// Throws NetworkError when disconnected or on timeout.
  Envelope request(Envelope e, std::chrono::milliseconds timeout);
  bool wait_synced(std::chrono::milliseconds timeout) const;
  /// Drops the current connection; the sync loop reconnects on its own.
  void drop();
  void stop();
  std::uint64_t connections() const { return connections_; }

 private:
  struct Pending {
    std::optional<Envelope> reply;
    bool failed = false;
  };

  void run();
  void fail_pending();

  ScmDatabase& db_;
  ScmClientOptions options_;
  std::atomic<bool> stopping_{false};
  std::atomic<std::uint64_t> connections_{0};

  mutable std::mutex mutex_;
  mutable std::condition_variable cv_;
  std::shared_ptr<WsClient> ws_;
  std::int64_t next_seq_ = 1;
  std::map<std::int64_t, std::shared_ptr<Pending>> pending_;
  std::thread thread_;
};

}  // namespace scaletwin
