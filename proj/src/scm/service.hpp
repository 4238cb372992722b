#pragma once

#include <functional>
#include <map>
#include <memory>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "bridge/protocol.hpp"
#include "bridge/ws.hpp"
#include "scm/database.hpp"

namespace scaletwin {

struct ScmResponse {
  int status = 200;
  nlohmann::json body = nlohmann::json::object();
};

/// Forwards a write to the bridge and returns its ACK or ERR.
/// Throws NetworkError when no reply arrives.
using ScmRequester = std::function<Envelope(Envelope)>;

/// Monitoring and control API over an ScmDatabase, independent of transport.
///
///   GET  /vehicles, /vehicles/{id}, /elements, /elements/{id}, /events?since=t
///   PUT  /elements/{id}/state  {"state": "red"|"yellow"|"green"}
///   PUT  /vehicles/{id}/mode   {"mode": "manual"|"autonomous"}
///
/// POST is accepted wherever PUT is. Errors carry {"error": {"code", "message"}}
/// with status 400 (malformed), 404 (unknown id or path), 405, 422 (invalid
/// state), 503 (database stale) or 504 (bridge did not answer).
class ScmService {
 public:
  ScmService(const ScmDatabase& db, ScmRequester requester);

  ScmResponse handle(std::string_view method, std::string_view path,
                     const std::multimap<std::string, std::string>& query, std::string_view body) const;

 private:
  ScmResponse forward(Envelope e) const;

  const ScmDatabase& db_;
  ScmRequester requester_;
};

/// HTTP/1.1 front end for an ScmService, served from its own thread.
class ScmHttpServer {
 public:
  /// Binds immediately; port 0 picks a free port. Throws NetworkError.
  ScmHttpServer(const ScmService& service, const HostPort& bind);
  ~ScmHttpServer();
  ScmHttpServer(const ScmHttpServer&) = delete;
  ScmHttpServer& operator=(const ScmHttpServer&) = delete;

  std::uint16_t port() const;
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace scaletwin
