#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>

#include "bridge/outbox.hpp"
#include "bridge/protocol.hpp"

namespace scaletwin {

struct HostPort {
  std::string host = "127.0.0.1";
  std::uint16_t port = 0;
};

/// "host:port", ":port" or "port". Throws ConfigError.
HostPort parse_host_port(const std::string& text, const std::string& default_host = "127.0.0.1");

/// WebSocket server: one text message per protocol message. Each connection
/// gets an Outbox that the endpoint fills; the server drains it with async
/// writes, so a slow peer only ever delays itself.
class WsServer {
 public:
  /// Binds immediately; port 0 picks a free port. Throws NetworkError.
  WsServer(Endpoint& endpoint, const HostPort& bind, std::size_t outbox_capacity = 4096);
  ~WsServer();
  WsServer(const WsServer&) = delete;
  WsServer& operator=(const WsServer&) = delete;

  std::uint16_t port() const;
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Minimal WebSocket client with a background reader.
class WsClient {
 public:
  /// Connects and completes the WebSocket handshake. Throws NetworkError.
  WsClient(const HostPort& server, std::chrono::milliseconds timeout = std::chrono::seconds(5));
  ~WsClient();
  WsClient(const WsClient&) = delete;
  WsClient& operator=(const WsClient&) = delete;

  void send(const std::string& text);
  void send(const Envelope& e) { send(encode(e)); }
  std::optional<std::string> receive(std::chrono::milliseconds timeout);
  /// Next message satisfying `match`; others are discarded. Throws NetworkError on timeout.
  Envelope wait_for(const std::function<bool(const Envelope&)>& match, std::chrono::milliseconds timeout);
  bool connected() const;
  void close();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace scaletwin
