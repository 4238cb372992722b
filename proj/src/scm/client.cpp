#include "scm/client.hpp"

#include <algorithm>

#include "core/errors.hpp"

namespace scaletwin {

ScmClient::ScmClient(ScmDatabase& db, ScmClientOptions options) : db_(db), options_(std::move(options)) {
  thread_ = std::thread([this] { run(); });
}

ScmClient::~ScmClient() { stop(); }

void ScmClient::stop() {
  stopping_ = true;
  cv_.notify_all();
  drop();
  if (thread_.joinable()) thread_.join();
}

void ScmClient::drop() {
  std::shared_ptr<WsClient> ws;
  {
    std::lock_guard lock(mutex_);
    ws = ws_;
  }
  if (ws) ws->close();
}

void ScmClient::fail_pending() {
  std::lock_guard lock(mutex_);
  for (auto& [seq, p] : pending_) p->failed = true;
  pending_.clear();
  ws_.reset();
  cv_.notify_all();
}

bool ScmClient::wait_synced(std::chrono::milliseconds timeout) const {
  std::unique_lock lock(mutex_);
  return cv_.wait_for(lock, timeout, [this] { return ws_ && !db_.stale(); });
}

Envelope ScmClient::request(Envelope e, std::chrono::milliseconds timeout) {
  auto slot = std::make_shared<Pending>();
  std::shared_ptr<WsClient> ws;
  {
    std::lock_guard lock(mutex_);
    if (!ws_ || db_.stale()) throw NetworkError("not connected to the bridge");
    ws = ws_;
    e.seq = next_seq_++;
    pending_[e.seq] = slot;
  }
  try {
    ws->send(e);
  } catch (const NetworkError&) {
    std::lock_guard lock(mutex_);
    pending_.erase(e.seq);
    throw;
  }
  std::unique_lock lock(mutex_);
  if (!cv_.wait_for(lock, timeout, [&] { return slot->reply || slot->failed; })) {
    pending_.erase(e.seq);
    throw NetworkError("timed out waiting for the bridge to acknowledge " + e.type);
  }
  if (!slot->reply) throw NetworkError("bridge connection lost before " + e.type + " was acknowledged");
  return *slot->reply;
}

void ScmClient::run() {
  auto backoff = options_.backoff_min;
  while (!stopping_) {
    std::shared_ptr<WsClient> ws;
    try {
      ws = std::make_shared<WsClient>(options_.server, options_.connect_timeout);
      Envelope hello;
      hello.type = msg::kHello;
      hello.payload = {{"role", "scm"}};
      ws->send(hello);
      const Envelope ack = ws->wait_for([](const Envelope& e) { return e.type == msg::kAck || e.type == msg::kErr; },
                                        options_.connect_timeout);
      if (ack.type != msg::kAck) throw NetworkError("bridge refused the scm handshake");
      db_.load_snapshot(ack.payload.at("snapshot"));
      {
        std::lock_guard lock(mutex_);
        ws_ = ws;
      }
      ++connections_;
      cv_.notify_all();
      backoff = options_.backoff_min;

      while (!stopping_ && ws->connected()) {
        auto text = ws->receive(std::chrono::milliseconds(50));
        if (!text) continue;
        Envelope e;
        try {
          e = decode(*text);
        } catch (const FormatError&) {
          continue;
        }
        if (e.type == msg::kAck || e.type == msg::kErr) {
          std::lock_guard lock(mutex_);
          auto it = pending_.find(e.seq);
          if (it != pending_.end()) {
            it->second->reply = std::move(e);
            pending_.erase(it);
            cv_.notify_all();
          }
          continue;
        }
        db_.apply(e);
      }
    } catch (const std::exception&) {
      // Connection failed or broke mid-handshake; retry below.
    }
    db_.mark_stale();
    fail_pending();
    if (ws) ws->close();
    if (stopping_) break;
    std::unique_lock lock(mutex_);
    cv_.wait_for(lock, backoff, [this] { return stopping_.load(); });
    backoff = std::min(backoff * 2, options_.backoff_max);
  }
}

}  // namespace scaletwin
