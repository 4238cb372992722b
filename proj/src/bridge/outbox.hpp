#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>

namespace scaletwin {

using Message = std::shared_ptr<const std::string>;

/// Per-client send queue. Pushes never block beyond a short lock. Keyed
/// entries coalesce: a newer message replaces a queued one with the same key
/// in place (latest wins). Unkeyed entries are kept in order up to `capacity`,
/// after which the oldest is discarded. Both count as drops.
class Outbox {
 public:
  explicit Outbox(std::size_t capacity = 4096) : capacity_(capacity) {}

  void push(Message m) { enqueue({}, std::move(m)); }
  void push_latest(const std::string& key, Message m) { enqueue(key, std::move(m)); }

  std::optional<Message> pop() {
    std::lock_guard lock(mutex_);
    if (queue_.empty()) return std::nullopt;
    auto e = std::move(queue_.front());
    queue_.pop_front();
    if (!e->key.empty()) pending_.erase(e->key);
    return std::move(e->message);
  }

  std::size_t size() const {
    std::lock_guard lock(mutex_);
    return queue_.size();
  }
  std::uint64_t dropped() const {
    std::lock_guard lock(mutex_);
    return dropped_;
  }

  /// Called after every push, outside the lock (the transport schedules a write).
  void set_notify(std::function<void()> fn) {
    std::lock_guard lock(mutex_);
    notify_ = std::move(fn);
  }

  /// Ask the transport to close once the queue drains.
  void close_after_flush() {
    {
      std::lock_guard lock(mutex_);
      closing_ = true;
    }
    fire();
  }
  bool closing() const {
    std::lock_guard lock(mutex_);
    return closing_;
  }

 private:
  struct Entry {
    std::string key;
    Message message;
  };

  void enqueue(const std::string& key, Message m) {
    {
      std::lock_guard lock(mutex_);
      if (closing_) return;
      if (auto it = key.empty() ? pending_.end() : pending_.find(key); it != pending_.end()) {
        it->second->message = std::move(m);
        ++dropped_;
      } else {
        if (queue_.size() >= capacity_) {
          if (!queue_.front()->key.empty()) pending_.erase(queue_.front()->key);
          queue_.pop_front();
          ++dropped_;
        }
        queue_.push_back(std::make_shared<Entry>(Entry{key, std::move(m)}));
        if (!key.empty()) pending_[key] = queue_.back();
      }
    }
    fire();
  }

  void fire() {
    std::function<void()> fn;
    {
      std::lock_guard lock(mutex_);
      fn = notify_;
    }
    if (fn) fn();
  }

  mutable std::mutex mutex_;
  std::size_t capacity_;
  std::deque<std::shared_ptr<Entry>> queue_;
  std::unordered_map<std::string, std::shared_ptr<Entry>> pending_;
  std::uint64_t dropped_ = 0;
  bool closing_ = false;
  std::function<void()> notify_;
};

/// Transport-facing side of a message handler: one call per connection event.
class Endpoint {
 public:
  using ClientId = std::uint64_t;
  virtual ~Endpoint() = default;
  virtual ClientId open(std::shared_ptr<Outbox> outbox) = 0;
  virtual void receive(ClientId client, const std::string& text) = 0;
  virtual void close(ClientId client) = 0;
};

}  // namespace scaletwin
