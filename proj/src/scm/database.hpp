#pragma once

#include <cstdint>
#include <deque>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "bridge/protocol.hpp"
#include "world/world.hpp"

namespace scaletwin {

struct VehicleRecord {
  PeerState state;
  DriveMode mode = DriveMode::kAutonomous;
  bool controlled = false;
};

/// One change observed on the bridge. `timestamp` is session time: simulation
/// time plus the length of every segment before the latest reset, so the log
/// stays ordered across resets.
struct ScmEvent {
  std::uint64_t index = 0;
  double timestamp = 0.0;
  double sim_time = 0.0;
  std::string entity;  // element id, vehicle id or "world"
  nlohmann::json change;
};

/// Registry mirrored from bridge traffic. One writer (the sync loop), any
/// number of readers; every accessor returns a consistent copy.
class ScmDatabase {
 public:
  explicit ScmDatabase(std::size_t log_capacity = 100000);

  /// Replaces all state with a HELLO snapshot and clears the stale flag.
  void load_snapshot(const nlohmann::json& snapshot);
  /// Applies PEERS and SCM_EVENT messages; anything else is ignored.
  void apply(const Envelope& e);
  void mark_stale();

  bool stale() const;
  bool synced() const;  // a snapshot has been loaded at least once
  std::int64_t tick() const;
  double sim_time() const;
  double session_time() const;
  std::uint64_t resyncs() const;

  std::vector<VehicleRecord> vehicles() const;
  std::optional<VehicleRecord> vehicle(const std::string& id) const;
  std::vector<ElementSnapshot> elements() const;
  std::optional<ElementSnapshot> element(const std::string& id) const;
  /// Events with timestamp strictly greater than `since`.
  std::vector<ScmEvent> events_since(double since) const;

 private:
  void observe_time(double t);
  void log(double t, const std::string& entity, nlohmann::json change);

  mutable std::mutex mutex_;
  std::size_t log_capacity_;
  std::map<std::string, VehicleRecord> vehicles_;
  std::map<std::string, ElementSnapshot> elements_;
  std::deque<ScmEvent> log_;
  std::uint64_t next_index_ = 0;
  std::int64_t tick_ = 0;
  double time_ = 0.0;
  double offset_ = 0.0;
  bool stale_ = true;
  bool synced_ = false;
  std::uint64_t resyncs_ = 0;
};

nlohmann::json to_json(const VehicleRecord& v);
nlohmann::json to_json(const ElementSnapshot& e);
nlohmann::json to_json(const ScmEvent& e);

}  // namespace scaletwin
