#include "scm/database.hpp"

#include <algorithm>

#include "core/errors.hpp"

namespace scaletwin {

using nlohmann::json;

ScmDatabase::ScmDatabase(std::size_t log_capacity) : log_capacity_(std::max<std::size_t>(1, log_capacity)) {}

void ScmDatabase::observe_time(double t) {
  if (t < time_) offset_ += time_;  // the world was reset
  time_ = t;
}

void ScmDatabase::log(double t, const std::string& entity, json change) {
  log_.push_back({next_index_++, offset_ + t, t, entity, std::move(change)});
  while (log_.size() > log_capacity_) log_.pop_front();
}

void ScmDatabase::load_snapshot(const json& s) {
  std::map<std::string, VehicleRecord> vehicles;
  try {
    for (const json& v : s.at("vehicles")) {
      VehicleRecord r;
      r.state.vehicle_id = v.at("vehicle_id").get<std::string>();
      r.state.position = Vec2(v.at("position").at(0).get<double>(), v.at("position").at(1).get<double>());
      r.state.yaw = v.at("yaw").get<double>();
      r.state.velocity = v.at("velocity").get<double>();
      r.state.timestamp = v.at("timestamp").get<double>();
      const auto mode = drive_mode_from_string(v.at("mode").get<std::string>());
      if (!mode) throw FormatError("snapshot: bad mode");
      r.mode = *mode;
      r.controlled = v.at("controlled").get<bool>();
      vehicles[r.state.vehicle_id] = r;
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("snapshot: ") + e.what());
  }
  std::map<std::string, ElementSnapshot> elements;
  for (auto& e : elements_from_json(s.at("elements"))) elements[e.id] = e;

  std::lock_guard lock(mutex_);
  // A version never goes backwards, even if the snapshot raced a newer event.
  for (auto& [id, e] : elements) {
    auto old = elements_.find(id);
    if (old != elements_.end() && old->second.version > e.version) e = old->second;
  }
  vehicles_ = std::move(vehicles);
  elements_ = std::move(elements);
  tick_ = s.value("tick", std::int64_t{0});
  observe_time(s.value("timestamp", 0.0));
  stale_ = false;
  if (synced_) ++resyncs_;
  synced_ = true;
  log(time_, "world", {{"event", "resync"}, {"tick", tick_}});
}

void ScmDatabase::apply(const Envelope& e) {
  if (e.type == msg::kPeers) {
    std::vector<PeerState> peers = peers_from_json(e.payload);
    std::lock_guard lock(mutex_);
    tick_ = e.seq;
    observe_time(e.timestamp);
    for (auto& p : peers) vehicles_[p.vehicle_id].state = std::move(p);
    return;
  }
  if (e.type != msg::kScmEvent) return;
  const json& p = e.payload;
  const std::string event = p.value("event", "");
  std::lock_guard lock(mutex_);
  observe_time(e.timestamp);
  if (event == "element") {
    const std::string id = p.value("id", "");
    auto it = elements_.find(id);
    const std::uint64_t version = p.value("version", std::uint64_t{0});
    if (it == elements_.end() || version <= it->second.version) return;
    const auto state = light_state_from_string(p.value("state", ""));
    if (!state) return;
    it->second.state = *state;
    it->second.version = version;
    log(e.timestamp, id, p);
  } else if (event == "mode") {
    const std::string v = p.value("vehicle", "");
    const auto mode = drive_mode_from_string(p.value("mode", ""));
    if (!mode || !vehicles_.count(v)) return;
    vehicles_[v].mode = *mode;
    log(e.timestamp, v, p);
  } else if (event == "control") {
    const std::string v = p.value("vehicle", "");
    if (!vehicles_.count(v)) return;
    vehicles_[v].controlled = p.value("controlled", false);
    log(e.timestamp, v, p);
  } else if (event == "reset") {
    log(e.timestamp, "world", p);
  }
}

void ScmDatabase::mark_stale() {
  std::lock_guard lock(mutex_);
  if (stale_) return;
  stale_ = true;
  log(time_, "world", {{"event", "stale"}});
}

bool ScmDatabase::stale() const {
  std::lock_guard lock(mutex_);
  return stale_;
}

bool ScmDatabase::synced() const {
  std::lock_guard lock(mutex_);
  return synced_;
}

std::int64_t ScmDatabase::tick() const {
  std::lock_guard lock(mutex_);
  return tick_;
}

double ScmDatabase::sim_time() const {
  std::lock_guard lock(mutex_);
  return time_;
}

double ScmDatabase::session_time() const {
  std::lock_guard lock(mutex_);
  return offset_ + time_;
}

std::uint64_t ScmDatabase::resyncs() const {
  std::lock_guard lock(mutex_);
  return resyncs_;
}

std::vector<VehicleRecord> ScmDatabase::vehicles() const {
  std::lock_guard lock(mutex_);
  std::vector<VehicleRecord> out;
  for (const auto& [id, v] : vehicles_) out.push_back(v);
  return out;
}

std::optional<VehicleRecord> ScmDatabase::vehicle(const std::string& id) const {
  std::lock_guard lock(mutex_);
  auto it = vehicles_.find(id);
  if (it == vehicles_.end()) return std::nullopt;
  return it->second;
}

std::vector<ElementSnapshot> ScmDatabase::elements() const {
  std::lock_guard lock(mutex_);
  std::vector<ElementSnapshot> out;
  for (const auto& [id, e] : elements_) out.push_back(e);
  return out;
}

std::optional<ElementSnapshot> ScmDatabase::element(const std::string& id) const {
  std::lock_guard lock(mutex_);
  auto it = elements_.find(id);
  if (it == elements_.end()) return std::nullopt;
  return it->second;
}

std::vector<ScmEvent> ScmDatabase::events_since(double since) const {
  std::lock_guard lock(mutex_);
  auto first = std::upper_bound(log_.begin(), log_.end(), since,
                                [](double t, const ScmEvent& e) { return t < e.timestamp; });
  return {first, log_.end()};
}

json to_json(const VehicleRecord& v) {
  return {{"vehicle_id", v.state.vehicle_id},
          {"mode", to_string(v.mode)},
          {"controlled", v.controlled},
          {"position", {v.state.position.x(), v.state.position.y()}},
          {"yaw", v.state.yaw},
          {"velocity", v.state.velocity},
          {"timestamp", v.state.timestamp}};
}

json to_json(const ElementSnapshot& e) {
  return elements_to_json({e}).at(0);
}

json to_json(const ScmEvent& e) {
  return {{"index", e.index}, {"timestamp", e.timestamp}, {"sim_time", e.sim_time}, {"entity", e.entity},
          {"change", e.change}};
}

}  // namespace scaletwin
