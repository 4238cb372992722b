#include "bridge/bridge.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "core/errors.hpp"

namespace scaletwin {

using nlohmann::json;

namespace {

Message make_message(const Envelope& e) { return std::make_shared<const std::string>(encode(e)); }

ActuationCommand zero_command(const std::string& vehicle) {
  ActuationCommand c;
  c.vehicle_id = vehicle;
  return c;
}

bool admin(Role r) { return r == Role::kUi || r == Role::kScm; }

}  // namespace

Bridge::Bridge(World& world, BridgeOptions options)
    : world_(world),
      options_(options),
      recorder_(RecordMeta{world.scene(), world.config(), world.spawns()}) {
  for (const auto& id : world_.vehicle_ids()) {
    vehicle_ids_.insert(id);
    modes_[id] = options_.initial_mode;
  }
  latest_peers_ = world_.peers();
  board_token_ = world_.board().subscribe([this](const ElementChange& ch) {
    const TrafficElement& e = ch.element;
    json p = {{"event", "element"},
              {"id", e.id},
              {"kind", to_string(e.kind)},
              {"state", to_string(e.state)},
              {"previous", to_string(ch.previous)},
              {"version", e.version}};
    broadcast_event(p, world_.time());
  });
}

Bridge::~Bridge() { world_.board().unsubscribe(board_token_); }

Endpoint::ClientId Bridge::open(std::shared_ptr<Outbox> outbox) {
  std::lock_guard lock(mutex_);
  const ClientId id = next_id_++;
  clients_[id].outbox = std::move(outbox);
  return id;
}

void Bridge::close(ClientId id) {
  std::lock_guard lock(mutex_);
  auto it = clients_.find(id);
  if (it == clients_.end()) return;
  departed_drops_ += it->second.outbox->dropped();
  if (it->second.role == Role::kController && it->second.greeted) {
    const std::string& v = it->second.vehicle;
    auto c = controllers_.find(v);
    if (c != controllers_.end() && c->second == id) {
      controllers_.erase(c);
      announce_control(v, false);
      Op op{Op::Kind::kRelease};
      op.command = zero_command(v);
      ops_.push_back(std::move(op));
    }
  }
  clients_.erase(it);
}

void Bridge::send(ClientId id, const Envelope& e) {
  auto it = clients_.find(id);
  if (it != clients_.end()) it->second.outbox->push(make_message(e));
}

void Bridge::reply(ClientId id, const Envelope& e) {
  std::lock_guard lock(mutex_);
  send(id, e);
}

void Bridge::broadcast_event(const json& payload, double timestamp) {
  Envelope e;
  e.type = msg::kScmEvent;
  e.timestamp = timestamp;
  e.payload = payload;
  if (payload.contains("vehicle")) e.vehicle_id = payload["vehicle"].get<std::string>();
  std::lock_guard lock(mutex_);
  broadcast_locked(e);
}

void Bridge::broadcast_locked(const Envelope& e) {
  const Message m = make_message(e);
  for (auto& [id, c] : clients_)
    if (c.greeted && c.events) c.outbox->push(m);
}

void Bridge::announce_control(const std::string& vehicle, bool controlled) {
  Envelope e;
  e.type = msg::kScmEvent;
  e.vehicle_id = vehicle;
  e.timestamp = time_;
  e.payload = {{"event", "control"}, {"vehicle", vehicle}, {"controlled", controlled}};
  broadcast_locked(e);
}

bool Bridge::authorized(Role role, const std::string& client_vehicle, const std::string& vehicle) const {
  const auto m = modes_.find(vehicle);
  if (m == modes_.end()) return false;
  if (role == Role::kController) return client_vehicle == vehicle && m->second == DriveMode::kAutonomous;
  if (role == Role::kUi) return m->second == DriveMode::kManual;
  return false;
}

json Bridge::snapshot() const {
  json vehicles = json::array();
  for (const auto& p : latest_peers_) {
    vehicles.push_back({{"vehicle_id", p.vehicle_id},
                        {"mode", to_string(modes_.at(p.vehicle_id))},
                        {"controlled", controllers_.count(p.vehicle_id) > 0},
                        {"position", {p.position.x(), p.position.y()}},
                        {"yaw", p.yaw},
                        {"velocity", p.velocity},
                        {"timestamp", p.timestamp}});
  }
  return {{"tick", tick_},
          {"timestamp", time_},
          {"dt", world_.dt()},
          {"frame_period", world_.frame_period()},
          {"vehicles", vehicles},
          {"elements", elements_to_json(world_.elements())}};
}

void Bridge::receive(ClientId id, const std::string& text) {
  Envelope e;
  std::lock_guard lock(mutex_);
  auto it = clients_.find(id);
  if (it == clients_.end()) return;
  Client& c = it->second;
  try {
    e = decode(text);
  } catch (const FormatError& ex) {
    send(id, error(Envelope{}, c.greeted ? code::kBadRequest : code::kBadHandshake, ex.what()));
    if (!c.greeted) c.outbox->close_after_flush();
    return;
  }
  if (!c.greeted) {
    handle_hello(id, c, e);
    return;
  }
  const std::string& t = e.type;
  if (t == msg::kCmd) {
    handle_command(id, c, e);
  } else if (t == msg::kMode) {
    if (!admin(c.role)) return send(id, error(e, code::kForbidden, "mode changes need a ui or scm client"));
    if (!vehicle_ids_.count(e.vehicle_id)) return send(id, error(e, code::kNotFound, "unknown vehicle '" + e.vehicle_id + "'"));
    const auto mode = drive_mode_from_string(e.payload.value("mode", ""));
    if (!mode) return send(id, error(e, code::kBadRequest, "mode must be 'manual' or 'autonomous'"));
    Op op{Op::Kind::kMode, id, e};
    op.mode = *mode;
    ops_.push_back(std::move(op));
  } else if (t == msg::kReset) {
    if (c.role == Role::kObserver) return send(id, error(e, code::kForbidden, "observers cannot reset"));
    ops_.push_back(Op{Op::Kind::kReset, id, e});
  } else if (t == msg::kRecord) {
    if (c.role == Role::kObserver) return send(id, error(e, code::kForbidden, "observers cannot record"));
    const std::string action = e.payload.value("action", "");
    if (action != "start" && action != "stop" && action != "export")
      return send(id, error(e, code::kBadRequest, "action must be start, stop or export"));
    ops_.push_back(Op{Op::Kind::kRecord, id, e});
  } else if (t == msg::kScmEvent) {
    if (!admin(c.role)) return send(id, error(e, code::kForbidden, "element writes need a ui or scm client"));
    const std::string element = e.payload.value("element", "");
    const auto el = world_.board().find(element);
    if (!el) return send(id, error(e, code::kNotFound, "unknown element '" + element + "'"));
    const auto state = light_state_from_string(e.payload.value("state", ""));
    if (el->kind != ElementKind::kTrafficLight || !state || *state == LightState::kNone)
      return send(id, error(e, code::kInvalidState, "invalid state for " + std::string(to_string(el->kind))));
    Op op{Op::Kind::kLight, id, e};
    op.element = element;
    op.state = *state;
    ops_.push_back(std::move(op));
  } else if (t == msg::kHello) {
    send(id, error(e, code::kBadRequest, "already greeted"));
  } else {
    send(id, error(e, code::kBadRequest, "unsupported message type '" + t + "'"));
  }
}

void Bridge::handle_hello(ClientId id, Client& c, const Envelope& e) {
  auto reject = [&](const char* why, const std::string& message) {
    send(id, error(e, why, message));
    c.outbox->close_after_flush();
  };
  if (e.type != msg::kHello) return reject(code::kBadHandshake, "first message must be HELLO");
  const json& p = e.payload;
  const auto role = p.contains("role") && p["role"].is_string() ? role_from_string(p["role"].get<std::string>())
                                                                 : std::nullopt;
  if (!role) return reject(code::kBadHandshake, "HELLO needs a role: vehicle-controller, observer, scm or ui");
  std::string vehicle = e.vehicle_id;
  if (p.contains("vehicle") && p["vehicle"].is_string()) vehicle = p["vehicle"].get<std::string>();
  if (*role == Role::kController) {
    if (!vehicle_ids_.count(vehicle)) return reject(code::kBadHandshake, "unknown vehicle '" + vehicle + "'");
    if (controllers_.count(vehicle)) return reject(code::kControlConflict, "vehicle '" + vehicle + "' already has a controller");
    controllers_[vehicle] = id;
    c.vehicle = vehicle;
    c.vehicles = {vehicle};
  }
  c.role = *role;
  c.frames = c.role != Role::kScm;
  c.peers = c.role != Role::kController || options_.v2v;
  c.events = true;
  if (p.contains("subscribe")) {
    if (!p["subscribe"].is_array()) return reject(code::kBadHandshake, "'subscribe' must be an array");
    c.frames = c.peers = c.events = false;
    for (const auto& s : p["subscribe"]) {
      const std::string name = s.is_string() ? s.get<std::string>() : "";
      if (name == "frames") c.frames = true;
      else if (name == "peers") c.peers = true;
      else if (name == "events") c.events = true;
      else return reject(code::kBadHandshake, "unknown subscription '" + name + "'");
    }
  }
  if (p.contains("vehicles")) {
    if (!p["vehicles"].is_array()) return reject(code::kBadHandshake, "'vehicles' must be an array");
    c.vehicles.clear();
    for (const auto& v : p["vehicles"]) {
      if (!v.is_string() || !vehicle_ids_.count(v.get<std::string>()))
        return reject(code::kBadHandshake, "unknown vehicle in 'vehicles'");
      c.vehicles.insert(v.get<std::string>());
    }
  }
  c.greeted = true;
  json extra = {{"client_id", id}, {"role", to_string(c.role)}, {"snapshot", snapshot()}};
  if (!c.vehicle.empty()) extra["vehicle"] = c.vehicle;
  send(id, ack(e, code::kOk, std::move(extra)));
  if (c.role == Role::kController) announce_control(c.vehicle, true);
}

void Bridge::handle_command(ClientId id, Client& c, const Envelope& e) {
  const std::string vehicle = e.vehicle_id.empty() ? c.vehicle : e.vehicle_id;
  if (!vehicle_ids_.count(vehicle)) return send(id, error(e, code::kNotFound, "unknown vehicle '" + vehicle + "'"));
  if (!authorized(c.role, c.vehicle, vehicle))
    return send(id, error(e, code::kNotController, "client does not control '" + vehicle + "' in its current mode"));
  const json& p = e.payload;
  auto field = [&](const char* name) -> std::optional<double> {
    if (!p.contains(name)) return 0.0;
    if (!p[name].is_number()) return std::nullopt;
    return p[name].get<double>();
  };
  const auto throttle = field("throttle"), steering = field("steering");
  if (!throttle || !steering || !std::isfinite(*throttle) || !std::isfinite(*steering))
    return send(id, error(e, code::kBadRequest, "throttle and steering must be numbers"));
  auto last = c.last_seq.find(vehicle);
  if (last != c.last_seq.end() && e.seq <= last->second)
    return send(id, ack(e, code::kStale, {{"last_seq", last->second}}));
  c.last_seq[vehicle] = e.seq;

  Op op{Op::Kind::kCommand, id, e};
  op.command.vehicle_id = vehicle;
  op.command.throttle = std::clamp(*throttle, -1.0, 1.0);
  op.command.steering = std::clamp(*steering, -1.0, 1.0);
  op.command.seq = e.seq;
  const bool clamped = op.command.throttle != *throttle || op.command.steering != *steering;
  json extra = {{"throttle", op.command.throttle}, {"steering", op.command.steering}};
  ops_.push_back(std::move(op));
  send(id, ack(e, clamped ? code::kWarnClamped : code::kOk, std::move(extra)));
}

void Bridge::handle_record(const Op& op) {
  const Envelope& e = op.request;
  const std::string action = e.payload.value("action", "");
  if (action == "start") {
    if (recorder_.recording()) return reply(op.client, error(e, code::kRecordingActive, "already recording"));
    recorder_.start(world_.ticks());
    return reply(op.client, ack(e, code::kOk, {{"action", action}, {"tick", world_.ticks()}}));
  }
  if (action == "stop") {
    if (!recorder_.recording()) return reply(op.client, error(e, code::kNotRecording, "not recording"));
    recorder_.stop();
    return reply(op.client, ack(e, code::kOk, {{"action", action}, {"rows", recorder_.rows()}}));
  }
  if (recorder_.recording()) return reply(op.client, error(e, code::kRecordingActive, "stop the recording first"));
  std::string csv;
  try {
    csv = recorder_.export_csv();
  } catch (const StateError& ex) {
    return reply(op.client, error(e, code::kNotRecording, ex.what()));
  }
  json extra = {{"action", action}, {"rows", recorder_.rows()}};
  if (e.payload.contains("path") && e.payload["path"].is_string()) {
    const std::string path = e.payload["path"].get<std::string>();
    std::ofstream out(path, std::ios::binary);
    out << csv;
    if (!out) return reply(op.client, error(e, code::kIoError, "cannot write '" + path + "'"));
    extra["path"] = path;
  } else {
    extra["csv"] = csv;
  }
  reply(op.client, ack(e, code::kOk, std::move(extra)));
}

void Bridge::submit_command(const ActuationCommand& command) {
  if (!vehicle_ids_.count(command.vehicle_id)) throw NotFoundError("unknown vehicle '" + command.vehicle_id + "'");
  if (!std::isfinite(command.throttle) || !std::isfinite(command.steering))
    throw ConfigError("throttle and steering must be finite");
  Op op{Op::Kind::kHostCommand};
  op.command = command;
  op.command.throttle = std::clamp(command.throttle, -1.0, 1.0);
  op.command.steering = std::clamp(command.steering, -1.0, 1.0);
  std::lock_guard lock(mutex_);
  ops_.push_back(std::move(op));
}

void Bridge::submit_light(const std::string& element, LightState state) {
  const auto el = world_.board().find(element);
  if (!el) throw NotFoundError("unknown element '" + element + "'");
  if (el->kind != ElementKind::kTrafficLight || state == LightState::kNone)
    throw StateError("invalid state for " + std::string(to_string(el->kind)) + " '" + element + "'");
  Op op{Op::Kind::kLight};
  op.element = element;
  op.state = state;
  std::lock_guard lock(mutex_);
  ops_.push_back(std::move(op));
}

TickOutput Bridge::tick() {
  std::vector<Op> ops;
  {
    std::lock_guard lock(mutex_);
    ops.swap(ops_);
  }
  std::map<std::string, ActuationCommand> staged;
  for (const Op& op : ops) {
    switch (op.kind) {
      case Op::Kind::kCommand: {
        std::lock_guard lock(mutex_);
        auto c = clients_.find(op.client);
        if (c == clients_.end() || !authorized(c->second.role, c->second.vehicle, op.command.vehicle_id)) break;
        staged[op.command.vehicle_id] = op.command;
        break;
      }
      case Op::Kind::kHostCommand: staged[op.command.vehicle_id] = op.command; break;
      case Op::Kind::kRelease: {
        std::lock_guard lock(mutex_);
        const std::string& v = op.command.vehicle_id;
        if (modes_[v] == DriveMode::kAutonomous && !controllers_.count(v)) staged[v] = op.command;
        break;
      }
      case Op::Kind::kMode: {
        const std::string& v = op.request.vehicle_id;
        bool changed;
        {
          std::lock_guard lock(mutex_);
          changed = modes_[v] != op.mode;
          modes_[v] = op.mode;
        }
        if (changed) {
          // Authority moves at this boundary; nobody's stale command survives it.
          staged[v] = zero_command(v);
          broadcast_event({{"event", "mode"}, {"vehicle", v}, {"mode", to_string(op.mode)}}, world_.time());
        }
        reply(op.client, ack(op.request, code::kOk, {{"mode", to_string(op.mode)}, {"changed", changed}}));
        break;
      }
      case Op::Kind::kLight: {
        try {
          const TrafficElement el = world_.board().set_state(op.element, op.state);
          recorder_.log_light(world_.ticks(), op.element, op.state);
          reply(op.client, ack(op.request, code::kOk,
                               {{"element", el.id}, {"state", to_string(el.state)}, {"version", el.version}}));
        } catch (const Error& ex) {
          reply(op.client, error(op.request, code::kInvalidState, ex.what()));
        }
        break;
      }
      case Op::Kind::kReset: {
        world_.reset();
        recorder_.begin_segment();
        staged.clear();
        broadcast_event({{"event", "reset"}}, world_.time());
        reply(op.client, ack(op.request, code::kOk));
        break;
      }
      case Op::Kind::kRecord: handle_record(op); break;
    }
  }
  for (const auto& [v, cmd] : staged) {
    world_.set_command(cmd);
    recorder_.log_command(world_.ticks(), cmd);
  }
  TickOutput out = world_.step();
  recorder_.add_frames(out.frames);
  publish(out);
  return out;
}

void Bridge::publish(const TickOutput& out) {
  std::map<std::string, Message> frames;
  for (const SensorFrame& f : out.frames) {
    Envelope e;
    e.type = msg::kFrame;
    e.vehicle_id = f.vehicle_id;
    e.seq = f.tick;
    e.timestamp = f.timestamp;
    e.payload = frame_to_json(f);
    frames[f.vehicle_id] = make_message(e);
  }
  Envelope pe;
  pe.type = msg::kPeers;
  pe.seq = out.tick;
  pe.timestamp = out.timestamp;
  pe.payload = peers_to_json(out.peers);
  const Message all_peers = make_message(pe);

  std::lock_guard lock(mutex_);
  latest_peers_ = out.peers;
  tick_ = out.tick;
  time_ = out.timestamp;
  ++stats_.ticks;
  std::map<std::string, Message> others;  // per-controller peer lists, built on demand
  for (auto& [id, c] : clients_) {
    if (!c.greeted) continue;
    if (c.frames) {
      for (const auto& [v, m] : frames) {
        if (!c.vehicles.empty() && !c.vehicles.count(v)) continue;
        c.outbox->push_latest("FRAME/" + v, m);
        ++stats_.frames_published;
      }
    }
    if (!c.peers) continue;
    if (c.role != Role::kController) {
      c.outbox->push_latest("PEERS", all_peers);
      continue;
    }
    auto& m = others[c.vehicle];
    if (!m) {
      std::vector<PeerState> rest;
      for (const auto& p : out.peers)
        if (p.vehicle_id != c.vehicle) rest.push_back(p);
      Envelope e = pe;
      e.vehicle_id = c.vehicle;
      e.payload = peers_to_json(rest);
      m = make_message(e);
    }
    c.outbox->push_latest("PEERS", m);
  }
}

DriveMode Bridge::mode(const std::string& vehicle) const {
  std::lock_guard lock(mutex_);
  auto it = modes_.find(vehicle);
  if (it == modes_.end()) throw NotFoundError("unknown vehicle '" + vehicle + "'");
  return it->second;
}

std::optional<Endpoint::ClientId> Bridge::controller(const std::string& vehicle) const {
  std::lock_guard lock(mutex_);
  auto it = controllers_.find(vehicle);
  if (it == controllers_.end()) return std::nullopt;
  return it->second;
}

std::size_t Bridge::pending_ops() const {
  std::lock_guard lock(mutex_);
  return ops_.size();
}

BridgeStats Bridge::stats() const {
  std::lock_guard lock(mutex_);
  BridgeStats s = stats_;
  s.clients = clients_.size();
  s.messages_dropped = departed_drops_;
  for (const auto& [id, c] : clients_) s.messages_dropped += c.outbox->dropped();
  return s;
}

}  // namespace scaletwin
