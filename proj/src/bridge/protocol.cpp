#include "bridge/protocol.hpp"

#include <cmath>
#include <limits>

#include "core/errors.hpp"

namespace scaletwin {

using nlohmann::json;

namespace {

json vec3(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

Vec3 vec3_from(const json& j) { return {j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>()}; }

}  // namespace

std::string_view to_string(Role r) {
  switch (r) {
    case Role::kController: return "vehicle-controller";
    case Role::kObserver: return "observer";
    case Role::kScm: return "scm";
    case Role::kUi: return "ui";
    case Role::kTrainer: return "trainer";
  }
  return "?";
}

std::optional<Role> role_from_string(std::string_view s) {
  for (Role r : {Role::kController, Role::kObserver, Role::kScm, Role::kUi, Role::kTrainer})
    if (to_string(r) == s) return r;
  return std::nullopt;
}

std::string_view to_string(DriveMode m) { return m == DriveMode::kManual ? "manual" : "autonomous"; }

std::optional<DriveMode> drive_mode_from_string(std::string_view s) {
  if (s == "manual") return DriveMode::kManual;
  if (s == "autonomous") return DriveMode::kAutonomous;
  return std::nullopt;
}

std::string encode(const Envelope& e) {
  json j = {{"type", e.type}, {"seq", e.seq}, {"timestamp", e.timestamp}, {"payload", e.payload}};
  j["vehicle_id"] = e.vehicle_id.empty() ? json(nullptr) : json(e.vehicle_id);
  return j.dump();
}

Envelope decode(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("malformed JSON: ") + e.what());
  }
  if (!j.is_object()) throw FormatError("message must be a JSON object");
  Envelope e;
  const auto type = j.find("type");
  if (type == j.end() || !type->is_string()) throw FormatError("message needs a string 'type'");
  e.type = type->get<std::string>();
  if (auto v = j.find("vehicle_id"); v != j.end() && !v->is_null()) {
    if (!v->is_string()) throw FormatError("'vehicle_id' must be a string");
    e.vehicle_id = v->get<std::string>();
  }
  if (auto s = j.find("seq"); s != j.end() && !s->is_null()) {
    if (!s->is_number_integer()) throw FormatError("'seq' must be an integer");
    e.seq = s->get<std::int64_t>();
  }
  if (auto t = j.find("timestamp"); t != j.end() && !t->is_null()) {
    if (!t->is_number()) throw FormatError("'timestamp' must be a number");
    e.timestamp = t->get<double>();
  }
  if (auto p = j.find("payload"); p != j.end() && !p->is_null()) {
    if (!p->is_object()) throw FormatError("'payload' must be an object");
    e.payload = *p;
  }
  return e;
}

Envelope ack(const Envelope& request, const char* result, json extra) {
  Envelope e;
  e.type = msg::kAck;
  e.vehicle_id = request.vehicle_id;
  e.seq = request.seq;
  e.timestamp = request.timestamp;
  extra["code"] = result;
  extra["request"] = request.type;
  e.payload = std::move(extra);
  return e;
}

Envelope error(const Envelope& request, const char* result, const std::string& message) {
  Envelope e;
  e.type = msg::kErr;
  e.vehicle_id = request.vehicle_id;
  e.seq = request.seq;
  e.timestamp = request.timestamp;
  e.payload = {{"code", result}, {"request", request.type}, {"message", message}};
  return e;
}

json frame_to_json(const SensorFrame& f) {
  json lidar = json::array();
  for (double r : f.lidar) lidar.push_back(std::isinf(r) ? json(nullptr) : json(r));
  return {{"tick", f.tick},
          {"throttle_fb", f.throttle_fb},
          {"steer_fb", f.steer_fb},
          {"enc_ticks", {f.enc_ticks[0], f.enc_ticks[1]}},
          {"ips", vec3(f.ips)},
          {"imu",
           {{"accel", vec3(f.imu.accel)},
            {"gyro", vec3(f.imu.gyro)},
            {"euler", {f.imu.euler.roll, f.imu.euler.pitch, f.imu.euler.yaw}},
            {"quat", {f.imu.quat.w, f.imu.quat.x, f.imu.quat.y, f.imu.quat.z}}}},
          {"lidar", std::move(lidar)},
          {"collided", f.collided},
          {"command", {{"throttle", f.command.throttle}, {"steering", f.command.steering}, {"seq", f.command.seq}}},
          {"pose", {{"x", f.pose.x}, {"y", f.pose.y}, {"yaw", f.pose.yaw}}},
          {"speed", f.speed},
          {"elements", elements_to_json(f.elements)}};
}

SensorFrame frame_from_json(const json& j, const std::string& vehicle_id) {
  try {
    SensorFrame f;
    f.vehicle_id = vehicle_id;
    f.tick = j.at("tick").get<std::int64_t>();
    f.throttle_fb = j.at("throttle_fb").get<double>();
    f.steer_fb = j.at("steer_fb").get<double>();
    f.enc_ticks = {j.at("enc_ticks").at(0).get<std::int64_t>(), j.at("enc_ticks").at(1).get<std::int64_t>()};
    f.ips = vec3_from(j.at("ips"));
    const json& imu = j.at("imu");
    f.imu.accel = vec3_from(imu.at("accel"));
    f.imu.gyro = vec3_from(imu.at("gyro"));
    f.imu.euler = {imu.at("euler").at(0).get<double>(), imu.at("euler").at(1).get<double>(),
                   imu.at("euler").at(2).get<double>()};
    const json& q = imu.at("quat");
    f.imu.quat = {q.at(0).get<double>(), q.at(1).get<double>(), q.at(2).get<double>(), q.at(3).get<double>()};
    for (const json& r : j.at("lidar"))
      f.lidar.push_back(r.is_null() ? std::numeric_limits<double>::infinity() : r.get<double>());
    f.collided = j.at("collided").get<bool>();
    f.command.vehicle_id = vehicle_id;
    f.command.throttle = j.at("command").at("throttle").get<double>();
    f.command.steering = j.at("command").at("steering").get<double>();
    f.command.seq = j.at("command").at("seq").get<std::int64_t>();
    f.pose = {j.at("pose").at("x").get<double>(), j.at("pose").at("y").get<double>(),
              j.at("pose").at("yaw").get<double>()};
    f.speed = j.at("speed").get<double>();
    f.elements = elements_from_json(j.at("elements"));
    return f;
  } catch (const json::exception& e) {
    throw FormatError(std::string("bad frame payload: ") + e.what());
  }
}

json peers_to_json(const std::vector<PeerState>& peers) {
  json arr = json::array();
  for (const auto& p : peers) {
    arr.push_back({{"vehicle_id", p.vehicle_id},
                   {"position", {p.position.x(), p.position.y()}},
                   {"yaw", p.yaw},
                   {"velocity", p.velocity},
                   {"timestamp", p.timestamp}});
  }
  return {{"peers", std::move(arr)}};
}

std::vector<PeerState> peers_from_json(const json& j) {
  try {
    std::vector<PeerState> out;
    for (const json& p : j.at("peers")) {
      out.push_back({p.at("vehicle_id").get<std::string>(),
                     Vec2(p.at("position").at(0).get<double>(), p.at("position").at(1).get<double>()),
                     p.at("yaw").get<double>(), p.at("velocity").get<double>(), p.at("timestamp").get<double>()});
    }
    return out;
  } catch (const json::exception& e) {
    throw FormatError(std::string("bad peers payload: ") + e.what());
  }
}

json elements_to_json(const std::vector<ElementSnapshot>& elements) {
  json arr = json::array();
  for (const auto& e : elements) {
    arr.push_back({{"id", e.id},
                   {"kind", to_string(e.kind)},
                   {"state", e.kind == ElementKind::kTrafficLight ? json(to_string(e.state)) : json(nullptr)},
                   {"version", e.version},
                   {"pose", {e.pose.x, e.pose.y, e.pose.yaw}},
                   {"detection_radius", e.detection_radius},
                   {"label", e.label}});
  }
  return arr;
}

std::vector<ElementSnapshot> elements_from_json(const json& j) {
  try {
    std::vector<ElementSnapshot> out;
    for (const json& e : j) {
      ElementSnapshot s;
      s.id = e.at("id").get<std::string>();
      const auto kind = element_kind_from_string(e.at("kind").get<std::string>());
      if (!kind) throw FormatError("unknown element kind");
      s.kind = *kind;
      if (!e.at("state").is_null()) {
        const auto st = light_state_from_string(e.at("state").get<std::string>());
        if (!st) throw FormatError("unknown light state");
        s.state = *st;
      }
      s.version = e.at("version").get<std::uint64_t>();
      if (e.contains("pose")) {
        const json& p = e["pose"];
        s.pose = {p.at(0).get<double>(), p.at(1).get<double>(), p.at(2).get<double>()};
      }
      s.detection_radius = e.value("detection_radius", 0.0);
      s.label = e.value("label", "");
      out.push_back(s);
    }
    return out;
  } catch (const json::exception& e) {
    throw FormatError(std::string("bad elements payload: ") + e.what());
  }
}

}  // namespace scaletwin
