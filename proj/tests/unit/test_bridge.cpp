#include <cmath>

#include "bridge/bridge.hpp"
#include "core/errors.hpp"
#include "doctest.h"

using namespace scaletwin;
using nlohmann::json;

namespace {

const std::string kScenes = SCALETWIN_SOURCE_DIR "/scenes/";

struct Fake {
  Bridge& bridge;
  std::shared_ptr<Outbox> outbox = std::make_shared<Outbox>(64);
  Endpoint::ClientId id;

  explicit Fake(Bridge& b) : bridge(b), id(b.open(outbox)) {}

  void send(const std::string& type, const std::string& vehicle, json payload, std::int64_t seq = 0) {
    Envelope e;
    e.type = type;
    e.vehicle_id = vehicle;
    e.seq = seq;
    e.payload = std::move(payload);
    bridge.receive(id, encode(e));
  }
  std::vector<Envelope> drain() {
    std::vector<Envelope> out;
    while (auto m = outbox->pop()) out.push_back(decode(**m));
    return out;
  }
  std::vector<Envelope> drain(const std::string& type) {
    std::vector<Envelope> out;
    for (auto& e : drain())
      if (e.type == type) out.push_back(e);
    return out;
  }
  Envelope last(const std::string& type) {
    auto all = drain(type);
    REQUIRE_FALSE(all.empty());
    return all.back();
  }
  void hello(const std::string& role, const std::string& vehicle = "", json extra = json::object()) {
    extra["role"] = role;
    if (!vehicle.empty()) extra["vehicle"] = vehicle;
    send(msg::kHello, "", extra);
  }
};

struct Setup {
  Scene scene = load_scene_file(kScenes + "tiny_town.json");
  World world;
  Bridge bridge;

  explicit Setup(int vehicles = 1, WorldConfig cfg = {})
      : world(scene, cfg, spawns(vehicles)), bridge(world) {}

  std::vector<VehicleSpawn> spawns(int n) {
    std::vector<VehicleSpawn> v{{"V1", scene.spawn("depot").pose}};
    if (n > 1) v.push_back({"V2", scene.spawn("west_gate").pose});
    return v;
  }
  void run(int n) {
    for (int i = 0; i < n; ++i) bridge.tick();
  }
};

std::string code_of(const Envelope& e) { return e.payload.value("code", ""); }

}  // namespace

TEST_CASE("handshake and single-controller rule") {
  Setup s;
  Fake a(s.bridge), b(s.bridge), c(s.bridge), d(s.bridge);
  a.hello("vehicle-controller", "V1");
  Envelope r = a.last(msg::kAck);
  CHECK(code_of(r) == "OK");
  CHECK(r.payload["vehicle"] == "V1");
  CHECK(r.payload["snapshot"]["vehicles"].size() == 1);
  CHECK(s.bridge.controller("V1") == a.id);

  b.hello("vehicle-controller", "V1");
  CHECK(code_of(b.last(msg::kErr)) == "CONTROL_CONFLICT");
  CHECK(b.outbox->closing());

  c.bridge.receive(c.id, "{not json");
  CHECK(code_of(c.last(msg::kErr)) == "BAD_HANDSHAKE");
  CHECK(c.outbox->closing());

  d.send(msg::kCmd, "V1", {{"throttle", 1}});
  CHECK(code_of(d.last(msg::kErr)) == "BAD_HANDSHAKE");

  Fake e(s.bridge);
  e.hello("pilot");
  CHECK(code_of(e.last(msg::kErr)) == "BAD_HANDSHAKE");

  // Releasing control frees the vehicle.
  s.bridge.close(a.id);
  Fake f(s.bridge);
  f.hello("vehicle-controller", "V1");
  CHECK(code_of(f.last(msg::kAck)) == "OK");
}

TEST_CASE("frames follow the sensor cadence, observers join mid-run") {
  Setup s;
  Fake ctl(s.bridge);
  ctl.hello("vehicle-controller", "V1");
  ctl.drain();
  std::vector<Envelope> frames;
  for (int i = 0; i < 140; ++i) {
    s.bridge.tick();
    for (auto& f : ctl.drain(msg::kFrame)) frames.push_back(f);
  }
  REQUIRE(frames.size() == 10);
  for (std::size_t i = 1; i < frames.size(); ++i) CHECK(frames[i].timestamp > frames[i - 1].timestamp);
  CHECK(frames[0].payload["lidar"].size() == 360);

  Fake obs(s.bridge);
  obs.hello("observer");
  obs.drain();
  s.run(14);
  const auto got = obs.drain(msg::kFrame);
  REQUIRE(got.size() == 1);
  CHECK(got[0].seq == 154);
}

TEST_CASE("each controller gets one peer state per other vehicle per tick") {
  Setup s(2);
  Fake a(s.bridge), b(s.bridge), o(s.bridge);
  a.hello("vehicle-controller", "V1");
  b.hello("vehicle-controller", "V2");
  o.hello("observer");
  a.drain(), b.drain(), o.drain();
  for (int i = 0; i < 20; ++i) {
    s.bridge.tick();
    const auto pa = a.drain(msg::kPeers), pb = b.drain(msg::kPeers), po = o.drain(msg::kPeers);
    REQUIRE(pa.size() == 1);
    REQUIRE(pb.size() == 1);
    REQUIRE(po.size() == 1);
    const auto la = peers_from_json(pa[0].payload), lb = peers_from_json(pb[0].payload);
    REQUIRE(la.size() == 1);
    REQUIRE(lb.size() == 1);
    CHECK(la[0].vehicle_id == "V2");
    CHECK(lb[0].vehicle_id == "V1");
    CHECK(la[0].timestamp == pa[0].timestamp);
    CHECK(peers_from_json(po[0].payload).size() == 2);
  }
}

TEST_CASE("command intake") {
  Setup s;
  Fake ctl(s.bridge), obs(s.bridge);
  ctl.hello("vehicle-controller", "V1");
  obs.hello("observer");
  ctl.drain(), obs.drain();

  ctl.send(msg::kCmd, "V1", {{"throttle", 0.8}, {"steering", 0.0}}, 1);
  CHECK(code_of(ctl.last(msg::kAck)) == "OK");
  s.bridge.tick();
  CHECK(s.world.state("V1").throttle == 0.8);

  ctl.send(msg::kCmd, "V1", {{"throttle", 1.7}, {"steering", -3.0}}, 2);
  const Envelope clamped = ctl.last(msg::kAck);
  CHECK(code_of(clamped) == "WARN_CLAMPED");
  CHECK(clamped.payload["throttle"] == 1.0);
  CHECK(clamped.payload["steering"] == -1.0);
  s.bridge.tick();
  CHECK(s.world.state("V1").throttle == 1.0);

  ctl.send(msg::kCmd, "V1", {{"throttle", 0.1}}, 2);
  CHECK(code_of(ctl.last(msg::kAck)) == "STALE");
  s.bridge.tick();
  CHECK(s.world.state("V1").throttle == 1.0);

  obs.send(msg::kCmd, "V1", {{"throttle", 0.5}}, 9);
  CHECK(code_of(obs.last(msg::kErr)) == "NOT_CONTROLLER");

  ctl.send(msg::kCmd, "V1", {{"throttle", "fast"}}, 10);
  CHECK(code_of(ctl.last(msg::kErr)) == "BAD_REQUEST");

  // Latest wins within one tick.
  ctl.send(msg::kCmd, "V1", {{"throttle", 0.2}}, 11);
  ctl.send(msg::kCmd, "V1", {{"throttle", 0.3}}, 12);
  s.bridge.tick();
  CHECK(s.world.state("V1").throttle == 0.3);
}

TEST_CASE("mode switching") {
  Setup s;
  Fake ctl(s.bridge), ui(s.bridge), obs(s.bridge);
  ctl.hello("vehicle-controller", "V1");
  ui.hello("ui");
  obs.hello("observer");
  ctl.drain(), ui.drain(), obs.drain();

  ctl.send(msg::kCmd, "V1", {{"throttle", 0.9}}, 1);
  s.bridge.tick();
  CHECK(s.world.state("V1").throttle == 0.9);

  ui.send(msg::kCmd, "V1", {{"throttle", 0.4}}, 1);
  CHECK(code_of(ui.last(msg::kErr)) == "NOT_CONTROLLER");
  obs.send(msg::kMode, "V1", {{"mode", "manual"}});
  CHECK(code_of(obs.last(msg::kErr)) == "FORBIDDEN");
  ui.send(msg::kMode, "V9", {{"mode", "manual"}});
  CHECK(code_of(ui.last(msg::kErr)) == "NOT_FOUND");

  ui.send(msg::kMode, "V1", {{"mode", "manual"}});
  CHECK(ui.drain(msg::kAck).empty());  // acknowledged at the tick boundary
  s.bridge.tick();
  CHECK(code_of(ui.last(msg::kAck)) == "OK");
  CHECK(s.bridge.mode("V1") == DriveMode::kManual);
  CHECK(s.world.state("V1").throttle == 0.0);
  ctl.send(msg::kCmd, "V1", {{"throttle", 0.9}}, 2);
  CHECK(code_of(ctl.last(msg::kErr)) == "NOT_CONTROLLER");
  ui.send(msg::kCmd, "V1", {{"throttle", 0.4}}, 2);
  s.bridge.tick();
  CHECK(s.world.state("V1").throttle == 0.4);

  ui.send(msg::kMode, "V1", {{"mode", "manual"}});
  s.bridge.tick();
  const Envelope same = ui.last(msg::kAck);
  CHECK(code_of(same) == "OK");
  CHECK(same.payload["changed"] == false);
  CHECK(s.world.state("V1").throttle == 0.4);

  // Back to autonomous with the controller gone: the vehicle holds zero.
  s.bridge.close(ctl.id);
  ui.send(msg::kMode, "V1", {{"mode", "autonomous"}});
  s.run(5);
  CHECK(s.world.state("V1").throttle == 0.0);
  CHECK(s.world.held_command("V1").throttle == 0.0);
}

TEST_CASE("controller disconnect fails safe") {
  Setup s;
  {
    Fake ctl(s.bridge);
    ctl.hello("vehicle-controller", "V1");
    ctl.send(msg::kCmd, "V1", {{"throttle", 1.0}}, 1);
    s.run(3);
    CHECK(s.world.state("V1").throttle == 1.0);
    s.bridge.close(ctl.id);
  }
  s.run(1);
  CHECK(s.world.state("V1").throttle == 0.0);
}

TEST_CASE("reset and recording over the protocol") {
  Setup s;
  Fake ctl(s.bridge), ui(s.bridge);
  ctl.hello("vehicle-controller", "V1");
  ui.hello("ui");
  ctl.drain(), ui.drain();

  ui.send(msg::kRecord, "", {{"action", "export"}});
  s.run(1);
  CHECK(code_of(ui.last(msg::kErr)) == "NOT_RECORDING");
  ui.send(msg::kRecord, "", {{"action", "start"}});
  s.run(1);
  CHECK(code_of(ui.last(msg::kAck)) == "OK");
  ui.send(msg::kRecord, "", {{"action", "export"}});
  s.run(1);
  CHECK(code_of(ui.last(msg::kErr)) == "RECORDING_ACTIVE");

  ctl.send(msg::kCmd, "V1", {{"throttle", 1.0}, {"steering", 0.5}}, 1);
  s.run(200);
  ui.send(msg::kReset, "", json::object());
  s.run(1);
  CHECK(code_of(ui.last(msg::kAck)) == "OK");
  ctl.send(msg::kCmd, "V1", {{"throttle", 0.6}}, 2);
  s.run(100);
  ui.send(msg::kRecord, "", {{"action", "stop"}});
  ui.send(msg::kRecord, "", {{"action", "export"}});
  s.run(1);
  const Envelope exported = ui.last(msg::kAck);
  REQUIRE(exported.payload.contains("csv"));
  const std::string csv = exported.payload["csv"];
  CHECK(csv.find("#segment,1,0") != std::string::npos);
  const ReplayReport rep = replay_record(csv);
  CHECK(rep.max_deviation == 0.0);
  CHECK(rep.byte_identical);

  // Reset restores the freshly-loaded state exactly.
  ui.send(msg::kReset, "", json::object());
  ui.send(msg::kReset, "", json::object());
  s.run(1);
  World fresh(s.scene, WorldConfig{}, s.spawns(1));
  fresh.step();
  const auto& a = s.world.state("V1").chassis;
  const auto& b = fresh.state("V1").chassis;
  CHECK(a.x == b.x);
  CHECK(a.y == b.y);
  CHECK(a.psi == b.psi);
  CHECK(s.world.ticks() == 1);
}

TEST_CASE("element writes") {
  WorldConfig cfg;
  cfg.frame_rate = 100.0;
  Setup s(1, cfg);
  Fake scm(s.bridge), obs(s.bridge), ctl(s.bridge);
  scm.hello("scm");
  obs.hello("observer");
  ctl.hello("vehicle-controller", "V1");
  scm.drain(), obs.drain(), ctl.drain();

  scm.send(msg::kScmEvent, "", {{"element", "L1"}, {"state", "green"}});
  s.bridge.tick();
  const Envelope ok = scm.last(msg::kAck);
  CHECK(code_of(ok) == "OK");
  CHECK(ok.payload["state"] == "green");
  const auto frames = obs.drain();
  bool event = false, frame_green = false;
  for (const auto& e : frames) {
    if (e.type == msg::kScmEvent && e.payload["id"] == "L1") event = e.payload["state"] == "green";
    if (e.type == msg::kFrame)
      for (const auto& el : elements_from_json(e.payload["elements"]))
        if (el.id == "L1") frame_green = el.state == LightState::kGreen;
  }
  CHECK(event);
  CHECK(frame_green);

  scm.send(msg::kScmEvent, "", {{"element", "L1"}, {"state", "blue"}});
  CHECK(code_of(scm.last(msg::kErr)) == "INVALID_STATE");
  scm.send(msg::kScmEvent, "", {{"element", "S1"}, {"state", "red"}});
  CHECK(code_of(scm.last(msg::kErr)) == "INVALID_STATE");
  scm.send(msg::kScmEvent, "", {{"element", "ZZ"}, {"state", "red"}});
  CHECK(code_of(scm.last(msg::kErr)) == "NOT_FOUND");
  ctl.send(msg::kScmEvent, "", {{"element", "L1"}, {"state", "red"}});
  CHECK(code_of(ctl.last(msg::kErr)) == "FORBIDDEN");
}

TEST_CASE("slow clients coalesce and never stall the loop") {
  Setup s(2);
  Fake slow(s.bridge);
  slow.hello("observer");
  s.run(2000);
  // Only the latest frame per vehicle and the latest peer list stay queued.
  CHECK(slow.outbox->size() <= 4);
  CHECK(s.bridge.stats().messages_dropped > 0);
  const auto got = slow.drain(msg::kFrame);
  REQUIRE(got.size() == 2);
  CHECK(got[0].seq == 1988);
  s.bridge.close(slow.id);
  CHECK_NOTHROW(s.run(5));
}
