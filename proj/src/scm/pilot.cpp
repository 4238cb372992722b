#include "scm/pilot.hpp"

#include "core/errors.hpp"

namespace scaletwin {

ScmPilot::ScmPilot(const ScmDatabase& db, ScmPilotOptions options)
    : db_(db), options_(std::move(options)), ws_(options_.server) {
  if (options_.path.empty()) throw ConfigError("pilot path is empty");
  Envelope hello;
  hello.type = msg::kHello;
  hello.payload = {{"role", "vehicle-controller"}, {"vehicle", options_.vehicle}, {"subscribe", {"frames"}}};
  ws_.send(hello);
  const Envelope reply =
      ws_.wait_for([](const Envelope& e) { return e.type == msg::kAck || e.type == msg::kErr; }, std::chrono::seconds(5));
  if (reply.type != msg::kAck)
    throw NetworkError("bridge refused control of '" + options_.vehicle + "': " + reply.payload.value("message", ""));
  thread_ = std::thread([this] { run(); });
}

ScmPilot::~ScmPilot() { stop(); }

void ScmPilot::stop() {
  stopping_ = true;
  if (thread_.joinable()) thread_.join();
  ws_.close();
}

PilotStep ScmPilot::last() const {
  std::lock_guard lock(mutex_);
  return last_;
}

void ScmPilot::run() {
  std::int64_t seq = 0;
  while (!stopping_ && ws_.connected()) {
    auto text = ws_.receive(std::chrono::milliseconds(50));
    if (!text) continue;
    Envelope e;
    try {
      e = decode(*text);
    } catch (const FormatError&) {
      continue;
    }
    if (e.type != msg::kFrame || e.vehicle_id != options_.vehicle) continue;
    const SensorFrame f = frame_from_json(e.payload, e.vehicle_id);

    PilotStep step;
    if (!db_.stale()) {
      const auto elements = db_.elements();
      step = pilot_step(f.pose, f.speed, options_.path, elements, options_.rules, options_.params);
    } else {
      step.stopped = true;
    }
    Envelope cmd;
    cmd.type = msg::kCmd;
    cmd.vehicle_id = options_.vehicle;
    cmd.seq = ++seq;
    cmd.timestamp = f.timestamp;
    cmd.payload = {{"throttle", step.command.throttle}, {"steering", step.command.steering}};
    try {
      ws_.send(cmd);
      ++sent_;
    } catch (const NetworkError&) {
      break;
    }
    if (step.done) done_ = true;
    std::lock_guard lock(mutex_);
    last_ = std::move(step);
  }
}

}  // namespace scaletwin
