#include "world/world.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "core/errors.hpp"

namespace scaletwin {

namespace {

int period_ticks(double rate, double dt) {
  return std::max(1, static_cast<int>(std::lround(1.0 / (rate * dt))));
}

Polygon footprint_polygon(const VehicleModel& model, const VehicleState& s) {
  const auto c = model.footprint(s.chassis).corners();
  return Polygon(c.begin(), c.end());
}

}  // namespace

void WorldConfig::validate() const {
  if (!(dt > 0.0) || !std::isfinite(dt)) throw ConfigError("dt must be positive");
  if (!(frame_rate > 0.0) || !std::isfinite(frame_rate)) throw ConfigError("frame_rate must be positive");
  if (!(vehicle.lidar.rate > 0.0)) throw ConfigError("lidar.rate must be positive");
  vehicle.validate();
}

PeerState relative_peer(const PeerState& self, const PeerState& other) {
  const double c = std::cos(self.yaw), s = std::sin(self.yaw);
  const Vec2 d = other.position - self.position;
  PeerState r = other;
  r.position = Vec2(c * d.x() + s * d.y(), -s * d.x() + c * d.y());
  r.yaw = wrap_angle(other.yaw - self.yaw);
  return r;
}

World::World(Scene scene, WorldConfig cfg, std::vector<VehicleSpawn> vehicles)
    : scene_(std::move(scene)),
      cfg_((cfg.validate(), std::move(cfg))),
      model_(cfg_.vehicle),
      board_(std::make_unique<TrafficBoard>(scene_.traffic)),
      clock_(cfg_.dt),
      spawns_(std::move(vehicles)),
      rng_(cfg_.seed) {
  std::set<std::string> ids;
  for (const VehicleSpawn& v : spawns_) {
    if (v.id.empty()) throw ConfigError("vehicle id must not be empty");
    if (!ids.insert(v.id).second) throw ConfigError("duplicate vehicle id '" + v.id + "'");
  }
  std::sort(spawns_.begin(), spawns_.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
  frame_period_ = period_ticks(cfg_.frame_rate, cfg_.dt);
  lidar_period_ = period_ticks(cfg_.vehicle.lidar.rate, cfg_.dt);
  init_slots();
}

void World::init_slots() {
  vehicles_.clear();
  for (const VehicleSpawn& v : spawns_) {
    Slot s;
    s.id = v.id;
    s.state = initial_vehicle_state(model_, v.pose);
    s.held.vehicle_id = s.staged.vehicle_id = v.id;
    vehicles_.push_back(std::move(s));
  }
  for (Slot& s : vehicles_) scan(s);
}

void World::reset() {
  clock_.reset();
  rng_.seed(cfg_.seed);
  board_->reset();
  init_slots();
}

World::Slot& World::slot(const std::string& id) {
  auto it = std::lower_bound(vehicles_.begin(), vehicles_.end(), id, [](const Slot& s, const std::string& k) {
    return s.id < k;
  });
  if (it == vehicles_.end() || it->id != id) throw NotFoundError("unknown vehicle '" + id + "'");
  return *it;
}

const World::Slot& World::slot(const std::string& id) const { return const_cast<World*>(this)->slot(id); }

bool World::has_vehicle(const std::string& id) const {
  return std::any_of(vehicles_.begin(), vehicles_.end(), [&](const Slot& s) { return s.id == id; });
}

std::vector<std::string> World::vehicle_ids() const {
  std::vector<std::string> out;
  for (const Slot& s : vehicles_) out.push_back(s.id);
  return out;
}

const VehicleState& World::state(const std::string& id) const { return slot(id).state; }
const ActuationCommand& World::held_command(const std::string& id) const { return slot(id).held; }

void World::place(const std::string& id, const Pose2& pose) {
  Slot& s = slot(id);
  s.state = initial_vehicle_state(model_, pose);
  s.prev_velocity = Vec3::Zero();
  scan(s);
}

void World::set_command(const ActuationCommand& cmd) {
  Slot& s = slot(cmd.vehicle_id);
  s.staged = cmd;
  s.has_staged = true;
}

void World::scan(Slot& s) {
  std::vector<Polygon> others;
  for (const Slot& o : vehicles_)
    if (o.id != s.id) others.push_back(footprint_polygon(model_, o.state));
  const Transform3 lidar = vehicle_pose(s.state) * cfg_.vehicle.lidar_mount.transform();
  s.lidar = scan_lidar(lidar, scene_, cfg_.vehicle.lidar, others);
}

void World::resolve_vehicle_contacts(const std::vector<VehicleState>& before) {
  // Reverting a pair can create a new overlap with a vehicle that did move,
  // so repeat until stable. Every revert restores a non-overlapping pose, so
  // this terminates after at most n passes.
  const std::size_t n = vehicles_.size();
  std::vector<bool> reverted(n, false);
  for (bool changed = true; changed;) {
    changed = false;
    std::vector<Polygon> polys;
    for (const Slot& s : vehicles_) polys.push_back(footprint_polygon(model_, s.state));
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) {
        if (!convex_overlap(polys[i], polys[j])) continue;
        for (std::size_t k : {i, j}) {
          VehicleState& s = vehicles_[k].state;
          if (!reverted[k]) {
            s.chassis.x = before[k].chassis.x;
            s.chassis.y = before[k].chassis.y;
            s.chassis.psi = before[k].chassis.psi;
            reverted[k] = true;
            changed = true;
          }
          stop_on_contact(s);
        }
      }
    }
  }
}

TickOutput World::step() {
  std::vector<VehicleState> before;
  before.reserve(vehicles_.size());
  for (Slot& s : vehicles_) {
    if (s.has_staged) {
      s.held = s.staged;
      s.has_staged = false;
    }
    before.push_back(s.state);
    s.prev_velocity = world_velocity(s.state.chassis);
    s.state = vehicle_step(s.state, s.held, scene_, model_, clock_.dt());
  }
  if (vehicles_.size() > 1) resolve_vehicle_contacts(before);
  clock_.advance();

  TickOutput out;
  out.tick = clock_.ticks();
  out.timestamp = clock_.time();
  if (out.tick % lidar_period_ == 0)
    for (Slot& s : vehicles_) scan(s);
  if (out.tick % frame_period_ == 0) {
    const auto el = elements();
    for (Slot& s : vehicles_) out.frames.push_back(make_frame(s, el));
  }
  out.peers = peers();
  return out;
}

std::vector<PeerState> World::peers() const {
  std::vector<PeerState> out;
  for (const Slot& s : vehicles_) {
    const ChassisState& c = s.state.chassis;
    out.push_back({s.id, Vec2(c.x, c.y), c.psi, c.v_x, clock_.time()});
  }
  return out;
}

std::vector<ElementSnapshot> World::elements() const {
  std::vector<ElementSnapshot> out;
  for (const TrafficElement& e : board_->snapshot()) out.push_back({e.id, e.kind, e.state, e.version, e.pose, e.detection_radius, e.label});
  return out;
}

SensorFrame World::frame(const std::string& id) { return make_frame(slot(id), elements()); }

SensorFrame World::make_frame(Slot& s, const std::vector<ElementSnapshot>& elements) {
  const VehicleConfig& cfg = cfg_.vehicle;
  const VehicleState& v = s.state;
  const Transform3 pose = vehicle_pose(v);
  SensorFrame f;
  f.vehicle_id = s.id;
  f.tick = clock_.ticks();
  f.timestamp = clock_.time();
  f.throttle_fb = v.throttle;
  f.steer_fb = v.steer_angle;
  f.enc_ticks = read_encoders(v.wheels[kRearLeft], v.wheels[kRearRight], cfg);
  f.ips = read_ips(pose, cfg.ips_noise_std, rng_);
  f.imu = read_imu(v.chassis, s.prev_velocity, pose, clock_.dt(), cfg.imu_gravity);
  f.lidar = s.lidar;
  f.collided = v.collided;
  f.command = s.held;
  f.pose = {v.chassis.x, v.chassis.y, v.chassis.psi};
  f.speed = v.chassis.v_x;
  f.elements = elements;
  return f;
}

}  // namespace scaletwin
