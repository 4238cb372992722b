#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "core/clock.hpp"
#include "core/config.hpp"
#include "core/types.hpp"
#include "dynamics/vehicle.hpp"
#include "scene/scene.hpp"
#include "sensors/sensors.hpp"

namespace scaletwin {

struct WorldConfig {
  double dt = 0.01;
  double frame_rate = 7.0;  // Hz, sensor frame cadence
  std::uint64_t seed = 0;
  VehicleConfig vehicle;

  void validate() const;
};

struct VehicleSpawn {
  std::string id;
  Pose2 pose;
};

struct ElementSnapshot {
  std::string id;
  ElementKind kind = ElementKind::kStop;
  LightState state = LightState::kNone;
  std::uint64_t version = 0;
  Pose2 pose;
  double detection_radius = 0.0;
  std::string label;
};

struct SensorFrame {
  std::string vehicle_id;
  std::int64_t tick = 0;
  double timestamp = 0.0;
  double throttle_fb = 0.0;
  double steer_fb = 0.0;  // rad
  std::array<std::int64_t, 2> enc_ticks{};
  Vec3 ips = Vec3::Zero();
  ImuReading imu;
  std::vector<double> lidar;  // kNoReturn for no return
  bool collided = false;
  ActuationCommand command;  // command in force during the tick
  Pose2 pose;                // ground truth
  double speed = 0.0;        // ground truth, body-longitudinal
  std::vector<ElementSnapshot> elements;
};

struct PeerState {
  std::string vehicle_id;
  Vec2 position = Vec2::Zero();
  double yaw = 0.0;
  double velocity = 0.0;
  double timestamp = 0.0;
};

/// Peer seen from `self`: position and yaw in self's body frame.
PeerState relative_peer(const PeerState& self, const PeerState& other);

/// Everything a physics tick produced that clients may observe.
struct TickOutput {
  std::int64_t tick = 0;
  double timestamp = 0.0;
  std::vector<SensorFrame> frames;  // only on frame ticks, ordered by vehicle id
  std::vector<PeerState> peers;     // every tick, ordered by vehicle id
};

/// Multi-vehicle simulation session. Single-threaded: the owner calls step()
/// and everything else from one thread. Traffic element writes may come from
/// any thread through board().
class World {
 public:
  World(Scene scene, WorldConfig cfg, std::vector<VehicleSpawn> vehicles);
  World(const World&) = delete;
  World& operator=(const World&) = delete;

  /// Stages a command; the latest staged command is consumed by the next
  /// tick and held until replaced. Throws NotFoundError for unknown ids.
  void set_command(const ActuationCommand& cmd);
  TickOutput step();
  /// Restores vehicles, clock, generator and traffic elements to their initial values.
  void reset();

  const Scene& scene() const noexcept { return scene_; }
  const WorldConfig& config() const noexcept { return cfg_; }
  const VehicleModel& model() const noexcept { return model_; }
  TrafficBoard& board() noexcept { return *board_; }
  const TrafficBoard& board() const noexcept { return *board_; }

  std::int64_t ticks() const noexcept { return clock_.ticks(); }
  double time() const noexcept { return clock_.time(); }
  double dt() const noexcept { return clock_.dt(); }
  int frame_period() const noexcept { return frame_period_; }
  int lidar_period() const noexcept { return lidar_period_; }

  std::size_t vehicle_count() const noexcept { return vehicles_.size(); }
  const std::vector<VehicleSpawn>& spawns() const noexcept { return spawns_; }
  std::vector<std::string> vehicle_ids() const;
  bool has_vehicle(const std::string& id) const;
  const VehicleState& state(const std::string& id) const;
  const ActuationCommand& held_command(const std::string& id) const;
  /// Overwrites one vehicle's state, e.g. to respawn it.
  void place(const std::string& id, const Pose2& pose);

  std::vector<PeerState> peers() const;
  std::vector<ElementSnapshot> elements() const;
  /// Frame for one vehicle from the current state (used for the initial frame).
  SensorFrame frame(const std::string& id);

 private:
  struct Slot {
    std::string id;
    VehicleState state;
    ActuationCommand held;
    ActuationCommand staged;
    bool has_staged = false;
    Vec3 prev_velocity = Vec3::Zero();  // world frame, one tick earlier
    std::vector<double> lidar;
  };

  Slot& slot(const std::string& id);
  const Slot& slot(const std::string& id) const;
  void init_slots();
  void resolve_vehicle_contacts(const std::vector<VehicleState>& before);
  void scan(Slot& s);
  SensorFrame make_frame(Slot& s, const std::vector<ElementSnapshot>& elements);

  Scene scene_;
  WorldConfig cfg_;
  VehicleModel model_;
  std::unique_ptr<TrafficBoard> board_;
  SimClock clock_;
  std::vector<VehicleSpawn> spawns_;
  std::vector<Slot> vehicles_;  // sorted by id
  std::mt19937_64 rng_;
  int frame_period_ = 1;
  int lidar_period_ = 1;
};

}  // namespace scaletwin
