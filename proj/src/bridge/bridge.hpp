#pragma once

#include <atomic>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "bridge/outbox.hpp"
#include "bridge/protocol.hpp"
#include "bridge/recorder.hpp"
#include "world/world.hpp"

namespace scaletwin {

struct BridgeOptions {
  bool v2v = true;
  std::size_t outbox_capacity = 4096;
  DriveMode initial_mode = DriveMode::kAutonomous;
};

struct BridgeStats {
  std::uint64_t ticks = 0;
  std::uint64_t frames_published = 0;
  std::uint64_t messages_dropped = 0;  // coalesced or evicted, summed over live and departed clients
  std::size_t clients = 0;
};

/// Protocol hub between one World and any number of clients.
///
/// receive()/open()/close() may be called from any thread; they only touch the
/// client registry and the inbox. tick() is called by the single simulation
/// thread: it applies queued operations at the tick boundary, advances the
/// world by one step, feeds the recorder and fans frames out to outboxes
/// without blocking on any client.
class Bridge : public Endpoint {
 public:
  Bridge(World& world, BridgeOptions options = {});
  ~Bridge() override;

  ClientId open(std::shared_ptr<Outbox> outbox) override;
  void receive(ClientId client, const std::string& text) override;
  void close(ClientId client) override;

  TickOutput tick();

  /// Host-side writes, queued and applied at the next tick boundary exactly
  /// like client messages, so the recorder logs them. A host command is
  /// applied regardless of drive mode. Throws NotFoundError or StateError.
  void submit_command(const ActuationCommand& command);
  void submit_light(const std::string& element, LightState state);

  World& world() noexcept { return world_; }
  Recorder& recorder() noexcept { return recorder_; }
  DriveMode mode(const std::string& vehicle) const;
  std::optional<ClientId> controller(const std::string& vehicle) const;
  BridgeStats stats() const;
  /// Requests queued for the next tick.
  std::size_t pending_ops() const;

 private:
  struct Client {
    std::shared_ptr<Outbox> outbox;
    bool greeted = false;
    Role role = Role::kObserver;
    std::string vehicle;  // controllers only
    bool frames = false, peers = false, events = false;
    std::set<std::string> vehicles;  // empty: all
    std::map<std::string, std::int64_t> last_seq;
  };

  struct Op {
    enum class Kind { kCommand, kHostCommand, kMode, kLight, kReset, kRecord, kRelease };
    Op(Kind k, ClientId c = 0, Envelope r = {}) : kind(k), client(c), request(std::move(r)) {}

    Kind kind;
    ClientId client = 0;
    Envelope request;
    ActuationCommand command;
    DriveMode mode = DriveMode::kAutonomous;
    std::string element;
    LightState state = LightState::kNone;
  };

  void send(ClientId client, const Envelope& e);  // caller holds mutex_
  void reply(ClientId client, const Envelope& e);
  void broadcast_event(const nlohmann::json& payload, double timestamp);
  void broadcast_locked(const Envelope& e);                           // caller holds mutex_
  void announce_control(const std::string& vehicle, bool controlled);  // caller holds mutex_
  void handle_hello(ClientId id, Client& c, const Envelope& e);
  void handle_command(ClientId id, Client& c, const Envelope& e);
  void handle_record(const Op& op);
  bool authorized(Role role, const std::string& client_vehicle, const std::string& vehicle) const;
  nlohmann::json snapshot() const;  // caller holds mutex_
  void publish(const TickOutput& out);

  World& world_;
  BridgeOptions options_;
  Recorder recorder_;
  std::set<std::string> vehicle_ids_;
  int board_token_ = 0;

  mutable std::mutex mutex_;
  std::map<ClientId, Client> clients_;
  std::map<std::string, ClientId> controllers_;
  std::map<std::string, DriveMode> modes_;
  std::vector<Op> ops_;
  std::vector<PeerState> latest_peers_;
  std::int64_t tick_ = 0;
  double time_ = 0.0;
  ClientId next_id_ = 1;
  BridgeStats stats_;
  std::uint64_t departed_drops_ = 0;
};

}  // namespace scaletwin
