#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "world/world.hpp"

namespace scaletwin {

/// Message types carried in the envelope's "type" field.
namespace msg {
inline constexpr const char* kHello = "HELLO";
inline constexpr const char* kFrame = "FRAME";
inline constexpr const char* kPeers = "PEERS";
inline constexpr const char* kCmd = "CMD";
inline constexpr const char* kMode = "MODE";
inline constexpr const char* kReset = "RESET";
inline constexpr const char* kRecord = "RECORD";
inline constexpr const char* kScmEvent = "SCM_EVENT";
inline constexpr const char* kAck = "ACK";
inline constexpr const char* kErr = "ERR";
inline constexpr const char* kEnvReset = "ENV_RESET";
inline constexpr const char* kEnvStep = "ENV_STEP";
}  // namespace msg

/// Result codes carried in ACK and ERR payloads.
namespace code {
inline constexpr const char* kOk = "OK";
inline constexpr const char* kWarnClamped = "WARN_CLAMPED";
inline constexpr const char* kStale = "STALE";
inline constexpr const char* kBadRequest = "BAD_REQUEST";
inline constexpr const char* kBadHandshake = "BAD_HANDSHAKE";
inline constexpr const char* kControlConflict = "CONTROL_CONFLICT";
inline constexpr const char* kNotController = "NOT_CONTROLLER";
inline constexpr const char* kForbidden = "FORBIDDEN";
inline constexpr const char* kNotFound = "NOT_FOUND";
inline constexpr const char* kInvalidState = "INVALID_STATE";
inline constexpr const char* kRecordingActive = "RECORDING_ACTIVE";
inline constexpr const char* kNotRecording = "NOT_RECORDING";
inline constexpr const char* kIoError = "IO_ERROR";
inline constexpr const char* kFinished = "AGENT_FINISHED";
}  // namespace code

enum class Role { kController, kObserver, kScm, kUi, kTrainer };
std::string_view to_string(Role r);
std::optional<Role> role_from_string(std::string_view s);

enum class DriveMode { kAutonomous, kManual };
std::string_view to_string(DriveMode m);
std::optional<DriveMode> drive_mode_from_string(std::string_view s);

/// {type, vehicle_id, seq, timestamp, payload}
struct Envelope {
  std::string type;
  std::string vehicle_id;
  std::int64_t seq = 0;
  double timestamp = 0.0;
  nlohmann::json payload = nlohmann::json::object();
};

std::string encode(const Envelope& e);
/// Throws FormatError on malformed JSON or missing/ill-typed fields.
Envelope decode(std::string_view text);

Envelope ack(const Envelope& request, const char* result, nlohmann::json extra = nlohmann::json::object());
Envelope error(const Envelope& request, const char* result, const std::string& message);

/// Frame payload; lidar ∞ is encoded as null.
nlohmann::json frame_to_json(const SensorFrame& f);
SensorFrame frame_from_json(const nlohmann::json& j, const std::string& vehicle_id);

nlohmann::json peers_to_json(const std::vector<PeerState>& peers);
std::vector<PeerState> peers_from_json(const nlohmann::json& j);

nlohmann::json elements_to_json(const std::vector<ElementSnapshot>& elements);
std::vector<ElementSnapshot> elements_from_json(const nlohmann::json& j);

}  // namespace scaletwin
