#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "world/world.hpp"

namespace scaletwin {

inline constexpr int kRecordFormatVersion = 1;

/// Everything needed to rebuild the World that produced a record.
struct RecordMeta {
  Scene scene;
  WorldConfig world;
  std::vector<VehicleSpawn> vehicles;
};

nlohmann::json record_meta_to_json(const RecordMeta& meta);
RecordMeta record_meta_from_json(const nlohmann::json& j);

/// Fixed CSV column order; lidar beams come last as lidar_000, lidar_001, ...
std::vector<std::string> record_columns(int beam_count);

/// Time-synchronized CSV recorder.
///
/// While recording, one row per vehicle per sensor frame is appended in
/// (timestamp, vehicle_id) order. Command and light events are logged for the
/// whole current segment (since the last reset) so that a record started
/// mid-segment still replays from the reset state.
class Recorder {
 public:
  explicit Recorder(RecordMeta meta);

  /// `tick` is the world tick at which recording begins.
  void start(std::int64_t tick);
  void stop();
  bool recording() const noexcept { return recording_; }
  std::size_t rows() const noexcept { return rows_; }

  /// Marks a reset: the segment event log restarts.
  void begin_segment();
  void log_command(std::int64_t tick, const ActuationCommand& cmd);
  void log_light(std::int64_t tick, const std::string& id, LightState state);
  void add_frames(const std::vector<SensorFrame>& frames);

  /// Throws StateError while recording or before anything was recorded.
  std::string export_csv() const;

  const RecordMeta& meta() const noexcept { return meta_; }

 private:
  void emit(const std::string& line);

  RecordMeta meta_;
  bool recording_ = false;
  bool has_data_ = false;
  std::size_t rows_ = 0;
  int segment_index_ = 0;
  std::vector<std::string> segment_log_;
  std::string body_;
};

/// Fixed-precision rendering used for every number in the record.
std::string format_number(double v);

struct RecordRow {
  std::int64_t tick = 0;
  std::string vehicle_id;
  std::vector<std::string> fields;  // raw cells in column order
};

struct RecordEvent {
  std::int64_t tick = 0;
  enum class Kind { kCommand, kLight } kind = Kind::kCommand;
  ActuationCommand command;
  std::string element;
  LightState state = LightState::kNone;
};

struct RecordSegment {
  int index = 0;
  std::int64_t start_tick = 0;
  // Events and rows interleaved in file order.
  struct Item {
    bool is_row = false;
    RecordEvent event;
    RecordRow row;
  };
  std::vector<Item> items;
};

struct ParsedRecord {
  RecordMeta meta;
  std::vector<std::string> columns;
  std::vector<RecordSegment> segments;
  std::size_t rows = 0;
};

/// Throws FormatError naming the offending line.
ParsedRecord parse_record(std::string_view csv);

struct ReplayReport {
  std::size_t rows = 0;
  double max_deviation = 0.0;  // m, over IPS and ground-truth position
  bool byte_identical = false;
  std::string regenerated;
};

/// Re-simulates a record from its embedded meta and event log.
ReplayReport replay_record(std::string_view csv);

}  // namespace scaletwin
