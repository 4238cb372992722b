#include "bridge/recorder.hpp"

#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <map>
#include <sstream>

#include "core/errors.hpp"

namespace scaletwin {

using nlohmann::json;

namespace {

constexpr const char* kMagic = "#scaletwin-record";
constexpr int kFixedColumns = 31;

void append_csv(std::string& line, const std::string& cell) {
  if (!line.empty()) line += ',';
  line += cell;
}

std::string join(const std::vector<std::string>& cells) {
  std::string out;
  for (const auto& c : cells) append_csv(out, c);
  return out;
}

std::vector<std::string> split(std::string_view line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const std::size_t comma = line.find(',', start);
    out.emplace_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
    if (comma == std::string_view::npos) return out;
    start = comma + 1;
  }
}

std::string elements_cell(const std::vector<ElementSnapshot>& elements) {
  std::string out;
  for (const auto& e : elements) {
    if (e.kind != ElementKind::kTrafficLight) continue;
    if (!out.empty()) out += ';';
    out += e.id + "=" + std::string(to_string(e.state));
  }
  return out;
}

std::string row_line(const SensorFrame& f) {
  std::vector<std::string> c;
  c.reserve(kFixedColumns + f.lidar.size());
  c.push_back(format_number(f.timestamp));
  c.push_back(std::to_string(f.tick));
  c.push_back(f.vehicle_id);
  c.push_back(format_number(f.throttle_fb));
  c.push_back(format_number(f.steer_fb));
  c.push_back(std::to_string(f.enc_ticks[0]));
  c.push_back(std::to_string(f.enc_ticks[1]));
  for (int i = 0; i < 3; ++i) c.push_back(format_number(f.ips(i)));
  for (int i = 0; i < 3; ++i) c.push_back(format_number(f.imu.accel(i)));
  for (int i = 0; i < 3; ++i) c.push_back(format_number(f.imu.gyro(i)));
  c.push_back(format_number(f.imu.euler.roll));
  c.push_back(format_number(f.imu.euler.pitch));
  c.push_back(format_number(f.imu.euler.yaw));
  c.push_back(format_number(f.imu.quat.w));
  c.push_back(format_number(f.imu.quat.x));
  c.push_back(format_number(f.imu.quat.y));
  c.push_back(format_number(f.imu.quat.z));
  c.push_back(format_number(f.command.throttle));
  c.push_back(format_number(f.command.steering));
  c.push_back(f.collided ? "1" : "0");
  c.push_back(format_number(f.pose.x));
  c.push_back(format_number(f.pose.y));
  c.push_back(format_number(f.pose.yaw));
  c.push_back(format_number(f.speed));
  c.push_back(elements_cell(f.elements));
  for (double r : f.lidar) c.push_back(format_number(r));
  return join(c);
}

[[noreturn]] void bad(std::size_t line, const std::string& what) {
  throw FormatError("record line " + std::to_string(line) + ": " + what);
}

double parse_double(const std::string& s, std::size_t line) {
  if (s == "inf") return std::numeric_limits<double>::infinity();
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size()) bad(line, "not a number: '" + s + "'");
  return v;
}

std::int64_t parse_int(const std::string& s, std::size_t line) {
  char* end = nullptr;
  const long long v = std::strtoll(s.c_str(), &end, 10);
  if (s.empty() || end != s.c_str() + s.size()) bad(line, "not an integer: '" + s + "'");
  return v;
}

}  // namespace

std::string format_number(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<std::string> record_columns(int beam_count) {
  std::vector<std::string> cols{"timestamp", "tick",    "vehicle_id", "throttle_fb", "steer_fb",     "enc_left",
                                "enc_right", "ips_x",   "ips_y",      "ips_z",       "accel_x",      "accel_y",
                                "accel_z",   "gyro_x",  "gyro_y",     "gyro_z",      "roll",         "pitch",
                                "yaw",       "quat_w",  "quat_x",     "quat_y",      "quat_z",       "cmd_throttle",
                                "cmd_steering", "collided", "pose_x", "pose_y",      "pose_yaw",     "speed",
                                "elements"};
  for (int i = 0; i < beam_count; ++i) {
    char buf[24];
    std::snprintf(buf, sizeof buf, "lidar_%03d", i);
    cols.emplace_back(buf);
  }
  return cols;
}

json record_meta_to_json(const RecordMeta& m) {
  json vehicles = json::array();
  for (const auto& v : m.vehicles) vehicles.push_back({{"id", v.id}, {"pose", {v.pose.x, v.pose.y, v.pose.yaw}}});
  return {{"scene", scene_to_json(m.scene)},
          {"dt", m.world.dt},
          {"frame_rate", m.world.frame_rate},
          {"seed", m.world.seed},
          {"vehicle", vehicle_config_to_json(m.world.vehicle)},
          {"vehicles", vehicles}};
}

RecordMeta record_meta_from_json(const json& j) {
  try {
    RecordMeta m;
    m.scene = load_scene(j.at("scene").dump());
    m.world.dt = j.at("dt").get<double>();
    m.world.frame_rate = j.at("frame_rate").get<double>();
    m.world.seed = j.at("seed").get<std::uint64_t>();
    m.world.vehicle = load_vehicle_config(j.at("vehicle").dump());
    for (const auto& v : j.at("vehicles")) {
      const auto& p = v.at("pose");
      m.vehicles.push_back({v.at("id").get<std::string>(), {p.at(0).get<double>(), p.at(1).get<double>(),
                                                             p.at(2).get<double>()}});
    }
    return m;
  } catch (const json::exception& e) {
    throw FormatError(std::string("record meta: ") + e.what());
  }
}

Recorder::Recorder(RecordMeta meta) : meta_(std::move(meta)) {}

void Recorder::emit(const std::string& line) {
  body_ += line;
  body_ += '\n';
}

void Recorder::start(std::int64_t tick) {
  if (recording_) throw StateError("recorder already running");
  body_.clear();
  rows_ = 0;
  segment_index_ = 0;
  recording_ = true;
  has_data_ = true;
  emit("#segment,0," + std::to_string(tick));
  for (const auto& l : segment_log_) emit(l);
}

void Recorder::stop() {
  if (!recording_) throw StateError("recorder is not running");
  recording_ = false;
}

void Recorder::begin_segment() {
  segment_log_.clear();
  if (recording_) emit("#segment," + std::to_string(++segment_index_) + ",0");
}

void Recorder::log_command(std::int64_t tick, const ActuationCommand& cmd) {
  std::string line = "#cmd";
  append_csv(line, std::to_string(tick));
  append_csv(line, cmd.vehicle_id);
  append_csv(line, format_number(cmd.throttle));
  append_csv(line, format_number(cmd.steering));
  append_csv(line, std::to_string(cmd.seq));
  segment_log_.push_back(line);
  if (recording_) emit(line);
}

void Recorder::log_light(std::int64_t tick, const std::string& id, LightState state) {
  const std::string line = "#light," + std::to_string(tick) + "," + id + "," + std::string(to_string(state));
  segment_log_.push_back(line);
  if (recording_) emit(line);
}

void Recorder::add_frames(const std::vector<SensorFrame>& frames) {
  if (!recording_) return;
  for (const auto& f : frames) {
    emit(row_line(f));
    ++rows_;
  }
}

std::string Recorder::export_csv() const {
  if (recording_) throw StateError("cannot export while recording");
  if (!has_data_) throw StateError("nothing recorded");
  std::string out = std::string(kMagic) + "," + std::to_string(kRecordFormatVersion) + "\n";
  out += "#meta," + record_meta_to_json(meta_).dump() + "\n";
  out += join(record_columns(meta_.world.vehicle.lidar.beam_count())) + "\n";
  out += body_;
  out += "#end," + std::to_string(rows_) + "\n";
  return out;
}

ParsedRecord parse_record(std::string_view csv) {
  ParsedRecord rec;
  std::size_t line_no = 0, pos = 0;
  bool ended = false, have_meta = false, have_header = false;
  while (pos < csv.size()) {
    std::size_t nl = csv.find('\n', pos);
    if (nl == std::string_view::npos) bad(line_no + 1, "truncated line");
    const std::string_view line = csv.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    if (ended) bad(line_no, "content after #end");
    if (line_no == 1) {
      const auto cells = split(line);
      if (cells.size() != 2 || cells[0] != kMagic) bad(line_no, "not a scaletwin record");
      if (parse_int(cells[1], line_no) != kRecordFormatVersion)
        throw FormatError("record version " + cells[1] + " is not supported (expected " +
                          std::to_string(kRecordFormatVersion) + ")");
      continue;
    }
    if (line.rfind("#meta,", 0) == 0) {
      try {
        rec.meta = record_meta_from_json(json::parse(line.substr(6)));
      } catch (const json::exception& e) {
        bad(line_no, std::string("bad meta: ") + e.what());
      } catch (const Error& e) {
        bad(line_no, e.what());
      }
      have_meta = true;
      continue;
    }
    if (!have_meta) bad(line_no, "missing #meta");
    if (!have_header) {
      rec.columns = split(line);
      if (rec.columns != record_columns(rec.meta.world.vehicle.lidar.beam_count())) bad(line_no, "unexpected columns");
      have_header = true;
      continue;
    }
    const auto cells = split(line);
    if (cells[0] == "#segment") {
      if (cells.size() != 3) bad(line_no, "bad #segment");
      RecordSegment seg;
      seg.index = static_cast<int>(parse_int(cells[1], line_no));
      seg.start_tick = parse_int(cells[2], line_no);
      if (seg.index != static_cast<int>(rec.segments.size())) bad(line_no, "segment out of order");
      rec.segments.push_back(seg);
      continue;
    }
    if (cells[0] == "#end") {
      if (cells.size() != 2 || parse_int(cells[1], line_no) != static_cast<std::int64_t>(rec.rows))
        bad(line_no, "row count mismatch");
      ended = true;
      continue;
    }
    if (rec.segments.empty()) bad(line_no, "data before the first #segment");
    RecordSegment::Item item;
    if (cells[0] == "#cmd") {
      if (cells.size() != 6) bad(line_no, "bad #cmd");
      item.event.kind = RecordEvent::Kind::kCommand;
      item.event.tick = parse_int(cells[1], line_no);
      item.event.command.vehicle_id = cells[2];
      item.event.command.throttle = parse_double(cells[3], line_no);
      item.event.command.steering = parse_double(cells[4], line_no);
      item.event.command.seq = parse_int(cells[5], line_no);
    } else if (cells[0] == "#light") {
      if (cells.size() != 4) bad(line_no, "bad #light");
      item.event.kind = RecordEvent::Kind::kLight;
      item.event.tick = parse_int(cells[1], line_no);
      item.event.element = cells[2];
      const auto st = light_state_from_string(cells[3]);
      if (!st) bad(line_no, "bad light state '" + cells[3] + "'");
      item.event.state = *st;
    } else if (!cells[0].empty() && cells[0][0] == '#') {
      bad(line_no, "unknown directive " + cells[0]);
    } else {
      if (cells.size() != rec.columns.size())
        bad(line_no, "expected " + std::to_string(rec.columns.size()) + " cells, got " + std::to_string(cells.size()));
      item.is_row = true;
      item.row.tick = parse_int(cells[1], line_no);
      item.row.vehicle_id = cells[2];
      item.row.fields = cells;
      ++rec.rows;
    }
    rec.segments.back().items.push_back(std::move(item));
  }
  if (!ended) bad(line_no, "truncated record (missing #end)");
  return rec;
}

ReplayReport replay_record(std::string_view csv) {
  const ParsedRecord rec = parse_record(csv);
  World world(rec.meta.scene, rec.meta.world, rec.meta.vehicles);
  Recorder out(rec.meta);
  ReplayReport report;
  std::map<std::pair<std::int64_t, std::string>, SensorFrame> frames;

  for (const auto& seg : rec.segments) {
    bool started = seg.index > 0;
    if (started) {
      world.reset();
      out.begin_segment();
    }
    // Events logged before the recording started are re-emitted by start(),
    // so starting exactly at the recorded tick reproduces the file.
    auto maybe_start = [&] {
      if (!started && world.ticks() >= seg.start_tick) {
        out.start(seg.start_tick);
        started = true;
      }
    };
    frames.clear();
    auto advance_to = [&](std::int64_t tick) {
      if (tick < world.ticks()) throw FormatError("record goes back in time at tick " + std::to_string(tick));
      maybe_start();
      while (world.ticks() < tick) {
        TickOutput t = world.step();
        for (auto& f : t.frames) frames[{f.tick, f.vehicle_id}] = f;
        out.add_frames(t.frames);
        maybe_start();
      }
    };
    for (const auto& item : seg.items) {
      if (item.is_row) {
        advance_to(item.row.tick);
        auto it = frames.find({item.row.tick, item.row.vehicle_id});
        if (it == frames.end()) {
          report.max_deviation = std::numeric_limits<double>::infinity();
          continue;
        }
        const SensorFrame& f = it->second;
        const auto& c = item.row.fields;
        const double dev[] = {std::abs(parse_double(c[7], 0) - f.ips.x()), std::abs(parse_double(c[8], 0) - f.ips.y()),
                              std::abs(parse_double(c[9], 0) - f.ips.z()),
                              std::abs(parse_double(c[26], 0) - f.pose.x),
                              std::abs(parse_double(c[27], 0) - f.pose.y)};
        for (double d : dev) report.max_deviation = std::max(report.max_deviation, d);
        ++report.rows;
      } else {
        const RecordEvent& e = item.event;
        advance_to(e.tick);
        if (e.kind == RecordEvent::Kind::kCommand) {
          world.set_command(e.command);
          out.log_command(e.tick, e.command);
        } else {
          world.board().set_state(e.element, e.state);
          out.log_light(e.tick, e.element, e.state);
        }
      }
    }
    advance_to(std::max(world.ticks(), seg.start_tick));
  }
  if (out.recording()) out.stop();
  report.regenerated = rec.segments.empty() ? std::string() : out.export_csv();
  report.byte_identical = report.regenerated == csv;
  return report;
}

}  // namespace scaletwin
