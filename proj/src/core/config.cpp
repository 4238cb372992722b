#include "core/config.hpp"

#include <cmath>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "core/errors.hpp"

namespace scaletwin {

using nlohmann::json;

int LidarSpec::beam_count() const {
  return static_cast<int>(std::lround((theta_max - theta_min) / theta_res));
}

double VehicleConfig::total_sprung_mass() const {
  double total = 0.0;
  for (double m : sprung_mass) total += m;
  return total;
}

namespace {

void require(bool ok, const std::string& field, const std::string& what) {
  if (!ok) throw ConfigError("invalid config field '" + field + "': " + what);
}

void require_positive(double v, const std::string& field) {
  require(std::isfinite(v) && v > 0.0, field, "must be > 0 (got " + std::to_string(v) + ")");
}

void require_non_negative(double v, const std::string& field) {
  require(std::isfinite(v) && v >= 0.0, field, "must be >= 0 (got " + std::to_string(v) + ")");
}

void validate_friction(const FrictionParams& f, const std::string& name) {
  require(f.extremum_slip > 0.0, name + ".extremum_slip", "must be > 0");
  require(f.asymptote_slip > f.extremum_slip, name + ".asymptote_slip", "must exceed extremum_slip");
  require(f.asymptote_value > 0.0, name + ".asymptote_value", "must be > 0");
  require(f.extremum_value >= f.asymptote_value, name + ".extremum_value", "must be >= asymptote_value");
  require_positive(f.initial_slope, name + ".initial_slope");
}

}  // namespace

void VehicleConfig::validate() const {
  require_positive(scale, "scale");
  require_positive(wheelbase, "wheelbase");
  require_positive(track_width, "track_width");
  require_positive(wheel_radius, "wheel_radius");
  require_positive(wheel_mass, "wheel_mass");
  for (int i = 0; i < kCorners; ++i) {
    const std::string idx = "[" + std::to_string(i) + "]";
    require_positive(sprung_mass[i], "sprung_mass" + idx);
    require_positive(spring_stiffness[i], "spring_stiffness" + idx);
    require_non_negative(damping[i], "damping" + idx);
  }
  require(encoder_ppr >= 1, "encoder_ppr", "must be >= 1");
  require(std::isfinite(gear_ratio) && gear_ratio >= 1.0, "gear_ratio", "must be >= 1");
  require(steer_limit > 0.0 && steer_limit < std::numbers::pi / 2.0, "steer_limit", "must lie in (0, pi/2)");
  require_positive(steer_rate, "steer_rate");
  require_positive(max_wheel_speed, "max_wheel_speed");
  require_positive(drive_torque_max, "drive_torque_max");
  require_non_negative(brake_torque, "brake_torque");
  require_non_negative(com_height, "com_height");
  require_positive(tire_stiffness, "tire_stiffness");
  require_non_negative(tire_damping, "tire_damping");
  require_positive(suspension_travel, "suspension_travel");
  require_positive(body_length, "body_length");
  require_positive(body_width, "body_width");
  validate_friction(friction_longitudinal, "friction_longitudinal");
  validate_friction(friction_lateral, "friction_lateral");

  require(lidar.r_min > 0.0 && lidar.r_min < lidar.r_max, "lidar.r_min", "need 0 < r_min < r_max");
  require_positive(lidar.theta_res, "lidar.theta_res");
  require(lidar.theta_max > lidar.theta_min, "lidar.theta_max", "must exceed theta_min");
  const double beams = (lidar.theta_max - lidar.theta_min) / lidar.theta_res;
  require(std::abs(beams - std::round(beams)) < 1e-9, "lidar.theta_res", "must divide the angular span");
  require_positive(lidar.rate, "lidar.rate");

  require_positive(camera.focal_length, "camera.focal_length");
  require_positive(camera.sensor_x, "camera.sensor_x");
  require_positive(camera.sensor_y, "camera.sensor_y");
  require(camera.width > 0 && camera.height > 0, "camera.width", "resolution must be positive");
  require(camera.near_plane > 0.0 && camera.near_plane < camera.far_plane, "camera.near_plane",
          "need 0 < near < far");
  require_non_negative(ips_noise_std, "ips_noise_std");
}

namespace {

// Reads keys out of one JSON object, remembering which were consumed so the
// leftovers can be reported as unknown.
class ObjectReader {
 public:
  ObjectReader(const json& obj, std::string path) : obj_(obj), path_(std::move(path)) {
    if (!obj_.is_object()) throw ConfigError("config section '" + display() + "' must be an object");
  }

  template <typename T>
  void get(const std::string& key, T& out) {
    auto it = obj_.find(key);
    if (it == obj_.end()) return;
    seen_.insert(key);
    try {
      out = it->template get<T>();
    } catch (const json::exception&) {
      throw ConfigError("config field '" + qualified(key) + "' has the wrong type");
    }
  }

  void corners(const std::string& key, std::array<double, kCorners>& out) {
    auto it = obj_.find(key);
    if (it == obj_.end()) return;
    seen_.insert(key);
    if (it->is_number()) {
      out.fill(it->get<double>());
    } else if (it->is_array() && it->size() == kCorners) {
      for (int i = 0; i < kCorners; ++i) {
        if (!(*it)[i].is_number()) throw ConfigError("config field '" + qualified(key) + "' must hold numbers");
        out[i] = (*it)[i].get<double>();
      }
    } else {
      throw ConfigError("config field '" + qualified(key) + "' must be a number or an array of 4 numbers");
    }
  }

  void section(const std::string& key, const std::function<void(ObjectReader&)>& fn) {
    auto it = obj_.find(key);
    if (it == obj_.end()) return;
    seen_.insert(key);
    ObjectReader sub(*it, qualified(key));
    fn(sub);
    sub.finish();
  }

  bool has(const std::string& key) const { return obj_.contains(key); }

  void finish() const {
    for (auto it = obj_.begin(); it != obj_.end(); ++it) {
      if (!seen_.count(it.key())) throw ConfigError("unknown config field '" + qualified(it.key()) + "'");
    }
  }

 private:
  std::string qualified(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
  std::string display() const { return path_.empty() ? "<root>" : path_; }

  const json& obj_;
  std::string path_;
  std::set<std::string> seen_;
};

void read_friction(ObjectReader& r, FrictionParams& f) {
  r.get("extremum_slip", f.extremum_slip);
  r.get("extremum_value", f.extremum_value);
  r.get("asymptote_slip", f.asymptote_slip);
  r.get("asymptote_value", f.asymptote_value);
  r.get("initial_slope", f.initial_slope);
}

void read_mount(ObjectReader& r, MountPose& m) {
  r.get("x", m.x);
  r.get("y", m.y);
  r.get("z", m.z);
  r.get("roll", m.roll);
  r.get("pitch", m.pitch);
  r.get("yaw", m.yaw);
}

json friction_json(const FrictionParams& f) {
  return {{"extremum_slip", f.extremum_slip},
          {"extremum_value", f.extremum_value},
          {"asymptote_slip", f.asymptote_slip},
          {"asymptote_value", f.asymptote_value},
          {"initial_slope", f.initial_slope}};
}

json mount_json(const MountPose& m) {
  return {{"x", m.x}, {"y", m.y}, {"z", m.z}, {"roll", m.roll}, {"pitch", m.pitch}, {"yaw", m.yaw}};
}

}  // namespace

VehicleConfig load_vehicle_config(std::string_view document) {
  json doc;
  try {
    doc = json::parse(document);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config parse error: ") + e.what());
  }
  VehicleConfig cfg;
  ObjectReader r(doc, "");
  r.get("scale", cfg.scale);
  r.get("wheelbase", cfg.wheelbase);
  r.get("track_width", cfg.track_width);
  r.get("wheel_radius", cfg.wheel_radius);
  r.get("wheel_mass", cfg.wheel_mass);
  r.corners("sprung_mass", cfg.sprung_mass);
  r.corners("spring_stiffness", cfg.spring_stiffness);
  r.corners("damping", cfg.damping);
  r.get("gear_ratio", cfg.gear_ratio);
  if (r.has("encoder_cpr")) {
    if (r.has("encoder_ppr")) throw ConfigError("give either encoder_ppr or encoder_cpr, not both");
    double cpr = 0.0;
    r.get("encoder_cpr", cpr);
    const double ppr = cpr / cfg.gear_ratio;
    if (!(ppr >= 1.0) || std::abs(ppr - std::round(ppr)) > 1e-9) {
      throw ConfigError("invalid config field 'encoder_cpr': must be an integer multiple of gear_ratio");
    }
    cfg.encoder_ppr = static_cast<int>(std::lround(ppr));
  }
  r.get("encoder_ppr", cfg.encoder_ppr);
  r.get("steer_limit", cfg.steer_limit);
  r.get("steer_rate", cfg.steer_rate);
  r.get("max_wheel_speed", cfg.max_wheel_speed);
  r.get("drive_torque_max", cfg.drive_torque_max);
  r.get("brake_torque", cfg.brake_torque);
  r.get("com_height", cfg.com_height);
  r.get("tire_stiffness", cfg.tire_stiffness);
  r.get("tire_damping", cfg.tire_damping);
  r.get("suspension_travel", cfg.suspension_travel);
  r.get("body_length", cfg.body_length);
  r.get("body_width", cfg.body_width);
  r.section("friction_longitudinal", [&](ObjectReader& s) { read_friction(s, cfg.friction_longitudinal); });
  r.section("friction_lateral", [&](ObjectReader& s) { read_friction(s, cfg.friction_lateral); });
  r.section("lidar", [&](ObjectReader& s) {
    s.get("r_min", cfg.lidar.r_min);
    s.get("r_max", cfg.lidar.r_max);
    s.get("theta_min", cfg.lidar.theta_min);
    s.get("theta_max", cfg.lidar.theta_max);
    s.get("theta_res", cfg.lidar.theta_res);
    s.get("rate", cfg.lidar.rate);
  });
  r.section("lidar_mount", [&](ObjectReader& s) { read_mount(s, cfg.lidar_mount); });
  r.section("camera", [&](ObjectReader& s) {
    s.get("focal_length", cfg.camera.focal_length);
    s.get("sensor_x", cfg.camera.sensor_x);
    s.get("sensor_y", cfg.camera.sensor_y);
    s.get("width", cfg.camera.width);
    s.get("height", cfg.camera.height);
    s.get("near_plane", cfg.camera.near_plane);
    s.get("far_plane", cfg.camera.far_plane);
  });
  r.section("camera_mount", [&](ObjectReader& s) { read_mount(s, cfg.camera_mount); });
  if (r.has("imu_gravity")) {
    std::string mode;
    r.get("imu_gravity", mode);
    if (mode == "proper") {
      cfg.imu_gravity = GravityMode::kProperForce;
    } else if (mode == "coordinate") {
      cfg.imu_gravity = GravityMode::kCoordinate;
    } else {
      throw ConfigError("invalid config field 'imu_gravity': expected 'proper' or 'coordinate'");
    }
  }
  r.get("ips_noise_std", cfg.ips_noise_std);
  r.finish();
  cfg.validate();
  return cfg;
}

VehicleConfig load_vehicle_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return load_vehicle_config(ss.str());
}

json vehicle_config_to_json(const VehicleConfig& c) {
  json j;
  j["scale"] = c.scale;
  j["wheelbase"] = c.wheelbase;
  j["track_width"] = c.track_width;
  j["wheel_radius"] = c.wheel_radius;
  j["wheel_mass"] = c.wheel_mass;
  j["sprung_mass"] = c.sprung_mass;
  j["spring_stiffness"] = c.spring_stiffness;
  j["damping"] = c.damping;
  j["encoder_ppr"] = c.encoder_ppr;
  j["gear_ratio"] = c.gear_ratio;
  j["steer_limit"] = c.steer_limit;
  j["steer_rate"] = c.steer_rate;
  j["max_wheel_speed"] = c.max_wheel_speed;
  j["drive_torque_max"] = c.drive_torque_max;
  j["brake_torque"] = c.brake_torque;
  j["com_height"] = c.com_height;
  j["tire_stiffness"] = c.tire_stiffness;
  j["tire_damping"] = c.tire_damping;
  j["suspension_travel"] = c.suspension_travel;
  j["body_length"] = c.body_length;
  j["body_width"] = c.body_width;
  j["friction_longitudinal"] = friction_json(c.friction_longitudinal);
  j["friction_lateral"] = friction_json(c.friction_lateral);
  j["lidar"] = {{"r_min", c.lidar.r_min},         {"r_max", c.lidar.r_max},
                {"theta_min", c.lidar.theta_min}, {"theta_max", c.lidar.theta_max},
                {"theta_res", c.lidar.theta_res}, {"rate", c.lidar.rate}};
  j["lidar_mount"] = mount_json(c.lidar_mount);
  j["camera"] = {{"focal_length", c.camera.focal_length}, {"sensor_x", c.camera.sensor_x},
                 {"sensor_y", c.camera.sensor_y},         {"width", c.camera.width},
                 {"height", c.camera.height},             {"near_plane", c.camera.near_plane},
                 {"far_plane", c.camera.far_plane}};
  j["camera_mount"] = mount_json(c.camera_mount);
  j["imu_gravity"] = c.imu_gravity == GravityMode::kProperForce ? "proper" : "coordinate";
  j["ips_noise_std"] = c.ips_noise_std;
  return j;
}

}  // namespace scaletwin
