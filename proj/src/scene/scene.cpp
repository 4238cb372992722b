#include "scene/scene.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "core/errors.hpp"

namespace scaletwin {

using nlohmann::json;

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

template <typename Enum, std::size_t N>
struct EnumTable {
  std::array<std::pair<Enum, std::string_view>, N> entries;

  std::string_view name(Enum e) const {
    for (const auto& [k, v] : entries)
      if (k == e) return v;
    return "?";
  }
  std::optional<Enum> parse(std::string_view s) const {
    for (const auto& [k, v] : entries)
      if (v == s) return k;
    return std::nullopt;
  }
};

constexpr EnumTable<TerrainKind, 5> kTerrainNames{{{{TerrainKind::kAsphalt, "asphalt"},
                                                    {TerrainKind::kDirt, "dirt"},
                                                    {TerrainKind::kLawn, "lawn"},
                                                    {TerrainKind::kSnow, "snow"},
                                                    {TerrainKind::kWater, "water"}}}};
constexpr EnumTable<ObstacleKind, 3> kObstacleNames{{{{ObstacleKind::kWall, "wall"},
                                                      {ObstacleKind::kConstructionBox, "construction_box"},
                                                      {ObstacleKind::kTrafficCone, "traffic_cone"}}}};
constexpr EnumTable<ElementKind, 6> kElementNames{{{{ElementKind::kTrafficLight, "traffic_light"},
                                                    {ElementKind::kStop, "stop"},
                                                    {ElementKind::kGiveWay, "give_way"},
                                                    {ElementKind::kRegulatory, "regulatory"},
                                                    {ElementKind::kCautionary, "cautionary"},
                                                    {ElementKind::kInformatory, "informatory"}}}};
constexpr EnumTable<LightState, 4> kLightNames{{{{LightState::kNone, "none"},
                                                 {LightState::kRed, "red"},
                                                 {LightState::kYellow, "yellow"},
                                                 {LightState::kGreen, "green"}}}};

[[noreturn]] void fail(const std::string& where, const std::string& what) {
  throw SceneError("scene error in " + where + ": " + what);
}

std::size_t line_of(std::string_view doc, std::size_t byte) {
  byte = std::min(byte, doc.size());
  return 1 + static_cast<std::size_t>(std::count(doc.begin(), doc.begin() + static_cast<long>(byte), '\n'));
}

double number(const json& j, const std::string& where) {
  if (!j.is_number()) fail(where, "expected a number");
  const double v = j.get<double>();
  if (!std::isfinite(v)) fail(where, "number must be finite");
  return v;
}

Vec2 point2(const json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 2) fail(where, "expected [x, y]");
  return {number(j[0], where), number(j[1], where)};
}

Polygon polygon(const json& j, const std::string& where) {
  if (!j.is_array()) fail(where, "expected an array of points");
  Polygon p;
  for (const auto& pt : j) p.push_back(point2(pt, where));
  return p;
}

Pose2 pose(const json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 3) fail(where, "expected [x, y, yaw_deg]");
  return {number(j[0], where), number(j[1], where), number(j[2], where) * kDeg};
}

std::string string_field(const json& obj, const char* key, const std::string& where, bool required = true) {
  auto it = obj.find(key);
  if (it == obj.end()) {
    if (required) fail(where, std::string("missing field '") + key + "'");
    return {};
  }
  if (!it->is_string()) fail(where, std::string("field '") + key + "' must be a string");
  return it->get<std::string>();
}

void check_keys(const json& obj, std::initializer_list<std::string_view> allowed, const std::string& where) {
  if (!obj.is_object()) fail(where, "expected an object");
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool ok = false;
    for (auto a : allowed) ok = ok || a == it.key();
    if (!ok) fail(where, "unknown field '" + it.key() + "'");
  }
}

const json& array_section(const json& doc, const char* key) {
  static const json empty = json::array();
  auto it = doc.find(key);
  if (it == doc.end()) return empty;
  if (!it->is_array()) fail(key, "section must be an array");
  return *it;
}

Polygon normalized_ccw(Polygon p) {
  if (signed_area(p) < 0.0) std::reverse(p.begin(), p.end());
  return p;
}

json point_json(const Vec2& p) { return json::array({p.x(), p.y()}); }

json polygon_json(const Polygon& poly) {
  json arr = json::array();
  for (const auto& p : poly) arr.push_back(point_json(p));
  return arr;
}

json pose_json(const Pose2& p) { return json::array({p.x, p.y, p.yaw / kDeg}); }

}  // namespace

std::string_view to_string(TerrainKind k) { return kTerrainNames.name(k); }
std::string_view to_string(ObstacleKind k) { return kObstacleNames.name(k); }
std::string_view to_string(ElementKind k) { return kElementNames.name(k); }
std::string_view to_string(LightState s) { return kLightNames.name(s); }
std::optional<ElementKind> element_kind_from_string(std::string_view s) { return kElementNames.parse(s); }
std::optional<LightState> light_state_from_string(std::string_view s) { return kLightNames.parse(s); }

std::vector<Polygon> Scene::obstacle_polygons() const {
  std::vector<Polygon> out;
  out.reserve(collision.size());
  for (const auto& c : collision) out.push_back(c.polygon);
  return out;
}

namespace {
template <typename T, typename Key>
const T& find_named(const std::vector<T>& items, const std::string& name, Key key, const char* what) {
  for (const auto& it : items)
    if (key(it) == name) return it;
  throw NotFoundError(std::string("unknown ") + what + " '" + name + "'");
}
}  // namespace

const NamedPose& Scene::spawn(const std::string& n) const {
  return find_named(spawns, n, [](const NamedPose& p) { return p.name; }, "spawn");
}
const NamedPoint& Scene::goal(const std::string& n) const {
  return find_named(goals, n, [](const NamedPoint& p) { return p.name; }, "goal");
}
const Polyline& Scene::route(const std::string& n) const {
  return find_named(routes, n, [](const Polyline& p) { return p.id; }, "route");
}
const Scenario& Scene::scenario(const std::string& n) const {
  return find_named(scenarios, n, [](const Scenario& s) { return s.name; }, "scenario");
}
const TrafficElement* Scene::element(const std::string& id) const {
  for (const auto& e : traffic)
    if (e.id == id) return &e;
  return nullptr;
}

Scene load_scene(std::string_view document) {
  json doc;
  try {
    doc = json::parse(document);
  } catch (const json::parse_error& e) {
    throw SceneError("scene parse error at line " + std::to_string(line_of(document, e.byte)) + ": " + e.what());
  }
  if (!doc.is_object()) fail("<root>", "document must be an object");
  check_keys(doc,
             {"format", "version", "name", "description", "bounds", "terrain", "collision", "traffic", "landmarks",
              "spawns", "goals", "lane_bounds", "routes", "scenarios"},
             "<root>");
  if (doc.contains("format") && doc["format"] != "scaletwin-scene") fail("format", "expected 'scaletwin-scene'");
  if (doc.contains("version")) {
    if (!doc["version"].is_number_integer()) fail("version", "must be an integer");
    const int v = doc["version"].get<int>();
    if (v > kSceneFormatVersion || v < 1) {
      fail("version", "unsupported scene format version " + std::to_string(v) + " (this build reads " +
                          std::to_string(kSceneFormatVersion) + ")");
    }
  }

  Scene s;
  if (doc.contains("name")) s.name = string_field(doc, "name", "<root>");
  if (doc.contains("bounds")) {
    const json& b = doc["bounds"];
    check_keys(b, {"min", "max"}, "bounds");
    if (!b.contains("min") || !b.contains("max")) fail("bounds", "need 'min' and 'max'");
    s.bounds.min = point2(b["min"], "bounds.min");
    s.bounds.max = point2(b["max"], "bounds.max");
    if (!(s.bounds.min.x() < s.bounds.max.x() && s.bounds.min.y() < s.bounds.max.y())) {
      fail("bounds", "min must be strictly below max");
    }
  }

  std::set<std::string> ids;
  auto claim_id = [&](const std::string& id, const std::string& where) {
    if (id.empty()) fail(where, "empty id");
    if (!ids.insert(id).second) fail(where, "duplicate id '" + id + "'");
  };
  auto check_in_bounds = [&](const Vec2& p, const std::string& where) {
    if (!s.bounds.contains(p)) fail(where, "geometry lies outside the scene bounds");
  };

  for (const json& t : array_section(doc, "terrain")) {
    const std::string id = string_field(t, "id", "terrain");
    const std::string where = "terrain '" + id + "'";
    check_keys(t, {"id", "kind", "polygon", "friction_scale"}, where);
    claim_id(id, where);
    TerrainPatch p;
    p.id = id;
    const auto kind = kTerrainNames.parse(string_field(t, "kind", where));
    if (!kind) fail(where, "unknown terrain kind");
    p.kind = *kind;
    if (!t.contains("polygon")) fail(where, "missing field 'polygon'");
    p.polygon = polygon(t["polygon"], where);
    if (!is_simple(p.polygon)) fail(where, "polygon is not simple");
    p.polygon = normalized_ccw(std::move(p.polygon));
    for (const auto& v : p.polygon) check_in_bounds(v, where);
    if (!t.contains("friction_scale")) fail(where, "missing field 'friction_scale'");
    p.friction_scale = number(t["friction_scale"], where);
    if (!(p.friction_scale > 0.0)) fail(where, "friction_scale must be > 0");
    s.terrain.push_back(std::move(p));
  }

  for (const json& c : array_section(doc, "collision")) {
    const std::string id = string_field(c, "id", "collision");
    const std::string where = "collision '" + id + "'";
    check_keys(c, {"id", "kind", "polygon", "box"}, where);
    claim_id(id, where);
    CollisionPolygon cp;
    cp.id = id;
    const auto kind = kObstacleNames.parse(string_field(c, "kind", where));
    if (!kind) fail(where, "unknown obstacle kind");
    cp.kind = *kind;
    if (c.contains("polygon") == c.contains("box")) fail(where, "give exactly one of 'polygon' or 'box'");
    if (c.contains("polygon")) {
      cp.polygon = polygon(c["polygon"], where);
    } else {
      const json& b = c["box"];
      check_keys(b, {"center", "size", "yaw"}, where);
      if (!b.contains("center") || !b.contains("size")) fail(where, "box needs 'center' and 'size'");
      const Vec2 size = point2(b["size"], where);
      if (!(size.x() > 0.0 && size.y() > 0.0)) fail(where, "box size must be positive");
      const double yaw = b.contains("yaw") ? number(b["yaw"], where) * kDeg : 0.0;
      cp.polygon = oriented_box(point2(b["center"], where), size.x(), size.y(), yaw);
    }
    if (!is_simple(cp.polygon)) fail(where, "polygon is not simple (self-intersecting or degenerate)");
    if (!is_convex(cp.polygon)) fail(where, "collision polygons must be convex");
    cp.polygon = normalized_ccw(std::move(cp.polygon));
    for (const auto& v : cp.polygon) check_in_bounds(v, where);
    s.collision.push_back(std::move(cp));
  }

  for (const json& t : array_section(doc, "traffic")) {
    const std::string id = string_field(t, "id", "traffic");
    const std::string where = "traffic '" + id + "'";
    check_keys(t, {"id", "kind", "state", "pose", "detection_radius", "label"}, where);
    claim_id(id, where);
    TrafficElement el;
    el.id = id;
    const auto kind = kElementNames.parse(string_field(t, "kind", where));
    if (!kind) fail(where, "unknown traffic element kind");
    el.kind = *kind;
    if (!t.contains("pose")) fail(where, "missing field 'pose'");
    el.pose = pose(t["pose"], where);
    check_in_bounds({el.pose.x, el.pose.y}, where);
    if (t.contains("detection_radius")) el.detection_radius = number(t["detection_radius"], where);
    if (!(el.detection_radius > 0.0)) fail(where, "detection_radius must be > 0");
    el.label = string_field(t, "label", where, false);
    const std::string state = string_field(t, "state", where, false);
    if (el.kind == ElementKind::kTrafficLight) {
      const auto st = kLightNames.parse(state.empty() ? "red" : state);
      if (!st || *st == LightState::kNone) fail(where, "traffic light state must be red, yellow or green");
      el.state = *st;
    } else if (!state.empty() && state != "none") {
      fail(where, "only traffic lights carry a state");
    }
    s.traffic.push_back(std::move(el));
  }

  for (const json& l : array_section(doc, "landmarks")) {
    const std::string id = string_field(l, "id", "landmarks");
    const std::string where = "landmark '" + id + "'";
    check_keys(l, {"id", "position"}, where);
    claim_id(id, where);
    if (!l.contains("position") || !l["position"].is_array() || l["position"].size() != 3) {
      fail(where, "position must be [x, y, z]");
    }
    Landmark lm{id, Vec3(number(l["position"][0], where), number(l["position"][1], where),
                         number(l["position"][2], where))};
    check_in_bounds(lm.position.head<2>(), where);
    s.landmarks.push_back(lm);
  }

  for (const json& sp : array_section(doc, "spawns")) {
    const std::string name = string_field(sp, "name", "spawns");
    const std::string where = "spawn '" + name + "'";
    check_keys(sp, {"name", "pose"}, where);
    claim_id(name, where);
    if (!sp.contains("pose")) fail(where, "missing field 'pose'");
    NamedPose np{name, pose(sp["pose"], where)};
    check_in_bounds({np.pose.x, np.pose.y}, where);
    s.spawns.push_back(np);
  }

  for (const json& g : array_section(doc, "goals")) {
    const std::string name = string_field(g, "name", "goals");
    const std::string where = "goal '" + name + "'";
    check_keys(g, {"name", "position"}, where);
    claim_id(name, where);
    if (!g.contains("position")) fail(where, "missing field 'position'");
    NamedPoint gp{name, point2(g["position"], where)};
    check_in_bounds(gp.position, where);
    s.goals.push_back(gp);
  }

  auto read_polylines = [&](const char* section, const char* key, std::vector<Polyline>& out) {
    for (const json& pl : array_section(doc, section)) {
      const std::string id = string_field(pl, key, section);
      const std::string where = std::string(section) + " '" + id + "'";
      check_keys(pl, {key, "points"}, where);
      claim_id(id, where);
      if (!pl.contains("points")) fail(where, "missing field 'points'");
      Polyline line{id, polygon(pl["points"], where)};
      if (line.points.size() < 2) fail(where, "needs at least two points");
      for (const auto& p : line.points) check_in_bounds(p, where);
      out.push_back(std::move(line));
    }
  };
  read_polylines("lane_bounds", "id", s.lane_bounds);
  read_polylines("routes", "name", s.routes);

  for (const json& sc : array_section(doc, "scenarios")) {
    const std::string name = string_field(sc, "name", "scenarios");
    const std::string where = "scenario '" + name + "'";
    check_keys(sc, {"name", "agents"}, where);
    Scenario scenario{name, {}};
    if (!sc.contains("agents") || !sc["agents"].is_array() || sc["agents"].empty()) {
      fail(where, "needs a non-empty 'agents' array");
    }
    for (const json& a : sc["agents"]) {
      check_keys(a, {"spawn", "goal"}, where);
      ScenarioAgent agent{string_field(a, "spawn", where), string_field(a, "goal", where)};
      bool spawn_ok = false, goal_ok = false;
      for (const auto& sp : s.spawns) spawn_ok = spawn_ok || sp.name == agent.spawn;
      for (const auto& g : s.goals) goal_ok = goal_ok || g.name == agent.goal;
      if (!spawn_ok) fail(where, "unknown spawn '" + agent.spawn + "'");
      if (!goal_ok) fail(where, "unknown goal '" + agent.goal + "'");
      scenario.agents.push_back(agent);
    }
    s.scenarios.push_back(std::move(scenario));
  }
  return s;
}

Scene load_scene_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw SceneError("cannot open scene file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return load_scene(ss.str());
  } catch (const SceneError& e) {
    throw SceneError(path + ": " + e.what());
  }
}

json scene_to_json(const Scene& s) {
  json j;
  j["format"] = "scaletwin-scene";
  j["version"] = kSceneFormatVersion;
  j["name"] = s.name;
  j["bounds"] = {{"min", point_json(s.bounds.min)}, {"max", point_json(s.bounds.max)}};
  j["terrain"] = json::array();
  for (const auto& t : s.terrain) {
    j["terrain"].push_back({{"id", t.id},
                            {"kind", to_string(t.kind)},
                            {"polygon", polygon_json(t.polygon)},
                            {"friction_scale", t.friction_scale}});
  }
  j["collision"] = json::array();
  for (const auto& c : s.collision) {
    j["collision"].push_back({{"id", c.id}, {"kind", to_string(c.kind)}, {"polygon", polygon_json(c.polygon)}});
  }
  j["traffic"] = json::array();
  for (const auto& t : s.traffic) {
    json e = {{"id", t.id},
              {"kind", to_string(t.kind)},
              {"pose", pose_json(t.pose)},
              {"detection_radius", t.detection_radius}};
    if (t.kind == ElementKind::kTrafficLight) e["state"] = to_string(t.state);
    if (!t.label.empty()) e["label"] = t.label;
    j["traffic"].push_back(e);
  }
  j["landmarks"] = json::array();
  for (const auto& l : s.landmarks) {
    j["landmarks"].push_back({{"id", l.id}, {"position", {l.position.x(), l.position.y(), l.position.z()}}});
  }
  j["spawns"] = json::array();
  for (const auto& sp : s.spawns) j["spawns"].push_back({{"name", sp.name}, {"pose", pose_json(sp.pose)}});
  j["goals"] = json::array();
  for (const auto& g : s.goals) j["goals"].push_back({{"name", g.name}, {"position", point_json(g.position)}});
  j["lane_bounds"] = json::array();
  for (const auto& l : s.lane_bounds) j["lane_bounds"].push_back({{"id", l.id}, {"points", polygon_json(l.points)}});
  j["routes"] = json::array();
  for (const auto& r : s.routes) j["routes"].push_back({{"name", r.id}, {"points", polygon_json(r.points)}});
  j["scenarios"] = json::array();
  for (const auto& sc : s.scenarios) {
    json agents = json::array();
    for (const auto& a : sc.agents) agents.push_back({{"spawn", a.spawn}, {"goal", a.goal}});
    j["scenarios"].push_back({{"name", sc.name}, {"agents", agents}});
  }
  return j;
}

std::optional<RayHit> raycast(const Scene& scene, const Vec2& origin, const Vec2& direction, double max_dist,
                              std::span<const Polygon> extra) {
  std::optional<RayHit> best;
  auto consider = [&](const Polygon& poly) {
    const Polygon* one = &poly;
    auto hit = raycast_polygons(std::span<const Polygon>(one, 1), origin, direction, max_dist);
    if (hit && (!best || hit->distance < best->distance)) best = hit;
  };
  for (const auto& c : scene.collision) consider(c.polygon);
  for (const auto& p : extra) consider(p);
  return best;
}

bool footprint_collision(const Scene& scene, const OrientedRect& footprint) {
  const auto corners = footprint.corners();
  for (const auto& c : corners) {
    if (c.x() < scene.bounds.min.x() || c.x() > scene.bounds.max.x() || c.y() < scene.bounds.min.y() ||
        c.y() > scene.bounds.max.y()) {
      return true;
    }
  }
  for (const auto& obstacle : scene.collision) {
    if (convex_overlap(corners, obstacle.polygon)) return true;
  }
  return false;
}

double terrain_at(const Scene& scene, const Vec2& point) {
  if (!scene.bounds.contains(point)) {
    throw SceneError("terrain lookup outside scene bounds at (" + std::to_string(point.x()) + ", " +
                     std::to_string(point.y()) + ")");
  }
  return terrain_or_default(scene, point);
}

double terrain_or_default(const Scene& scene, const Vec2& point) {
  for (auto it = scene.terrain.rbegin(); it != scene.terrain.rend(); ++it) {
    if (point_in_polygon(it->polygon, point)) return it->friction_scale;
  }
  return 1.0;
}

// --- TrafficBoard ---------------------------------------------------------

TrafficBoard::TrafficBoard(const std::vector<TrafficElement>& initial) : initial_(initial) {
  for (auto& el : initial_) el.version = ++counter_;
  elements_ = initial_;
}

TrafficElement TrafficBoard::apply_locked(TrafficElement& el, LightState state, std::vector<ElementChange>& changes) {
  const LightState previous = el.state;
  el.state = state;
  el.version = ++counter_;
  changes.push_back({el, previous});
  return el;
}

TrafficElement TrafficBoard::set_state(const std::string& id, LightState state) {
  std::lock_guard writer(write_mutex_);
  std::vector<ElementChange> changes;
  TrafficElement updated;
  {
    std::lock_guard lock(mutex_);
    auto it = std::find_if(elements_.begin(), elements_.end(), [&](const auto& e) { return e.id == id; });
    if (it == elements_.end()) throw NotFoundError("unknown traffic element '" + id + "'");
    const bool is_light = it->kind == ElementKind::kTrafficLight;
    if (!is_light || state == LightState::kNone) {
      throw StateError("invalid state '" + std::string(to_string(state)) + "' for " +
                       std::string(to_string(it->kind)) + " element '" + id + "'");
    }
    updated = apply_locked(*it, state, changes);
  }
  notify(changes);
  return updated;
}

void TrafficBoard::reset() {
  std::lock_guard writer(write_mutex_);
  std::vector<ElementChange> changes;
  {
    std::lock_guard lock(mutex_);
    for (std::size_t i = 0; i < elements_.size(); ++i) {
      if (elements_[i].state != initial_[i].state) apply_locked(elements_[i], initial_[i].state, changes);
    }
  }
  notify(changes);
}

std::vector<TrafficElement> TrafficBoard::snapshot() const {
  std::lock_guard lock(mutex_);
  return elements_;
}

std::optional<TrafficElement> TrafficBoard::find(const std::string& id) const {
  std::lock_guard lock(mutex_);
  for (const auto& e : elements_)
    if (e.id == id) return e;
  return std::nullopt;
}

std::uint64_t TrafficBoard::version() const {
  std::lock_guard lock(mutex_);
  return counter_;
}

int TrafficBoard::subscribe(Listener listener) {
  std::lock_guard lock(mutex_);
  listeners_[next_token_] = std::move(listener);
  return next_token_++;
}

void TrafficBoard::unsubscribe(int token) {
  std::lock_guard lock(mutex_);
  listeners_.erase(token);
}

void TrafficBoard::notify(const std::vector<ElementChange>& changes) {
  if (changes.empty()) return;
  std::map<int, Listener> listeners;
  {
    std::lock_guard lock(mutex_);
    listeners = listeners_;
  }
  for (const auto& change : changes)
    for (const auto& [token, fn] : listeners) fn(change);
}

}  // namespace scaletwin
