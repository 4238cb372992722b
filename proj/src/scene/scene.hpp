#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "scene/geometry.hpp"

namespace scaletwin {

inline constexpr int kSceneFormatVersion = 1;

enum class TerrainKind { kAsphalt, kDirt, kLawn, kSnow, kWater };
enum class ObstacleKind { kWall, kConstructionBox, kTrafficCone };
enum class ElementKind { kTrafficLight, kStop, kGiveWay, kRegulatory, kCautionary, kInformatory };
enum class LightState { kNone, kRed, kYellow, kGreen };

std::string_view to_string(TerrainKind k);
std::string_view to_string(ObstacleKind k);
std::string_view to_string(ElementKind k);
std::string_view to_string(LightState s);
std::optional<ElementKind> element_kind_from_string(std::string_view s);
std::optional<LightState> light_state_from_string(std::string_view s);

struct TerrainPatch {
  std::string id;
  TerrainKind kind = TerrainKind::kAsphalt;
  Polygon polygon;
  double friction_scale = 1.0;
};

struct CollisionPolygon {
  std::string id;
  ObstacleKind kind = ObstacleKind::kWall;
  Polygon polygon;  // convex, counter-clockwise
};

struct TrafficElement {
  std::string id;
  ElementKind kind = ElementKind::kStop;
  LightState state = LightState::kNone;  // only traffic lights carry red/yellow/green
  Pose2 pose;
  double detection_radius = 0.5;
  std::string label;  // free-form sign meaning, e.g. "left_curve"
  std::uint64_t version = 0;
};

struct Landmark {
  std::string id;
  Vec3 position = Vec3::Zero();
};

struct NamedPose {
  std::string name;
  Pose2 pose;
};

struct NamedPoint {
  std::string name;
  Vec2 position = Vec2::Zero();
};

struct Polyline {
  std::string id;
  std::vector<Vec2> points;
};

struct ScenarioAgent {
  std::string spawn;
  std::string goal;
};

struct Scenario {
  std::string name;
  std::vector<ScenarioAgent> agents;
};

/// Immutable-after-load world description. Traffic element states live in a
/// TrafficBoard built from `traffic`; the copies here are the initial states.
struct Scene {
  std::string name;
  Rect2 bounds;
  std::vector<TerrainPatch> terrain;
  std::vector<CollisionPolygon> collision;
  std::vector<TrafficElement> traffic;
  std::vector<Landmark> landmarks;
  std::vector<NamedPose> spawns;
  std::vector<NamedPoint> goals;
  std::vector<Polyline> lane_bounds;
  std::vector<Polyline> routes;
  std::vector<Scenario> scenarios;

  // Collision polygons flattened for ray queries.
  std::vector<Polygon> obstacle_polygons() const;

  const NamedPose& spawn(const std::string& name) const;
  const NamedPoint& goal(const std::string& name) const;
  const Polyline& route(const std::string& name) const;
  const Scenario& scenario(const std::string& name) const;
  const TrafficElement* element(const std::string& id) const;
};

/// Parses and validates a scene document; errors carry a line number or the
/// offending element id.
Scene load_scene(std::string_view document);
Scene load_scene_file(const std::string& path);
nlohmann::json scene_to_json(const Scene& scene);

/// Nearest hit against the scene's collision polygons plus optional extra
/// obstacles (e.g. other vehicles).
std::optional<RayHit> raycast(const Scene& scene, const Vec2& origin, const Vec2& direction, double max_dist,
                              std::span<const Polygon> extra = {});

/// True iff the footprint overlaps any collision polygon with positive area or
/// pokes outside the scene bounds.
bool footprint_collision(const Scene& scene, const OrientedRect& footprint);

/// Friction scale of the last-declared terrain patch containing `point`, 1.0
/// (asphalt) when none does. Throws SceneError outside the bounds.
double terrain_at(const Scene& scene, const Vec2& point);
/// Same lookup, but points outside the bounds read as asphalt.
double terrain_or_default(const Scene& scene, const Vec2& point);

struct ElementChange {
  TrafficElement element;
  LightState previous = LightState::kNone;
};

/// Thread-safe owner of live traffic element states. Every accepted write
/// draws a new version from one monotone counter, so versions never repeat
/// even across resets.
class TrafficBoard {
 public:
  using Listener = std::function<void(const ElementChange&)>;

  explicit TrafficBoard(const std::vector<TrafficElement>& initial = {});

  /// Throws NotFoundError for an unknown id and StateError when the state is
  /// not valid for the element kind.
  TrafficElement set_state(const std::string& id, LightState state);
  /// Restores initial states; elements that change get fresh versions.
  void reset();

  std::vector<TrafficElement> snapshot() const;
  std::optional<TrafficElement> find(const std::string& id) const;
  std::uint64_t version() const;

  int subscribe(Listener listener);
  void unsubscribe(int token);

 private:
  TrafficElement apply_locked(TrafficElement& el, LightState state, std::vector<ElementChange>& changes);
  void notify(const std::vector<ElementChange>& changes);

  // Writers (and their notifications) are serialized; listeners must not write back.
  std::mutex write_mutex_;
  mutable std::mutex mutex_;
  std::vector<TrafficElement> initial_;
  std::vector<TrafficElement> elements_;
  std::uint64_t counter_ = 0;
  std::map<int, Listener> listeners_;
  int next_token_ = 1;
};

}  // namespace scaletwin
