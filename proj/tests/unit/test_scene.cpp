#include <atomic>
#include <cmath>
#include <numbers>
#include <random>
#include <thread>

#include "core/errors.hpp"
#include "doctest.h"
#include <nlohmann/json.hpp>
#include "scene/scene.hpp"

using namespace scaletwin;
using std::numbers::pi;

namespace {

const std::string kScenes = SCALETWIN_SOURCE_DIR "/scenes/";
const std::string kFixtures = SCALETWIN_SOURCE_DIR "/tests/fixtures/";

Scene with_walls(const std::string& collision) {
  return load_scene(R"({"format": "scaletwin-scene", "version": 1, "bounds": {"min": [-10, -10], "max": [10, 10]},
                        "collision": [)" + collision + "]}");
}

Vec2 rotate(const Vec2& p, double a) { return {std::cos(a) * p.x() - std::sin(a) * p.y(), std::sin(a) * p.x() + std::cos(a) * p.y()}; }

}  // namespace

TEST_CASE("empty document gives default bounds and no geometry") {
  const Scene s = load_scene("{}");
  CHECK(s.collision.empty());
  CHECK(s.spawns.empty());
  CHECK(s.bounds.min == Vec2(-10, -10));
  CHECK(s.bounds.max == Vec2(10, 10));
}

TEST_CASE("bundled fixtures load") {
  for (const char* name : {"parking_school", "intersection_school", "driving_school", "tiny_town"}) {
    CAPTURE(name);
    Scene s;
    CHECK_NOTHROW(s = load_scene_file(kScenes + name + ".json"));
    CHECK(s.name == name);
  }
  const Scene parking = load_scene_file(kScenes + "parking_school.json");
  int boxes = 0;
  for (const auto& c : parking.collision) boxes += c.kind == ObstacleKind::kConstructionBox;
  CHECK(boxes == 13);
  CHECK(parking.spawns.size() == 1);
  CHECK(parking.goals.size() == 1);
  const Scene inter = load_scene_file(kScenes + "intersection_school.json");
  CHECK(inter.scenario("single").agents.size() == 1);
  CHECK(inter.scenario("multi").agents.size() == 4);
  CHECK(inter.scenario("head_on").agents.size() == 2);
}

TEST_CASE("loader rejects invalid documents") {
  SUBCASE("self-intersecting polygon names its id") {
    CHECK_THROWS_WITH_AS(with_walls(R"({"id": "bowtie", "kind": "wall", "polygon": [[0,0],[1,1],[1,0],[0,1]]})"),
                         doctest::Contains("bowtie"), SceneError);
  }
  SUBCASE("newer format version") {
    CHECK_THROWS_WITH_AS(load_scene(R"({"format": "scaletwin-scene", "version": 2})"), doctest::Contains("version"),
                         SceneError);
  }
  SUBCASE("parse error reports a line") {
    CHECK_THROWS_WITH_AS(load_scene("{\n\"name\": \"x\",\n oops\n}"), doctest::Contains("line 3"), SceneError);
  }
  SUBCASE("unknown fields") {
    CHECK_THROWS_AS(load_scene(R"({"walls": []})"), SceneError);
    CHECK_THROWS_AS(with_walls(R"({"id": "a", "kind": "wall", "polygon": [[0,0],[1,0],[0,1]], "height": 2})"),
                    SceneError);
  }
  SUBCASE("geometry outside bounds") {
    CHECK_THROWS_WITH_AS(with_walls(R"({"id": "far", "kind": "wall", "polygon": [[0,0],[11,0],[0,1]]})"),
                         doctest::Contains("far"), SceneError);
  }
  SUBCASE("duplicate ids") {
    CHECK_THROWS_AS(with_walls(R"({"id": "a", "kind": "wall", "polygon": [[0,0],[1,0],[0,1]]},
                                  {"id": "a", "kind": "wall", "polygon": [[2,0],[3,0],[2,1]]})"),
                    SceneError);
  }
  SUBCASE("state on a sign") {
    CHECK_THROWS_AS(load_scene(R"({"traffic": [{"id": "s", "kind": "stop", "state": "red", "pose": [0, 0, 0]}]})"),
                    SceneError);
  }
  SUBCASE("non-positive friction") {
    CHECK_THROWS_AS(load_scene(R"({"terrain": [{"id": "t", "kind": "snow", "polygon": [[0,0],[1,0],[0,1]],
                                   "friction_scale": 0}]})"),
                    SceneError);
  }
  SUBCASE("missing file names the path") {
    CHECK_THROWS_WITH_AS(load_scene_file("/nonexistent/scene.json"), doctest::Contains("/nonexistent/scene.json"),
                         SceneError);
  }
}

TEST_CASE("scene json round trip") {
  const Scene a = load_scene_file(kScenes + "tiny_town.json");
  const Scene b = load_scene(scene_to_json(a).dump());
  CHECK(b.collision.size() == a.collision.size());
  CHECK(b.traffic.size() == a.traffic.size());
  CHECK(b.routes.size() == a.routes.size());
  CHECK(b.traffic[3].label == a.traffic[3].label);
}

TEST_CASE("raycast examples") {
  const Scene empty = load_scene("{}");
  CHECK_FALSE(raycast(empty, {0, 0}, {1, 0}, 100.0));
  const Scene wall = with_walls(R"({"id": "w", "kind": "wall", "polygon": [[2,-1],[2.5,-1],[2.5,1],[2,1]]})");
  const auto hit = raycast(wall, {0, 0}, {1, 0}, 10.0);
  REQUIRE(hit);
  CHECK(hit->point == Vec2(2, 0));
  CHECK(hit->distance == 2.0);
  CHECK_FALSE(raycast(wall, {0, 0}, {1, 0}, 1.5));
  CHECK_FALSE(raycast(wall, {0, 0}, {-1, 0}, 10.0));
}

TEST_CASE("ray along a wall hits the nearest point of the overlap") {
  CHECK(ray_segment({0, 0}, {1, 0}, {2, 0}, {5, 0}).value() == 2.0);
  CHECK(ray_segment({0, 0}, {1, 0}, {5, 0}, {2, 0}).value() == 2.0);
  CHECK(ray_segment({3, 0}, {1, 0}, {2, 0}, {5, 0}).value() == 0.0);
  CHECK_FALSE(ray_segment({6, 0}, {1, 0}, {2, 0}, {5, 0}));
  const Scene s = with_walls(R"({"id": "w", "kind": "wall", "polygon": [[2,0],[5,0],[5,1],[2,1]]})");
  const auto hit = raycast(s, {0, 0}, {1, 0}, 10.0);
  REQUIRE(hit);
  CHECK(hit->distance == 2.0);
  CHECK_FALSE(raycast(s, {0, 0}, {1, 0}, 1.9));
}

TEST_CASE("raycast distance is the euclidean distance to the hit") {
  const Scene room = load_scene_file(kFixtures + "square_room.json");
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> pos(-1.5, 1.5), ang(-pi, pi), maxd(0.5, 5.0);
  for (int i = 0; i < 2000; ++i) {
    const Vec2 o(pos(rng), pos(rng));
    const double a = ang(rng), m = maxd(rng);
    const Vec2 d(std::cos(a), std::sin(a));
    const auto hit = raycast(room, o, d, m);
    if (!hit) continue;
    CHECK(std::abs(hit->distance - (hit->point - o).norm()) <= 1e-12);
    CHECK(hit->distance <= m);
  }
}

TEST_CASE("footprint collision") {
  const Scene s = with_walls(R"({"id": "box", "kind": "construction_box", "box": {"center": [2, 0], "size": [1, 1]}})");
  CHECK_FALSE(footprint_collision(s, {{-2, 0}, 0.0, 0.12, 0.08}));
  CHECK(footprint_collision(s, {{2, 0}, 0.3, 0.12, 0.08}));
  // Right edge of the footprint lies exactly on the box's left face x = 1.5.
  CHECK_FALSE(footprint_collision(s, {{1.38, 0}, 0.0, 0.12, 0.08}));
  CHECK(footprint_collision(s, {{1.38 + 1e-6, 0}, 0.0, 0.12, 0.08}));
  // Leaving the bounds counts as a collision.
  CHECK(footprint_collision(s, {{9.95, 0}, 0.0, 0.12, 0.08}));
}

TEST_CASE("footprint collision is invariant under rigid transforms") {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> pos(-2.0, 2.0), ang(-pi, pi), size(0.1, 1.0);
  int hits = 0;
  for (int trial = 0; trial < 300; ++trial) {
    const Vec2 c(pos(rng), pos(rng));
    const double sx = size(rng), sy = size(rng), yaw = ang(rng);
    const OrientedRect fp{{pos(rng), pos(rng)}, ang(rng), 0.12, 0.08};
    const double rot = ang(rng);
    const Vec2 shift(pos(rng), pos(rng));
    auto make = [&](double r, const Vec2& t) {
      Scene s;
      s.bounds = {{-50, -50}, {50, 50}};
      CollisionPolygon cp;
      cp.id = "o";
      for (const Vec2& v : oriented_box(c, sx, sy, yaw)) cp.polygon.push_back(rotate(v, r) + t);
      s.collision.push_back(cp);
      return s;
    };
    const bool a = footprint_collision(make(0.0, Vec2::Zero()), fp);
    const OrientedRect moved{rotate(fp.center, rot) + shift, fp.yaw + rot, fp.half_length, fp.half_width};
    const bool b = footprint_collision(make(rot, shift), moved);
    CHECK(a == b);
    hits += a;
  }
  CHECK(hits > 10);
}

TEST_CASE("terrain lookup") {
  const Scene s = load_scene(R"({"bounds": {"min": [0, 0], "max": [4, 4]}, "terrain": [
      {"id": "snow", "kind": "snow", "polygon": [[0,0],[2,0],[2,2],[0,2]], "friction_scale": 0.3},
      {"id": "dirt", "kind": "dirt", "polygon": [[1,1],[3,1],[3,3],[1,3]], "friction_scale": 0.7}]})");
  CHECK(terrain_at(s, {3.5, 3.5}) == 1.0);
  CHECK(terrain_at(s, {0.5, 0.5}) == 0.3);
  CHECK(terrain_at(s, {1.5, 1.5}) == 0.7);
  CHECK_THROWS_AS(terrain_at(s, {5, 5}), SceneError);
  CHECK(terrain_or_default(s, {5, 5}) == 1.0);
}

TEST_CASE("traffic board") {
  const Scene s = load_scene_file(kScenes + "tiny_town.json");
  TrafficBoard board(s.traffic);
  std::vector<ElementChange> seen;
  board.subscribe([&](const ElementChange& c) { seen.push_back(c); });
  SUBCASE("light red to green emits an event") {
    const auto before = board.find("L1")->version;
    const TrafficElement el = board.set_state("L1", LightState::kGreen);
    CHECK(el.state == LightState::kGreen);
    CHECK(el.version > before);
    REQUIRE(seen.size() == 1);
    CHECK(seen[0].previous == LightState::kRed);
    CHECK(seen[0].element.id == "L1");
  }
  SUBCASE("signs carry no light state") {
    CHECK_THROWS_AS(board.set_state("S1", LightState::kGreen), StateError);
    CHECK_THROWS_AS(board.set_state("nope", LightState::kGreen), NotFoundError);
    CHECK(seen.empty());
  }
  SUBCASE("reset restores initial states with fresh versions") {
    board.set_state("L1", LightState::kGreen);
    const auto v = board.version();
    board.reset();
    CHECK(board.find("L1")->state == LightState::kRed);
    CHECK(board.find("L1")->version > v);
  }
  SUBCASE("concurrent writers serialize with monotone versions") {
    std::vector<std::uint64_t> versions;
    std::mutex m;
    board.subscribe([&](const ElementChange& c) {
      std::lock_guard lock(m);
      versions.push_back(c.element.version);
    });
    std::vector<std::thread> threads;
    for (int t = 0; t < 4; ++t) {
      threads.emplace_back([&, t] {
        for (int i = 0; i < 250; ++i) board.set_state("L1", (i + t) % 2 ? LightState::kGreen : LightState::kRed);
      });
    }
    for (auto& th : threads) th.join();
    REQUIRE(versions.size() == 1000);
    for (std::size_t i = 1; i < versions.size(); ++i) CHECK(versions[i] > versions[i - 1]);
    CHECK(board.find("L1")->version == versions.back());
  }
}
