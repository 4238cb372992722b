#include "scaletwin/scaletwin.h"

#include <atomic>
#include <cmath>
#include <fstream>
#include <memory>
#include <map>
#include <sstream>
#include <string>

#include "bridge/bridge.hpp"
#include "bridge/loop.hpp"
#include "bridge/recorder.hpp"
#include "bridge/ws.hpp"
#include "core/errors.hpp"
#include "env/env.hpp"
#include "env/server.hpp"
#include "scm/client.hpp"
#include "scm/pilot.hpp"
#include "scm/service.hpp"

using namespace scaletwin;

struct st_sim {
  std::unique_ptr<World> world;
  std::unique_ptr<Bridge> bridge;
  std::unique_ptr<WsServer> server;
  std::size_t outbox_capacity = 4096;
  std::atomic<bool> stop{false};
};

struct st_env {
  Scene scene;
  EnvConfig config;
  std::unique_ptr<IntersectionEnv> env;
  std::unique_ptr<EnvServer> endpoint;
  std::unique_ptr<WsServer> server;
};

struct st_scm {
  ScmDatabase db;
  std::unique_ptr<ScmClient> client;
  std::unique_ptr<ScmService> service;
  std::unique_ptr<ScmHttpServer> http;
  HostPort bridge;
  std::unique_ptr<ScmPilot> pilot;
};

namespace {

thread_local std::string g_error;

st_status fail(st_status s, const std::string& message) {
  g_error = message;
  return s;
}

template <class F>
st_status guarded(F&& body) {
  try {
    g_error.clear();
    return body();
  } catch (const ConfigError& e) {
    return fail(ST_ERR_CONFIG, e.what());
  } catch (const SceneError& e) {
    return fail(ST_ERR_SCENE, e.what());
  } catch (const FormatError& e) {
    return fail(ST_ERR_FORMAT, e.what());
  } catch (const StateError& e) {
    return fail(ST_ERR_STATE, e.what());
  } catch (const NotFoundError& e) {
    return fail(ST_ERR_NOT_FOUND, e.what());
  } catch (const NetworkError& e) {
    return fail(ST_ERR_NETWORK, e.what());
  } catch (const SimulationFault& e) {
    return fail(ST_ERR_SIMULATION, e.what());
  } catch (const std::bad_alloc&) {
    return fail(ST_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return fail(ST_ERR_INTERNAL, e.what());
  }
}

#define REQUIRE_ARG(cond, what) \
  if (!(cond)) return fail(ST_ERR_ARGUMENT, what)

}  // namespace

extern "C" {

const char* st_last_error(void) { return g_error.c_str(); }

const char* st_status_name(st_status s) {
  switch (s) {
    case ST_OK: return "ok";
    case ST_ERR_ARGUMENT: return "argument";
    case ST_ERR_CONFIG: return "config";
    case ST_ERR_SCENE: return "scene";
    case ST_ERR_FORMAT: return "format";
    case ST_ERR_STATE: return "state";
    case ST_ERR_NOT_FOUND: return "not_found";
    case ST_ERR_NETWORK: return "network";
    case ST_ERR_SIMULATION: return "simulation";
    case ST_ERR_IO: return "io";
    case ST_ERR_INTERNAL: return "internal";
  }
  return "unknown";
}

const char* st_version(void) { return SCALETWIN_VERSION; }

void st_sim_options_init(st_sim_options* o) {
  if (!o) return;
  const WorldConfig w;
  const BridgeOptions b;
  o->dt = w.dt;
  o->frame_rate = w.frame_rate;
  o->seed = w.seed;
  o->vehicles = 1;
  o->vehicle_config = nullptr;
  o->ips_noise_std = -1.0;
  o->v2v = b.v2v ? 1 : 0;
  o->manual = 0;
  o->outbox_capacity = b.outbox_capacity;
}

st_status st_sim_create(const char* scene_path, const st_sim_options* o, st_sim** out) {
  REQUIRE_ARG(scene_path && o && out, "scene_path, options and out are required");
  *out = nullptr;
  return guarded([&] {
    Scene scene = load_scene_file(scene_path);
    WorldConfig wc;
    wc.dt = o->dt;
    wc.frame_rate = o->frame_rate;
    wc.seed = o->seed;
    if (o->vehicle_config) wc.vehicle = load_vehicle_config_file(o->vehicle_config);
    if (o->ips_noise_std >= 0.0) wc.vehicle.ips_noise_std = o->ips_noise_std;
    if (o->vehicles < 1) throw ConfigError("vehicles: must be >= 1");
    if (static_cast<std::size_t>(o->vehicles) > scene.spawns.size())
      throw ConfigError("vehicles: scene '" + scene.name + "' has only " + std::to_string(scene.spawns.size()) +
                        " spawn poses");
    if (o->outbox_capacity < 1) throw ConfigError("outbox_capacity: must be >= 1");
    std::vector<VehicleSpawn> spawns;
    for (int i = 0; i < o->vehicles; ++i) spawns.push_back({"V" + std::to_string(i + 1), scene.spawns[i].pose});

    auto sim = std::make_unique<st_sim>();
    sim->world = std::make_unique<World>(std::move(scene), wc, std::move(spawns));
    BridgeOptions bo;
    bo.v2v = o->v2v != 0;
    bo.initial_mode = o->manual ? DriveMode::kManual : DriveMode::kAutonomous;
    bo.outbox_capacity = o->outbox_capacity;
    sim->bridge = std::make_unique<Bridge>(*sim->world, bo);
    sim->outbox_capacity = o->outbox_capacity;
    *out = sim.release();
    return ST_OK;
  });
}

void st_sim_destroy(st_sim* sim) {
  if (!sim) return;
  if (sim->server) sim->server->stop();
  delete sim;
}

st_status st_sim_serve(st_sim* sim, const char* bind, uint16_t* port) {
  REQUIRE_ARG(sim && bind, "sim and bind are required");
  return guarded([&] {
    if (sim->server) throw StateError("the bridge is already being served");
    sim->server = std::make_unique<WsServer>(*sim->bridge, parse_host_port(bind), sim->outbox_capacity);
    if (port) *port = sim->server->port();
    return ST_OK;
  });
}

st_status st_sim_step(st_sim* sim, int64_t ticks) {
  REQUIRE_ARG(sim && ticks >= 0, "sim is required and ticks must be >= 0");
  return guarded([&] {
    for (int64_t i = 0; i < ticks; ++i) sim->bridge->tick();
    return ST_OK;
  });
}

st_status st_sim_run(st_sim* sim, double realtime_factor, int64_t max_ticks, st_loop_stats* stats) {
  REQUIRE_ARG(sim, "sim is required");
  REQUIRE_ARG(std::isfinite(realtime_factor) && realtime_factor >= 0.0, "realtime_factor must be >= 0");
  return guarded([&] {
    LoopOptions lo;
    lo.realtime_factor = realtime_factor;
    lo.max_ticks = max_ticks;
    const LoopStats ls = run_loop(*sim->bridge, lo, sim->stop);
    sim->stop = false;
    if (stats) {
      const BridgeStats bs = sim->bridge->stats();
      stats->ticks = ls.ticks;
      stats->wall_seconds = ls.wall_seconds;
      stats->tick_cpu_mean_us = ls.tick_cpu_mean_us;
      stats->tick_cpu_max_us = ls.tick_cpu_max_us;
      stats->frames_published = bs.frames_published;
      stats->messages_dropped = bs.messages_dropped;
      stats->clients = bs.clients;
    }
    return ST_OK;
  });
}

void st_sim_stop(st_sim* sim) {
  if (sim) sim->stop.store(true, std::memory_order_relaxed);
}

st_status st_sim_set_command(st_sim* sim, const char* vehicle, double throttle, double steering) {
  REQUIRE_ARG(sim && vehicle, "sim and vehicle are required");
  return guarded([&] {
    ActuationCommand c;
    c.vehicle_id = vehicle;
    c.throttle = throttle;
    c.steering = steering;
    sim->bridge->submit_command(c);
    return ST_OK;
  });
}

st_status st_sim_vehicle_state(const st_sim* sim, const char* vehicle, double pose[3], double* speed) {
  REQUIRE_ARG(sim && vehicle, "sim and vehicle are required");
  return guarded([&] {
    for (const PeerState& p : sim->world->peers()) {
      if (p.vehicle_id != vehicle) continue;
      if (pose) {
        pose[0] = p.position.x();
        pose[1] = p.position.y();
        pose[2] = p.yaw;
      }
      if (speed) *speed = p.velocity;
      return ST_OK;
    }
    throw NotFoundError(std::string("unknown vehicle '") + vehicle + "'");
  });
}

st_status st_sim_clock(const st_sim* sim, int64_t* ticks, double* time) {
  REQUIRE_ARG(sim, "sim is required");
  if (ticks) *ticks = sim->world->ticks();
  if (time) *time = sim->world->time();
  g_error.clear();
  return ST_OK;
}

st_status st_sim_set_light(st_sim* sim, const char* element, const char* state) {
  REQUIRE_ARG(sim && element && state, "sim, element and state are required");
  return guarded([&] {
    const auto s = light_state_from_string(state);
    if (!s) throw StateError(std::string("unknown light state '") + state + "'");
    sim->bridge->submit_light(element, *s);
    return ST_OK;
  });
}

st_status st_sim_record_start(st_sim* sim) {
  REQUIRE_ARG(sim, "sim is required");
  return guarded([&] {
    Recorder& r = sim->bridge->recorder();
    if (r.recording()) throw StateError("already recording");
    r.start(sim->world->ticks());
    return ST_OK;
  });
}

st_status st_sim_record_stop(st_sim* sim) {
  REQUIRE_ARG(sim, "sim is required");
  return guarded([&] {
    Recorder& r = sim->bridge->recorder();
    if (!r.recording()) throw StateError("not recording");
    r.stop();
    return ST_OK;
  });
}

st_status st_sim_record_rows(const st_sim* sim, int64_t* rows) {
  REQUIRE_ARG(sim && rows, "sim and rows are required");
  *rows = static_cast<int64_t>(sim->bridge->recorder().rows());
  g_error.clear();
  return ST_OK;
}

st_status st_sim_record_export(const st_sim* sim, const char* path) {
  REQUIRE_ARG(sim && path, "sim and path are required");
  return guarded([&] {
    const std::string csv = sim->bridge->recorder().export_csv();
    std::ofstream out(path, std::ios::binary);
    out << csv;
    out.close();
    if (!out) return fail(ST_ERR_IO, std::string("cannot write '") + path + "'");
    return ST_OK;
  });
}

st_status st_replay_file(const char* path, st_replay_report* report) {
  REQUIRE_ARG(path && report, "path and report are required");
  return guarded([&] {
    std::ifstream in(path, std::ios::binary);
    if (!in) return fail(ST_ERR_IO, std::string("cannot open record '") + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    const ReplayReport r = replay_record(ss.str());
    report->rows = static_cast<int64_t>(r.rows);
    report->max_deviation = r.max_deviation;
    report->byte_identical = r.byte_identical ? 1 : 0;
    return ST_OK;
  });
}

void st_env_options_init(st_env_options* o) {
  if (!o) return;
  const EnvConfig c;
  o->dt = c.world.dt;
  o->ticks_per_step = c.ticks_per_step;
  o->throttle = c.throttle;
  o->goal_tolerance = c.goal_tolerance;
  o->max_steps = c.max_steps;
  o->spawn_jitter = c.spawn_jitter;
}

st_status st_env_create(const char* scene_path, const st_env_options* o, st_env** out) {
  REQUIRE_ARG(scene_path && o && out, "scene_path, options and out are required");
  *out = nullptr;
  return guarded([&] {
    auto env = std::make_unique<st_env>();
    env->scene = load_scene_file(scene_path);
    env->config.world.dt = o->dt;
    env->config.ticks_per_step = o->ticks_per_step;
    env->config.throttle = o->throttle;
    env->config.goal_tolerance = o->goal_tolerance;
    env->config.max_steps = o->max_steps;
    env->config.spawn_jitter = o->spawn_jitter;
    env->env = std::make_unique<IntersectionEnv>(env->scene, env->config);
    *out = env.release();
    return ST_OK;
  });
}

void st_env_destroy(st_env* env) {
  if (!env) return;
  if (env->server) env->server->stop();
  delete env;
}

st_status st_env_reset(st_env* env, const char* scenario, uint64_t seed, size_t* agents) {
  REQUIRE_ARG(env && scenario, "env and scenario are required");
  return guarded([&] {
    const auto obs = env->env->reset(scenario, seed);
    if (agents) *agents = obs.size();
    return ST_OK;
  });
}

st_status st_env_observation(const st_env* env, size_t index, double* buffer, size_t capacity, size_t* len) {
  REQUIRE_ARG(env && (buffer || capacity == 0), "env is required and buffer may be NULL only with capacity 0");
  return guarded([&] {
    const auto obs = env->env->observations();
    if (index >= obs.size()) throw NotFoundError("agent index " + std::to_string(index) + " out of range");
    const auto v = obs[index].vector();
    for (size_t i = 0; i < v.size() && i < capacity; ++i) buffer[i] = v[i];
    if (len) *len = v.size();
    return ST_OK;
  });
}

st_status st_env_step(st_env* env, const int* actions, size_t count, double* rewards, st_done_reason* reasons,
                      int* episode_done) {
  REQUIRE_ARG(env && actions, "env and actions are required");
  return guarded([&] {
    const auto agents = env->env->agents();
    if (count != agents.size())
      throw ConfigError("expected " + std::to_string(agents.size()) + " actions, got " + std::to_string(count));
    std::map<std::string, int> m;
    for (size_t i = 0; i < count; ++i) m[agents[i]] = actions[i];
    const EnvStepResult r = env->env->step(m);
    for (size_t i = 0; i < r.agents.size(); ++i) {
      if (rewards) rewards[i] = r.agents[i].reward;
      if (reasons) reasons[i] = static_cast<st_done_reason>(r.agents[i].reason);
    }
    if (episode_done) *episode_done = r.episode_done ? 1 : 0;
    return ST_OK;
  });
}

st_status st_env_serve(st_env* env, const char* bind, uint16_t* port) {
  REQUIRE_ARG(env && bind, "env and bind are required");
  return guarded([&] {
    if (env->server) throw StateError("the environment is already being served");
    env->endpoint = std::make_unique<EnvServer>(env->scene, env->config);
    env->server = std::make_unique<WsServer>(*env->endpoint, parse_host_port(bind));
    if (port) *port = env->server->port();
    return ST_OK;
  });
}

st_status st_scm_create(const char* bridge, const char* http_bind, st_scm** out) {
  REQUIRE_ARG(bridge && http_bind && out, "bridge, http_bind and out are required");
  *out = nullptr;
  return guarded([&] {
    auto scm = std::make_unique<st_scm>();
    scm->bridge = parse_host_port(bridge);
    const HostPort http = parse_host_port(http_bind);
    scm->client = std::make_unique<ScmClient>(scm->db, ScmClientOptions{scm->bridge});
    ScmClient* client = scm->client.get();
    scm->service = std::make_unique<ScmService>(
        scm->db, [client](Envelope e) { return client->request(std::move(e), std::chrono::seconds(2)); });
    scm->http = std::make_unique<ScmHttpServer>(*scm->service, http);
    *out = scm.release();
    return ST_OK;
  });
}

void st_scm_destroy(st_scm* scm) {
  if (!scm) return;
  scm->pilot.reset();
  if (scm->http) scm->http->stop();
  if (scm->client) scm->client->stop();
  delete scm;
}

st_status st_scm_http_port(const st_scm* scm, uint16_t* port) {
  REQUIRE_ARG(scm && port, "scm and port are required");
  *port = scm->http->port();
  g_error.clear();
  return ST_OK;
}

st_status st_scm_wait_synced(const st_scm* scm, int timeout_ms) {
  REQUIRE_ARG(scm && timeout_ms >= 0, "scm is required and timeout_ms must be >= 0");
  return guarded([&] {
    if (!scm->client->wait_synced(std::chrono::milliseconds(timeout_ms)))
      throw NetworkError("no snapshot from the bridge within " + std::to_string(timeout_ms) + " ms");
    return ST_OK;
  });
}

st_status st_scm_pilot(st_scm* scm, const char* vehicle, const char* scene_path, const char* route,
                       const char* rules_path) {
  REQUIRE_ARG(scm && vehicle && scene_path && route && rules_path, "all arguments are required");
  return guarded([&] {
    if (scm->pilot) throw StateError("a pilot is already running");
    const Scene scene = load_scene_file(scene_path);
    ScmPilotOptions opt;
    opt.server = scm->bridge;
    opt.vehicle = vehicle;
    opt.path = scene.route(route).points;
    opt.rules = load_rules_file(rules_path);
    scm->pilot = std::make_unique<ScmPilot>(scm->db, std::move(opt));
    return ST_OK;
  });
}

st_status st_scm_pilot_done(const st_scm* scm, int* done) {
  REQUIRE_ARG(scm && done, "scm and done are required");
  *done = scm->pilot && scm->pilot->done() ? 1 : 0;
  g_error.clear();
  return ST_OK;
}

}  // extern "C"
