#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <csignal>
#include <cstdio>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "scaletwin/scaletwin.h"

namespace {

enum Exit : int {
  kOk = 0,
  kUsage = 2,
  kConfig = 3,
  kScene = 4,
  kRuntime = 5,
  kNetwork = 6,
  kMismatch = 7,
  kFormat = 8,
};

volatile std::sig_atomic_t g_stop = 0;
std::atomic<st_sim*> g_sim{nullptr};

void on_signal(int) {
  g_stop = 1;
  if (st_sim* sim = g_sim.load()) st_sim_stop(sim);
}

int exit_code(st_status s) {
  switch (s) {
    case ST_OK: return kOk;
    case ST_ERR_ARGUMENT: return kUsage;
    case ST_ERR_CONFIG: return kConfig;
    case ST_ERR_SCENE: return kScene;
    case ST_ERR_NETWORK: return kNetwork;
    case ST_ERR_FORMAT:
    case ST_ERR_IO: return kFormat;
    default: return kRuntime;
  }
}

struct Failure {
  int code;
};

void check(st_status s, const char* what) {
  if (s == ST_OK) return;
  std::fprintf(stderr, "scaletwin: %s: %s error: %s\n", what, st_status_name(s), st_last_error());
  throw Failure{exit_code(s)};
}

template <class T, void (*Destroy)(T*)>
struct Handle {
  T* p = nullptr;
  ~Handle() { Destroy(p); }
};

struct RunArgs {
  std::string scene;
  int vehicles = 1;
  std::uint64_t seed = 0;
  double dt = 0.0;
  double frame_rate = 0.0;
  double duration = -1.0;
  std::string record;
  std::string bind = "127.0.0.1:8765";
  bool headless = false;
  double realtime_factor = 1.0;
  std::string vehicle_config;
  double ips_noise = -1.0;
  bool manual = false;
  bool no_v2v = false;
  double throttle = 0.0;
  double steering = 0.0;
};

void print_stats(std::FILE* out, const st_loop_stats& s, double dt) {
  const double rate = s.wall_seconds > 0 ? static_cast<double>(s.ticks) / s.wall_seconds : 0.0;
  std::fprintf(out,
               "ticks=%lld sim_time=%.3f wall=%.3f tick_rate=%.1fHz rtf=%.2f tick_cpu_mean=%.1fus tick_cpu_max=%.1fus "
               "frames=%llu dropped=%llu clients=%llu\n",
               static_cast<long long>(s.ticks), static_cast<double>(s.ticks) * dt, s.wall_seconds, rate, rate * dt,
               s.tick_cpu_mean_us, s.tick_cpu_max_us, static_cast<unsigned long long>(s.frames_published),
               static_cast<unsigned long long>(s.messages_dropped), static_cast<unsigned long long>(s.clients));
}

int run(const RunArgs& a) {
  if (a.scene.empty()) {
    std::fprintf(stderr, "scaletwin: run: --scene is required\n");
    return kUsage;
  }
  st_sim_options o;
  st_sim_options_init(&o);
  if (a.dt > 0) o.dt = a.dt;
  if (a.frame_rate > 0) o.frame_rate = a.frame_rate;
  o.seed = a.seed;
  o.vehicles = a.vehicles;
  o.vehicle_config = a.vehicle_config.empty() ? nullptr : a.vehicle_config.c_str();
  o.ips_noise_std = a.ips_noise;
  o.manual = a.manual ? 1 : 0;
  o.v2v = a.no_v2v ? 0 : 1;
  if (a.headless && a.duration < 0) {
    std::fprintf(stderr, "scaletwin: run: --headless needs --duration\n");
    return kUsage;
  }

  Handle<st_sim, st_sim_destroy> sim;
  check(st_sim_create(a.scene.c_str(), &o, &sim.p), "run");
  g_sim = sim.p;
  for (int i = 1; i <= a.vehicles; ++i) {
    const std::string id = "V" + std::to_string(i);
    check(st_sim_set_command(sim.p, id.c_str(), a.throttle, a.steering), "run");
  }
  if (!a.headless) {
    std::uint16_t port = 0;
    check(st_sim_serve(sim.p, a.bind.c_str(), &port), "run");
    std::fprintf(stderr, "bridge listening on port %u\n", port);
  }
  if (!a.record.empty()) check(st_sim_record_start(sim.p), "run");

  const std::int64_t total = a.duration < 0 ? -1 : std::llround(a.duration / o.dt);
  const double rtf = a.headless ? 0.0 : a.realtime_factor;
  st_loop_stats sum{};
  if (a.headless) {
    check(st_sim_run(sim.p, rtf, total, &sum), "run");
  } else {
    // Report once per simulated second while serving.
    double cpu_weighted = 0.0;
    const std::int64_t chunk = std::max<std::int64_t>(1, std::llround(1.0 / o.dt));
    while (!g_stop && (total < 0 || sum.ticks < total)) {
      const std::int64_t n = total < 0 ? chunk : std::min(chunk, total - sum.ticks);
      st_loop_stats s{};
      check(st_sim_run(sim.p, rtf, n, &s), "run");
      sum.ticks += s.ticks;
      sum.wall_seconds += s.wall_seconds;
      cpu_weighted += s.tick_cpu_mean_us * static_cast<double>(s.ticks);
      sum.tick_cpu_max_us = std::max(sum.tick_cpu_max_us, s.tick_cpu_max_us);
      sum.frames_published = s.frames_published;
      sum.messages_dropped = s.messages_dropped;
      sum.clients = s.clients;
      sum.tick_cpu_mean_us = cpu_weighted / static_cast<double>(std::max<std::int64_t>(1, sum.ticks));
      print_stats(stderr, sum, o.dt);
      if (s.ticks < n) break;
    }
  }
  g_sim = nullptr;
  print_stats(stdout, sum, o.dt);

  if (!a.record.empty()) {
    check(st_sim_record_stop(sim.p), "run");
    std::int64_t rows = 0;
    check(st_sim_record_rows(sim.p, &rows), "run");
    check(st_sim_record_export(sim.p, a.record.c_str()), "run");
    std::printf("record=%s rows=%lld\n", a.record.c_str(), static_cast<long long>(rows));
  }
  return kOk;
}

int replay(const std::string& path) {
  st_replay_report r{};
  check(st_replay_file(path.c_str(), &r), "replay");
  std::printf("rows=%lld max_deviation=%.9g byte_identical=%s\n", static_cast<long long>(r.rows), r.max_deviation,
              r.byte_identical ? "yes" : "no");
  return r.byte_identical && r.max_deviation == 0.0 ? kOk : kMismatch;
}

struct EnvArgs {
  std::string scene;
  std::string bind;
  int rollouts = 0;
  std::string scenario = "multi";
  std::uint64_t seed = 0;
  int ticks_per_step = 0;
  int max_steps = 0;
  double spawn_jitter = -1.0;
};

const char* reason_name(st_done_reason r) {
  switch (r) {
    case ST_DONE_GOAL: return "goal";
    case ST_DONE_COLLISION: return "collision";
    case ST_DONE_TIMEOUT: return "timeout";
    default: return "none";
  }
}

int env(const EnvArgs& a) {
  if (a.scene.empty()) {
    std::fprintf(stderr, "scaletwin: env: --scene is required\n");
    return kUsage;
  }
  if (a.bind.empty() == (a.rollouts <= 0)) {
    std::fprintf(stderr, "scaletwin: env: give exactly one of --bind or --rollouts\n");
    return kUsage;
  }
  st_env_options o;
  st_env_options_init(&o);
  if (a.ticks_per_step > 0) o.ticks_per_step = a.ticks_per_step;
  if (a.max_steps > 0) o.max_steps = a.max_steps;
  if (a.spawn_jitter >= 0) o.spawn_jitter = a.spawn_jitter;
  Handle<st_env, st_env_destroy> e;
  check(st_env_create(a.scene.c_str(), &o, &e.p), "env");

  if (!a.bind.empty()) {
    std::uint16_t port = 0;
    check(st_env_serve(e.p, a.bind.c_str(), &port), "env");
    std::fprintf(stderr, "environment listening on port %u\n", port);
    while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(50));
    return kOk;
  }

  std::mt19937_64 rng(a.seed);
  std::uniform_int_distribution<int> pick(-1, 1);
  for (int k = 0; k < a.rollouts && !g_stop; ++k) {
    std::size_t n = 0;
    check(st_env_reset(e.p, a.scenario.c_str(), a.seed + static_cast<std::uint64_t>(k), &n), "env");
    std::vector<int> actions(n);
    std::vector<double> rewards(n), returns(n, 0.0);
    std::vector<st_done_reason> reasons(n, ST_DONE_NONE);
    int done = 0, steps = 0;
    while (!done) {
      for (int& x : actions) x = pick(rng);
      check(st_env_step(e.p, actions.data(), n, rewards.data(), reasons.data(), &done), "env");
      for (std::size_t i = 0; i < n; ++i) returns[i] += rewards[i];
      ++steps;
    }
    std::printf("episode=%d steps=%d", k, steps);
    for (std::size_t i = 0; i < n; ++i) std::printf(" agent_%zu=%s:%.6f", i, reason_name(reasons[i]), returns[i]);
    std::printf("\n");
  }
  return kOk;
}

struct ScmArgs {
  std::string bridge = "127.0.0.1:8765";
  std::string bind = "127.0.0.1:8080";
  int sync_timeout_ms = 5000;
  std::string pilot;
  std::string route;
  std::string rules;
  std::string scene;
};

int scm(const ScmArgs& a) {
  const bool piloting = !a.pilot.empty();
  if (piloting && (a.route.empty() || a.rules.empty() || a.scene.empty())) {
    std::fprintf(stderr, "scaletwin: scm: --pilot needs --scene, --route and --rules\n");
    return kUsage;
  }
  Handle<st_scm, st_scm_destroy> s;
  check(st_scm_create(a.bridge.c_str(), a.bind.c_str(), &s.p), "scm");
  std::uint16_t port = 0;
  check(st_scm_http_port(s.p, &port), "scm");
  std::fprintf(stderr, "scm http api on port %u\n", port);
  check(st_scm_wait_synced(s.p, a.sync_timeout_ms), "scm");
  if (piloting) check(st_scm_pilot(s.p, a.pilot.c_str(), a.scene.c_str(), a.route.c_str(), a.rules.c_str()), "scm");
  while (!g_stop) {
    int done = 0;
    check(st_scm_pilot_done(s.p, &done), "scm");
    if (piloting && done) {
      std::printf("pilot %s reached the end of route %s\n", a.pilot.c_str(), a.route.c_str());
      break;
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(50));
  }
  return kOk;
}

std::string env_name(const std::string& flag) {
  std::string s = "SCALETWIN_";
  for (char c : flag) s += c == '-' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return s;
}

// Fills options still unset after the command line and environment from a
// TOML file; [run], [env] and [scm] tables map to the subcommands.
void apply_config_file(CLI::App& app, const std::string& path) {
  std::vector<CLI::ConfigItem> items;
  try {
    items = CLI::ConfigTOML().from_file(path);
  } catch (const CLI::Error& e) {
    std::fprintf(stderr, "scaletwin: config '%s': %s\n", path.c_str(), e.what());
    throw Failure{kConfig};
  }
  for (const CLI::ConfigItem& item : items) {
    if (item.name == "++" || item.name == "--") continue;
    if (item.parents.size() != 1) {
      std::fprintf(stderr, "scaletwin: config '%s': key '%s' must sit in a [run], [env] or [scm] table\n",
                   path.c_str(), item.fullname().c_str());
      throw Failure{kConfig};
    }
    CLI::App* sub = app.get_subcommand_no_throw(item.parents[0]);
    CLI::Option* opt = sub ? sub->get_option_no_throw("--" + item.name) : nullptr;
    if (!opt) {
      std::fprintf(stderr, "scaletwin: config '%s': unknown key '%s'\n", path.c_str(), item.fullname().c_str());
      throw Failure{kConfig};
    }
    if (!sub->parsed() || opt->count() > 0) continue;
    try {
      opt->add_result(item.inputs);
      opt->run_callback();
    } catch (const CLI::Error& e) {
      std::fprintf(stderr, "scaletwin: config '%s': %s: %s\n", path.c_str(), item.fullname().c_str(), e.what());
      throw Failure{kConfig};
    }
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Scale-car digital twin: simulation bridge, replay, intersection environment and city manager"};
  app.require_subcommand(1);
  std::string config;
  app.add_option("--config", config, "TOML file with [run], [env] or [scm] tables")
      ->envname("SCALETWIN_CONFIG")
      ->check(CLI::ExistingFile);
  app.set_version_flag("--version", std::string(st_version()));

  auto opt = [](CLI::App* sub, const std::string& flag, auto& var, const std::string& help) {
    return sub->add_option("--" + flag, var, help)->envname(env_name(flag));
  };
  auto flag = [](CLI::App* sub, const std::string& name, bool& var, const std::string& help) {
    return sub->add_flag("--" + name, var, help)->envname(env_name(name));
  };

  RunArgs ra;
  CLI::App* run_cmd = app.add_subcommand("run", "Simulate a scene and serve the bridge");
  opt(run_cmd, "scene", ra.scene, "scene JSON file (required)");
  opt(run_cmd, "vehicles", ra.vehicles, "vehicles at the first N spawns, ids V1..VN")->check(CLI::PositiveNumber);
  opt(run_cmd, "seed", ra.seed, "noise seed");
  opt(run_cmd, "dt", ra.dt, "physics step, s")->check(CLI::PositiveNumber);
  opt(run_cmd, "frame-rate", ra.frame_rate, "sensor frame rate, Hz")->check(CLI::PositiveNumber);
  opt(run_cmd, "duration", ra.duration, "simulated seconds; unbounded when omitted")->check(CLI::NonNegativeNumber);
  opt(run_cmd, "record", ra.record, "write the CSV record here on exit");
  opt(run_cmd, "bind", ra.bind, "bridge address host:port");
  flag(run_cmd, "headless", ra.headless, "no bridge; run as fast as possible");
  opt(run_cmd, "realtime-factor", ra.realtime_factor, "sim seconds per wall second; 0 is unpaced")
      ->check(CLI::NonNegativeNumber);
  opt(run_cmd, "vehicle-config", ra.vehicle_config, "vehicle calibration JSON")->check(CLI::ExistingFile);
  opt(run_cmd, "ips-noise", ra.ips_noise, "IPS noise standard deviation, m")->check(CLI::NonNegativeNumber);
  flag(run_cmd, "manual", ra.manual, "start vehicles in manual mode");
  flag(run_cmd, "no-v2v", ra.no_v2v, "do not share peer states");
  opt(run_cmd, "throttle", ra.throttle, "initial throttle for every vehicle")->check(CLI::Range(-1.0, 1.0));
  opt(run_cmd, "steering", ra.steering, "initial steering for every vehicle")->check(CLI::Range(-1.0, 1.0));

  std::string record;
  CLI::App* replay_cmd = app.add_subcommand("replay", "Re-simulate a record and compare");
  replay_cmd->add_option("record", record, "CSV record")->required();

  EnvArgs ea;
  CLI::App* env_cmd = app.add_subcommand("env", "Intersection environment: serve trainers or run random rollouts");
  opt(env_cmd, "scene", ea.scene, "scene JSON with scenarios (required)");
  opt(env_cmd, "bind", ea.bind, "serve trainers on host:port");
  opt(env_cmd, "rollouts", ea.rollouts, "episodes under a uniform random policy")->check(CLI::PositiveNumber);
  opt(env_cmd, "scenario", ea.scenario, "scenario for rollouts");
  opt(env_cmd, "seed", ea.seed, "seed for rollouts");
  opt(env_cmd, "ticks-per-step", ea.ticks_per_step, "physics ticks per action")->check(CLI::PositiveNumber);
  opt(env_cmd, "max-steps", ea.max_steps, "episode step limit")->check(CLI::PositiveNumber);
  opt(env_cmd, "spawn-jitter", ea.spawn_jitter, "spawn position jitter, m")->check(CLI::NonNegativeNumber);

  ScmArgs sa;
  CLI::App* scm_cmd = app.add_subcommand("scm", "City manager: mirror a bridge and serve the HTTP API");
  opt(scm_cmd, "bridge", sa.bridge, "bridge address host:port");
  opt(scm_cmd, "bind", sa.bind, "HTTP address host:port");
  opt(scm_cmd, "sync-timeout", sa.sync_timeout_ms, "ms to wait for the first snapshot")->check(CLI::PositiveNumber);
  opt(scm_cmd, "pilot", sa.pilot, "vehicle to drive along --route");
  opt(scm_cmd, "route", sa.route, "route name in --scene");
  opt(scm_cmd, "rules", sa.rules, "behavior rules JSON")->check(CLI::ExistingFile);
  opt(scm_cmd, "scene", sa.scene, "scene JSON holding the route");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  try {
    if (!config.empty()) apply_config_file(app, config);
    if (run_cmd->parsed()) return run(ra);
    if (replay_cmd->parsed()) return replay(record);
    if (env_cmd->parsed()) return env(ea);
    return scm(sa);
  } catch (const Failure& f) {
    return f.code;
  }
}
