#ifndef SCALETWIN_SCALETWIN_H
#define SCALETWIN_SCALETWIN_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define ST_API __declspec(dllexport)
#else
#define ST_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum st_status {
  ST_OK = 0,
  ST_ERR_ARGUMENT = 1,   /* null pointer or out-of-range argument */
  ST_ERR_CONFIG = 2,     /* invalid configuration value */
  ST_ERR_SCENE = 3,      /* scene file missing or invalid */
  ST_ERR_FORMAT = 4,     /* malformed record or message */
  ST_ERR_STATE = 5,      /* operation not valid in the current state */
  ST_ERR_NOT_FOUND = 6,  /* unknown vehicle, element, scenario or agent */
  ST_ERR_NETWORK = 7,    /* bind, connect or timeout failure */
  ST_ERR_SIMULATION = 8, /* numerical fault inside a physics step */
  ST_ERR_IO = 9,         /* file could not be read or written */
  ST_ERR_INTERNAL = 10
} st_status;

/* Message for the last failing call on this thread; empty after success. */
ST_API const char* st_last_error(void);
ST_API const char* st_status_name(st_status status);
ST_API const char* st_version(void);

/* ---- simulation session: world + bridge ---- */

typedef struct st_sim st_sim;

typedef struct st_sim_options {
  double dt;                 /* s, physics step */
  double frame_rate;         /* Hz, sensor frame cadence */
  uint64_t seed;
  int vehicles;              /* placed at the scene's first N spawns, ids V1..VN */
  const char* vehicle_config; /* optional JSON calibration file, NULL for defaults */
  double ips_noise_std;      /* m, overrides the calibration file when >= 0 */
  int v2v;                   /* share PEERS with controllers */
  int manual;                /* start vehicles in manual mode */
  size_t outbox_capacity;    /* per-client queue bound */
} st_sim_options;

typedef struct st_loop_stats {
  int64_t ticks;
  double wall_seconds;
  double tick_cpu_mean_us;
  double tick_cpu_max_us;
  uint64_t frames_published;
  uint64_t messages_dropped;
  uint64_t clients;
} st_loop_stats;

ST_API void st_sim_options_init(st_sim_options* options);
ST_API st_status st_sim_create(const char* scene_path, const st_sim_options* options, st_sim** out);
ST_API void st_sim_destroy(st_sim* sim);

/* Starts the WebSocket bridge. `bind` is "host:port", ":port" or "port";
   port 0 picks a free one, reported through `port` (may be NULL). */
ST_API st_status st_sim_serve(st_sim* sim, const char* bind, uint16_t* port);
/* Advances `ticks` steps on the calling thread. */
ST_API st_status st_sim_step(st_sim* sim, int64_t ticks);
/* Ticks until st_sim_stop() or `max_ticks` (-1: unbounded); realtime_factor 0
   runs as fast as possible. */
ST_API st_status st_sim_run(st_sim* sim, double realtime_factor, int64_t max_ticks, st_loop_stats* stats);
/* Async-signal-safe: only sets a flag that st_sim_run() polls. */
ST_API void st_sim_stop(st_sim* sim);

ST_API st_status st_sim_set_command(st_sim* sim, const char* vehicle, double throttle, double steering);
/* pose = {x, y, yaw}; speed is body-longitudinal, m/s. */
ST_API st_status st_sim_vehicle_state(const st_sim* sim, const char* vehicle, double pose[3], double* speed);
ST_API st_status st_sim_clock(const st_sim* sim, int64_t* ticks, double* time);
ST_API st_status st_sim_set_light(st_sim* sim, const char* element, const char* state);

ST_API st_status st_sim_record_start(st_sim* sim);
ST_API st_status st_sim_record_stop(st_sim* sim);
ST_API st_status st_sim_record_rows(const st_sim* sim, int64_t* rows);
ST_API st_status st_sim_record_export(const st_sim* sim, const char* path);

/* ---- record replay ---- */

typedef struct st_replay_report {
  int64_t rows;
  double max_deviation; /* m, over IPS and pose columns */
  int byte_identical;
} st_replay_report;

ST_API st_status st_replay_file(const char* path, st_replay_report* report);

/* ---- intersection environment ---- */

typedef struct st_env st_env;

typedef struct st_env_options {
  double dt;
  int ticks_per_step;
  double throttle;
  double goal_tolerance; /* m */
  int max_steps;
  double spawn_jitter;   /* m */
} st_env_options;

typedef enum st_done_reason { ST_DONE_NONE = 0, ST_DONE_GOAL = 1, ST_DONE_COLLISION = 2, ST_DONE_TIMEOUT = 3 } st_done_reason;

ST_API void st_env_options_init(st_env_options* options);
ST_API st_status st_env_create(const char* scene_path, const st_env_options* options, st_env** out);
ST_API void st_env_destroy(st_env* env);

ST_API st_status st_env_reset(st_env* env, const char* scenario, uint64_t seed, size_t* agents);
/* Flattened observation of agent `index`: [g.x, g.y, then x, y, yaw, v per
   peer]. `len` receives the full length even when `capacity` is smaller. */
ST_API st_status st_env_observation(const st_env* env, size_t index, double* buffer, size_t capacity, size_t* len);
/* One action in {-1, 0, 1} per agent in index order; actions for finished
   agents are ignored. `rewards` and `reasons` have one slot per agent. */
ST_API st_status st_env_step(st_env* env, const int* actions, size_t count, double* rewards, st_done_reason* reasons,
                             int* episode_done);

/* Serves ENV_RESET / ENV_STEP to trainers; every connection gets its own
   environment. Runs on background threads until st_env_destroy(). */
ST_API st_status st_env_serve(st_env* env, const char* bind, uint16_t* port);

/* ---- smart city manager ---- */

typedef struct st_scm st_scm;

/* Connects to a bridge as the scm role and serves the HTTP API on
   `http_bind`. Both run on background threads until st_scm_destroy(). */
ST_API st_status st_scm_create(const char* bridge, const char* http_bind, st_scm** out);
ST_API void st_scm_destroy(st_scm* scm);
ST_API st_status st_scm_http_port(const st_scm* scm, uint16_t* port);
ST_API st_status st_scm_wait_synced(const st_scm* scm, int timeout_ms);
/* Drives `vehicle` along a named route of `scene_path` with behavior rules
   from `rules_path`. */
ST_API st_status st_scm_pilot(st_scm* scm, const char* vehicle, const char* scene_path, const char* route,
                              const char* rules_path);
ST_API st_status st_scm_pilot_done(const st_scm* scm, int* done);

#ifdef __cplusplus
}
#endif

#endif
