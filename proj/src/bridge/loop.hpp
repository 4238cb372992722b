#pragma once

#include <atomic>
#include <cstdint>
#include <functional>

#include "bridge/bridge.hpp"

namespace scaletwin {

struct LoopOptions {
  double realtime_factor = 1.0;  // 0 runs as fast as possible
  std::int64_t max_ticks = -1;   // -1 runs until stopped
};

struct LoopStats {
  std::int64_t ticks = 0;
  double wall_seconds = 0.0;
  // Per-tick CPU time of the simulation thread, so other threads competing
  // for the core do not show up as tick cost.
  double tick_cpu_mean_us = 0.0;
  double tick_cpu_var_us2 = 0.0;
  double tick_cpu_max_us = 0.0;
};

/// Runs bridge.tick() on the calling thread until `stop` is set or max_ticks
/// is reached. `on_tick` (optional) sees each tick's output.
LoopStats run_loop(Bridge& bridge, const LoopOptions& options, const std::atomic<bool>& stop,
                   const std::function<void(const TickOutput&)>& on_tick = {});

}  // namespace scaletwin
