#include "bridge/loop.hpp"

#include <algorithm>
#include <chrono>
#include <thread>

#include <time.h>

namespace scaletwin {

namespace {

double thread_cpu_us() {
  timespec ts{};
  clock_gettime(CLOCK_THREAD_CPUTIME_ID, &ts);
  return static_cast<double>(ts.tv_sec) * 1e6 + static_cast<double>(ts.tv_nsec) * 1e-3;
}

}  // namespace

LoopStats run_loop(Bridge& bridge, const LoopOptions& options, const std::atomic<bool>& stop,
                   const std::function<void(const TickOutput&)>& on_tick) {
  using clock = std::chrono::steady_clock;
  LoopStats stats;
  const auto start = clock::now();
  const double dt = bridge.world().dt();
  double sum = 0.0, sum_sq = 0.0;
  while (!stop.load() && (options.max_ticks < 0 || stats.ticks < options.max_ticks)) {
    const double c0 = thread_cpu_us();
    const TickOutput out = bridge.tick();
    const double cost = thread_cpu_us() - c0;
    ++stats.ticks;
    sum += cost;
    sum_sq += cost * cost;
    stats.tick_cpu_max_us = std::max(stats.tick_cpu_max_us, cost);
    if (on_tick) on_tick(out);
    if (options.realtime_factor > 0.0) {
      const auto due = start + std::chrono::duration_cast<clock::duration>(std::chrono::duration<double>(
                                   static_cast<double>(stats.ticks) * dt / options.realtime_factor));
      std::this_thread::sleep_until(due);
    }
  }
  stats.wall_seconds = std::chrono::duration<double>(clock::now() - start).count();
  if (stats.ticks > 0) {
    const double n = static_cast<double>(stats.ticks);
    stats.tick_cpu_mean_us = sum / n;
    stats.tick_cpu_var_us2 = std::max(0.0, sum_sq / n - stats.tick_cpu_mean_us * stats.tick_cpu_mean_us);
  }
  return stats;
}

}  // namespace scaletwin
