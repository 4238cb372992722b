#pragma once

#include <cstdint>
#include <stdexcept>

namespace scaletwin {

/// Fixed-step simulation clock. Time is derived from an integer tick count so
/// that replays land on bit-identical timestamps.
class SimClock {
 public:
  explicit SimClock(double dt = 0.01) : dt_(dt) {
    if (!(dt > 0.0)) throw std::invalid_argument("SimClock: dt must be positive");
  }

  double dt() const noexcept { return dt_; }
  std::int64_t ticks() const noexcept { return ticks_; }
  double time() const noexcept { return static_cast<double>(ticks_) * dt_; }

  void advance() noexcept { ++ticks_; }
  void reset() noexcept { ticks_ = 0; }

 private:
  double dt_;
  std::int64_t ticks_ = 0;
};

}  // namespace scaletwin
