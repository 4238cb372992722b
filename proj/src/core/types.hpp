#pragma once

#include <cstdint>
#include <string>

namespace scaletwin {

/// Normalized drive command for one vehicle. Steering is a fraction of the
/// configured steering limit, positive turns left.
struct ActuationCommand {
  std::string vehicle_id;
  double throttle = 0.0;  // [-1, 1]
  double steering = 0.0;  // [-1, 1]
  std::int64_t seq = 0;
};

}  // namespace scaletwin
