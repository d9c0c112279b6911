#pragma once

#include <cstdint>
#include <optional>
#include <string_view>

#include "flow3d/device_profile.hpp"
#include "flow3d/rational.hpp"
#include "flow3d/schedule.hpp"

namespace flow3d {

/// Words per cycle per stream. All four are zero-free only for Conv/FC.
/// A zero-output invocation has no compute phase; its rates are unbounded.
struct StreamRates {
  Rational in;
  Rational out;
  Rational param;
  Rational psum;
  bool unbounded = false;
};

enum class Bound { Compute, MemoryIn, MemoryOut };

std::string_view to_string(Bound bound);

struct LatencyBreakdown {
  std::int64_t compute_cycles = 0;
  /// Constrained words per cycle; std::nullopt when nothing limits the stream.
  std::optional<Rational> bw_in;
  std::optional<Rational> bw_out;
  Bound bound = Bound::Compute;
  std::int64_t total_cycles = 0;
};

/// Cycles with unlimited memory bandwidth, rounded up. Throws on a zero fold.
std::int64_t compute_latency(const RuntimeConfig& cfg);

StreamRates stream_rates(const RuntimeConfig& cfg);

/// Roofline latency of one invocation.
LatencyBreakdown invocation_latency(const RuntimeConfig& cfg, const DeviceProfile& dev);

std::int64_t schedule_latency(const Schedule& schedule, const DeviceProfile& dev);
std::int64_t schedule_latency(const CompactSchedule& schedule, const DeviceProfile& dev);

inline double cycles_to_seconds(std::int64_t cycles, const DeviceProfile& dev) {
  return static_cast<double>(cycles) / dev.clock_hz;
}

}  // namespace flow3d
