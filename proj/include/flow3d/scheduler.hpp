#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "flow3d/device_profile.hpp"
#include "flow3d/hardware_graph.hpp"
#include "flow3d/schedule.hpp"
#include "json.hpp"

namespace flow3d {

/// A layer cannot run on the node it is mapped to.
class ScheduleError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tiles every schedulable layer over its node. Layers are visited in
/// topological order; tiles iterate H, W, D, C with F innermost.
Schedule build_schedule(const ModelGraph& model, const HardwareGraph& g, ExecutionMode mode);

/// Same invocations as build_schedule, with identical tiles collapsed.
CompactSchedule compact_schedule(const ModelGraph& model, const HardwareGraph& g, ExecutionMode mode);

/// Empty when `cfg` fits inside `cap`; otherwise the first field that does not.
std::optional<std::string> exceeds_capability(const RuntimeConfig& cfg, const NodeCapability& cap);

struct CoverageReport {
  bool pass = true;
  std::vector<std::string> duplicates;
  std::vector<std::string> gaps;
  /// Layers whose grid exceeds the oracle cap and were not checked.
  std::vector<std::string> skipped;
};

/// Largest grid (cells) the coverage oracle materializes per layer.
inline constexpr std::int64_t kCoverageCellCap = std::int64_t{64} * 64 * 64 * 64;

/// Marks every input cell (and filter, for Conv/FC) each tile touches and
/// checks each is touched exactly once.
CoverageReport coverage_oracle(const Schedule& schedule, const ModelGraph& model);

/// Counts cycles by walking each invocation's loop nest, then applies the
/// DMA caps. Meant for small dimensions only.
std::int64_t schedule_latency_oracle(const Schedule& schedule, const DeviceProfile& dev);

nlohmann::json config_to_json(const RuntimeConfig& cfg);
RuntimeConfig config_from_json(const nlohmann::json& j);
/// Entries carry their latency breakdown when a device is given.
nlohmann::json schedule_to_json(const Schedule& schedule, const DeviceProfile* dev = nullptr);
Schedule schedule_from_json(const nlohmann::json& doc);

}  // namespace flow3d
