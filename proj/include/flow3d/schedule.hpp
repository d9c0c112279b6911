#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "flow3d/model_ir.hpp"

namespace flow3d {

/// Parameters a computation node executes for one invocation (the hatted tuple).
/// Non-Conv/FC kinds use coarse_in == coarse_out as their single stream count.
struct RuntimeConfig {
  LayerKind kind = LayerKind::Conv3D;
  TensorShape shape_in;
  TensorShape shape_out;
  std::int64_t filters = 0;
  Triple kernel;
  Triple stride;
  Padding padding;
  std::int64_t groups = 1;
  OpType op = OpType::None;
  bool broadcast = false;
  std::int64_t coarse_in = 1;
  std::int64_t coarse_out = 1;
  std::int64_t fine = 1;
  /// Set on every channel tile except the last one of a Conv/FC layer.
  bool psum = false;

  friend bool operator==(const RuntimeConfig&, const RuntimeConfig&) = default;
};

enum class ExecutionMode { RuntimeConfigurable, PaddedBaseline };

std::string_view to_string(ExecutionMode mode);
ExecutionMode parse_execution_mode(std::string_view text);

/// Axes of a tile, outermost first.
enum TileAxis : std::size_t { kAxisH = 0, kAxisW, kAxisD, kAxisC, kAxisF, kTileAxes };

/// Which slice of the layer an invocation covers. For Pool/Activation/etc. the
/// F axis is a single [0,1) slice; for grouped convolutions F follows C.
struct TileRegion {
  std::array<std::int64_t, kTileAxes> index{};
  std::array<std::int64_t, kTileAxes> origin{};
  std::array<std::int64_t, kTileAxes> extent{};
  friend bool operator==(const TileRegion&, const TileRegion&) = default;
};

struct ScheduleEntry {
  std::string node_id;
  std::string layer_id;
  TileRegion tile;
  RuntimeConfig config;
};

/// Ordered invocation list covering every schedulable layer.
struct Schedule {
  ExecutionMode mode = ExecutionMode::RuntimeConfigurable;
  std::vector<ScheduleEntry> entries;
};

/// Invocations with identical configs collapsed into one entry with a count.
/// Used by the optimizer; expands to the same total latency as the full schedule.
struct WeightedEntry {
  std::string node_id;
  std::string layer_id;
  RuntimeConfig config;
  std::int64_t count = 0;
};

struct CompactSchedule {
  ExecutionMode mode = ExecutionMode::RuntimeConfigurable;
  std::vector<WeightedEntry> entries;
};

}  // namespace flow3d
