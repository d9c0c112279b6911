#pragma once

#include <cstdint>
#include <vector>

#include "flow3d/model_ir.hpp"

namespace flow3d {

/// How output positions along one axis relate to input positions.
enum class AxisMap {
  Identity,  // out == in
  Window,    // sliding window with kernel/stride/padding
  Collapse,  // every tile reduces to a single output (global pooling)
};

struct AxisWindow {
  std::int64_t kernel = 1;
  std::int64_t stride = 1;
  std::int64_t pad_start = 0;
};

/// One tile along an axis. Tiles partition [0, in_extent) without halos.
struct AxisSegment {
  std::int64_t index = 0;
  std::int64_t start = 0;
  std::int64_t extent = 0;
  /// Output positions owned by this tile. An output belongs to the tile that
  /// holds the first element of its window, clamped into the input range.
  std::int64_t out_extent = 0;
  bool last = false;
};

/// Splits `in_extent` into ceil(in_extent / tile) segments of at most `tile`.
std::vector<AxisSegment> tile_axis(std::int64_t in_extent, std::int64_t tile, AxisMap map,
                                   std::int64_t out_extent = 0, AxisWindow window = {});

struct SpatialTiles {
  std::vector<AxisSegment> h;
  std::vector<AxisSegment> w;
  std::vector<AxisSegment> d;
};

/// Tiles a layer's input volume over a node whose input bounds are `node_shape`.
SpatialTiles spatial_tiles(const LayerDescriptor& layer, const TensorShape& node_shape);

}  // namespace flow3d
