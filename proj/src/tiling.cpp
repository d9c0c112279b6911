#include "flow3d/tiling.hpp"

#include <algorithm>
#include <stdexcept>

#include "flow3d/rational.hpp"

namespace flow3d {

namespace {

// Outputs whose clamped window anchor lies below input position x.
std::int64_t outputs_below(std::int64_t x, std::int64_t in_extent, std::int64_t out_extent, const AxisWindow& w) {
  if (x <= 0) return 0;
  if (x >= in_extent) return out_extent;
  return std::min(out_extent, ceil_div(x + w.pad_start, w.stride));
}

}  // namespace

std::vector<AxisSegment> tile_axis(std::int64_t in_extent, std::int64_t tile, AxisMap map, std::int64_t out_extent,
                                   AxisWindow window) {
  if (in_extent < 1 || tile < 1) throw std::invalid_argument("tile_axis: extents must be positive");
  const std::int64_t count = ceil_div(in_extent, tile);
  std::vector<AxisSegment> segments;
  segments.reserve(static_cast<std::size_t>(count));
  for (std::int64_t i = 0; i < count; ++i) {
    AxisSegment s;
    s.index = i;
    s.start = i * tile;
    s.extent = std::min(tile, in_extent - s.start);
    s.last = i + 1 == count;
    switch (map) {
      case AxisMap::Identity:
        s.out_extent = s.extent;
        break;
      case AxisMap::Collapse:
        s.out_extent = 1;
        break;
      case AxisMap::Window:
        s.out_extent = outputs_below(s.start + s.extent, in_extent, out_extent, window) -
                       outputs_below(s.start, in_extent, out_extent, window);
        break;
    }
    segments.push_back(s);
  }
  return segments;
}

SpatialTiles spatial_tiles(const LayerDescriptor& layer, const TensorShape& node_shape) {
  const TensorShape& in = layer.input();
  const TensorShape& out = layer.shape_out;
  SpatialTiles t;
  switch (layer.kind) {
    case LayerKind::Conv3D:
    case LayerKind::Pool3D: {
      const Padding& p = layer.padding;
      t.h = tile_axis(in.h, node_shape.h, AxisMap::Window, out.h, {layer.kernel.h, layer.stride.h, p.h_start});
      t.w = tile_axis(in.w, node_shape.w, AxisMap::Window, out.w, {layer.kernel.w, layer.stride.w, p.w_start});
      t.d = tile_axis(in.d, node_shape.d, AxisMap::Window, out.d, {layer.kernel.d, layer.stride.d, p.d_start});
      break;
    }
    case LayerKind::GlobalAvgPool:
      t.h = tile_axis(in.h, node_shape.h, AxisMap::Collapse);
      t.w = tile_axis(in.w, node_shape.w, AxisMap::Collapse);
      t.d = tile_axis(in.d, node_shape.d, AxisMap::Collapse);
      break;
    default:
      t.h = tile_axis(in.h, node_shape.h, AxisMap::Identity);
      t.w = tile_axis(in.w, node_shape.w, AxisMap::Identity);
      t.d = tile_axis(in.d, node_shape.d, AxisMap::Identity);
      break;
  }
  return t;
}

}  // namespace flow3d
