#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "flow3d/model_ir.hpp"

namespace flow3d::zoo {

/// C3D for 16x112x112 clips: 8 conv, 5 pool, 3 FC; 27 layers including the flatten view.
ModelGraph c3d(std::int64_t classes = 101);

/// R(2+1)D-18 style network with factorized spatial/temporal convolutions and residual adds.
ModelGraph r2plus1d_18(std::int64_t classes = 101);

/// Seven-layer network for quick experiments and tests.
ModelGraph toy();

/// Small network whose layers differ strongly in depth, channels and kernel shape,
/// so that one computation node per kind has to execute very different workloads.
ModelGraph multi_shape();

std::vector<std::string> names();
/// Throws std::invalid_argument for unknown names.
ModelGraph by_name(std::string_view name);

}  // namespace flow3d::zoo
