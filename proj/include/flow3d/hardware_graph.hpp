#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "flow3d/model_ir.hpp"
#include "flow3d/schedule.hpp"
#include "json.hpp"

namespace flow3d {

class HardwareGraphError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Compile-time capability of one computation node (its maximum parameter tuple).
struct NodeCapability {
  std::string id;
  LayerKind kind = LayerKind::Conv3D;
  TensorShape shape_in_max;
  /// Largest output tile any mapped layer produces; derived from the input
  /// tiling, see refresh_output_bound.
  TensorShape shape_out_max;
  std::int64_t filters_max = 0;
  Triple kernel_max;
  Triple stride_max;
  Padding padding_max;
  /// Parallel streams in. For kinds without separate in/out streams this is c_n.
  std::int64_t coarse_in = 1;
  std::int64_t coarse_out = 1;
  std::int64_t fine = 1;
  std::set<OpType> supports_types;
  bool supports_broadcast = false;
  bool runtime_configurable = true;

  /// Output-channel extent the coarse_out streams must divide.
  [[nodiscard]] std::int64_t channels_out_max() const {
    return has_filters(kind) ? filters_max : shape_in_max.c;
  }

  friend bool operator==(const NodeCapability&, const NodeCapability&) = default;
};

/// Computation nodes plus the execution mapping from nodes to model layers.
///
/// Fused activations are not mapped to any node: they ride on their producer's
/// output stream. Flatten views never reach the hardware. Every other layer is
/// mapped to exactly one node of its own kind.
struct HardwareGraph {
  std::vector<NodeCapability> nodes;
  /// node id -> layer ids (sorted)
  std::map<std::string, std::vector<std::string>> mapping;
  /// fused activation id -> producer layer id
  std::map<std::string, std::string> fused;
  /// Source of fresh node ids.
  std::int64_t next_serial = 0;

  [[nodiscard]] const NodeCapability& node(const std::string& id) const;
  [[nodiscard]] const NodeCapability* find_node(const std::string& id) const;
  [[nodiscard]] NodeCapability* find_node(const std::string& id);
  /// Inverse mapping; empty string when the layer is unmapped (fused or a view).
  [[nodiscard]] std::string node_of(const std::string& layer_id) const;
  [[nodiscard]] const std::vector<std::string>& layers_of(const std::string& node_id) const;

  friend bool operator==(const HardwareGraph&, const HardwareGraph&) = default;
};

/// Sizes a capability to the element-wise maximum of the given layers'
/// parameters. Folding factors start at 1.
NodeCapability derive_capability(const ModelGraph& model, LayerKind kind, const std::vector<std::string>& layer_ids,
                                 std::string id);

/// Recomputes shape_out_max from the node's input bounds and its layers.
void refresh_output_bound(NodeCapability& cap, const ModelGraph& model, const std::vector<std::string>& layer_ids);

/// Shrinks folds to the largest values that still divide the node's bounds.
void repair_folds(NodeCapability& cap);

/// One node per layer kind, each covering all layers of that kind.
HardwareGraph initial_mapping(const ModelGraph& model);

/// Merges same-kind nodes into the first id (in sorted order). The survivor's
/// bounds only grow; folds keep the largest divisor-compatible value.
HardwareGraph combine_nodes(const HardwareGraph& g, const ModelGraph& model, const std::set<std::string>& node_ids);

/// Moves `layer_ids` from `node_id` onto a new node. The source keeps its
/// bounds; detaching every layer replaces the source node outright.
HardwareGraph separate_node(const HardwareGraph& g, const ModelGraph& model, const std::string& node_id,
                            const std::set<std::string>& layer_ids);

/// Fuses each activation whose single producer is a Conv3D, FullyConnected or
/// ElementWise layer (and feeds nothing else) into that producer's stream.
HardwareGraph fuse_activations(const HardwareGraph& g, const ModelGraph& model);

/// Layers that produce schedule entries, in topological order.
std::vector<std::string> schedulable_layers(const HardwareGraph& g, const ModelGraph& model);

/// Disjoint-cover and kind checks; empty when the mapping is valid.
std::vector<std::string> validate_mapping(const HardwareGraph& g, const ModelGraph& model);

/// Divisors of n in increasing order.
std::vector<std::int64_t> divisors(std::int64_t n);

/// Serialized design: the model, the node set with its mapping, and the execution mode.
struct Design {
  ModelGraph model;
  HardwareGraph graph;
  ExecutionMode mode = ExecutionMode::RuntimeConfigurable;
};

nlohmann::json node_to_json(const NodeCapability& cap);
NodeCapability node_from_json(const nlohmann::json& j);
nlohmann::json design_to_json(const Design& design);
Design design_from_json(const nlohmann::json& doc);

}  // namespace flow3d
