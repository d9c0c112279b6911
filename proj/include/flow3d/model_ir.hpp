#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"

namespace flow3d {

/// Raised for any malformed, inconsistent or unsupported model document.
class ModelError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Feature-map extent. JSON order is [D, H, W, C].
struct TensorShape {
  std::int64_t h = 1;
  std::int64_t w = 1;
  std::int64_t d = 1;
  std::int64_t c = 1;

  [[nodiscard]] std::int64_t volume() const { return h * w * d * c; }
  friend bool operator==(const TensorShape&, const TensorShape&) = default;
};

/// Per-axis window parameter, ordered (D, H, W) as in the model document.
struct Triple {
  std::int64_t d = 1;
  std::int64_t h = 1;
  std::int64_t w = 1;

  [[nodiscard]] std::int64_t volume() const { return d * h * w; }
  friend bool operator==(const Triple&, const Triple&) = default;
};

/// Start/end padding for each axis. JSON order is [Ds, De, Hs, He, Ws, We].
struct Padding {
  std::int64_t d_start = 0, d_end = 0;
  std::int64_t h_start = 0, h_end = 0;
  std::int64_t w_start = 0, w_end = 0;
  friend bool operator==(const Padding&, const Padding&) = default;
};

enum class LayerKind { Conv3D, FullyConnected, Pool3D, Activation, GlobalAvgPool, ElementWise, Flatten };

/// Runtime-selectable operation variant for Pool, Activation and ElementWise layers.
enum class OpType { None, Max, Avg, Relu, Sigmoid, Swish, Add, Mul };

std::string_view to_string(LayerKind kind);
std::string_view to_string(OpType op);
LayerKind parse_layer_kind(std::string_view text);
OpType parse_op_type(std::string_view text);

/// Kinds that are executed by a computation node. Flatten is a zero-cost view
/// over NHWDC memory and never reaches the hardware.
inline bool is_hardware_kind(LayerKind kind) { return kind != LayerKind::Flatten; }
inline bool is_windowed(LayerKind kind) { return kind == LayerKind::Conv3D || kind == LayerKind::Pool3D; }
inline bool has_filters(LayerKind kind) { return kind == LayerKind::Conv3D || kind == LayerKind::FullyConnected; }

struct LayerDescriptor {
  std::string id;
  LayerKind kind = LayerKind::Conv3D;
  /// One shape per input edge; only ElementWise takes two.
  std::vector<TensorShape> shape_in;
  TensorShape shape_out;

  std::int64_t filters = 0;  // Conv3D / FullyConnected
  Triple kernel;             // Conv3D / Pool3D
  Triple stride;             // Conv3D / Pool3D
  Padding padding;           // Conv3D / Pool3D
  std::int64_t groups = 1;   // Conv3D
  OpType op = OpType::None;  // Pool3D / Activation / ElementWise
  bool broadcast = false;    // ElementWise

  [[nodiscard]] const TensorShape& input() const { return shape_in.front(); }
  friend bool operator==(const LayerDescriptor&, const LayerDescriptor&) = default;
};

/// Validated DAG of layers. Construct through parse_model or ModelBuilder.
class ModelGraph {
 public:
  ModelGraph() = default;

  [[nodiscard]] const std::string& name() const { return name_; }
  [[nodiscard]] const std::vector<LayerDescriptor>& layers() const { return layers_; }
  [[nodiscard]] const std::vector<std::pair<std::string, std::string>>& edges() const { return edges_; }
  [[nodiscard]] std::size_t size() const { return layers_.size(); }

  [[nodiscard]] const LayerDescriptor& layer(std::string_view id) const;
  [[nodiscard]] const LayerDescriptor* find(std::string_view id) const;
  /// Producers in edge-list order (which is also input-port order).
  [[nodiscard]] std::vector<std::string> producers(std::string_view id) const;
  [[nodiscard]] std::vector<std::string> consumers(std::string_view id) const;

  friend bool operator==(const ModelGraph& a, const ModelGraph& b) {
    return a.name_ == b.name_ && a.layers_ == b.layers_ && a.edges_ == b.edges_;
  }

  /// Validates and assembles a graph; throws ModelError naming the offending layer.
  static ModelGraph build(std::string name, std::vector<LayerDescriptor> layers,
                          std::vector<std::pair<std::string, std::string>> edges);

 private:
  std::string name_;
  std::vector<LayerDescriptor> layers_;
  std::vector<std::pair<std::string, std::string>> edges_;
  std::map<std::string, std::size_t, std::less<>> index_;
};

ModelGraph parse_model(std::string_view document);
ModelGraph model_from_json(const nlohmann::json& doc);
nlohmann::json model_to_json(const ModelGraph& model);
std::string serialize_model(const ModelGraph& model);

/// Output geometry of a layer from its first input and parameters.
/// Windowed axes use floor((X + Ps + Pe - K) / J) + 1.
TensorShape infer_output_shape(const LayerDescriptor& layer);

/// Multiply-accumulate count; zero for non-MAC kinds.
std::int64_t layer_workload_macs(const LayerDescriptor& layer);
std::int64_t model_workload_macs(const ModelGraph& model);

/// Producers before consumers; ready layers are released in lexicographic id order.
std::vector<std::string> topological_order(const ModelGraph& model);

/// Incrementally assembles models with inferred shapes. Each call appends a
/// layer fed by the given producer(s) and returns its id.
class ModelBuilder {
 public:
  ModelBuilder(std::string name, TensorShape input);

  /// Id of the most recently added layer.
  [[nodiscard]] const std::string& last() const { return layers_.back().id; }
  [[nodiscard]] const TensorShape& shape_of(const std::string& id) const;

  std::string conv(const std::string& id, const std::string& from, std::int64_t filters, Triple kernel,
                   Triple stride = {1, 1, 1}, Padding padding = {}, std::int64_t groups = 1);
  std::string pool(const std::string& id, const std::string& from, OpType type, Triple kernel, Triple stride,
                   Padding padding = {});
  std::string activation(const std::string& id, const std::string& from, OpType type = OpType::Relu);
  std::string global_avg_pool(const std::string& id, const std::string& from);
  std::string flatten(const std::string& id, const std::string& from);
  std::string fully_connected(const std::string& id, const std::string& from, std::int64_t filters);
  std::string elementwise(const std::string& id, const std::string& lhs, const std::string& rhs,
                          OpType type = OpType::Add, bool broadcast = false);

  [[nodiscard]] ModelGraph build() const;

 private:
  std::string append(LayerDescriptor layer, const std::vector<std::string>& from);

  std::string name_;
  std::vector<LayerDescriptor> layers_;
  std::vector<std::pair<std::string, std::string>> edges_;
  std::map<std::string, TensorShape> shapes_;
};

/// Symmetric "same" padding for odd kernels.
Padding same_padding(Triple kernel);

}  // namespace flow3d
