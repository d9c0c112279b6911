#include "flow3d/model_ir.hpp"

#include <algorithm>
#include <limits>
#include <queue>
#include <set>
#include <sstream>

namespace flow3d {

using nlohmann::json;

namespace {

constexpr std::pair<LayerKind, std::string_view> kKindNames[] = {
    {LayerKind::Conv3D, "Conv3D"},
    {LayerKind::FullyConnected, "FullyConnected"},
    {LayerKind::Pool3D, "Pool3D"},
    {LayerKind::Activation, "Activation"},
    {LayerKind::GlobalAvgPool, "GlobalAvgPool"},
    {LayerKind::ElementWise, "ElementWise"},
    {LayerKind::Flatten, "Flatten"},
};

constexpr std::pair<OpType, std::string_view> kOpNames[] = {
    {OpType::None, "none"}, {OpType::Max, "max"},         {OpType::Avg, "avg"},
    {OpType::Relu, "relu"}, {OpType::Sigmoid, "sigmoid"}, {OpType::Swish, "swish"},
    {OpType::Add, "add"},   {OpType::Mul, "mul"},
};

[[noreturn]] void fail(const std::string& layer_id, const std::string& what) {
  throw ModelError("layer '" + layer_id + "': " + what);
}

std::int64_t checked_mul(std::int64_t a, std::int64_t b, const std::string& layer_id) {
  std::int64_t out = 0;
  if (__builtin_mul_overflow(a, b, &out)) fail(layer_id, "element count overflows 64-bit arithmetic");
  return out;
}

void validate_shape(const TensorShape& s, const std::string& layer_id, const char* which) {
  if (s.h < 1 || s.w < 1 || s.d < 1 || s.c < 1) {
    fail(layer_id, std::string(which) + " has a non-positive dimension");
  }
  checked_mul(checked_mul(checked_mul(s.h, s.w, layer_id), s.d, layer_id), s.c, layer_id);
}

std::int64_t window_extent(std::int64_t in, std::int64_t pad_start, std::int64_t pad_end, std::int64_t kernel,
                           std::int64_t stride, const std::string& layer_id, const char* axis) {
  std::int64_t span = in + pad_start + pad_end - kernel;
  if (span < 0) fail(layer_id, std::string("kernel larger than padded input along ") + axis);
  return span / stride + 1;
}

void validate_parameters(const LayerDescriptor& l) {
  const std::size_t inputs = l.shape_in.size();
  if (inputs == 0) fail(l.id, "missing shape_in");
  if (l.kind == LayerKind::ElementWise) {
    if (inputs > 2) fail(l.id, "ElementWise accepts at most two inputs");
  } else if (inputs != 1) {
    fail(l.id, "expects exactly one input shape");
  }
  for (const auto& s : l.shape_in) validate_shape(s, l.id, "shape_in");
  validate_shape(l.shape_out, l.id, "shape_out");

  const TensorShape& in = l.input();
  switch (l.kind) {
    case LayerKind::Conv3D:
      if (l.filters < 1) fail(l.id, "filters must be positive");
      if (l.groups < 1) fail(l.id, "groups must be positive");
      if (in.c % l.groups != 0 || l.filters % l.groups != 0) {
        fail(l.id, "groups must divide both input channels and filters");
      }
      [[fallthrough]];
    case LayerKind::Pool3D: {
      const Triple& k = l.kernel;
      const Triple& j = l.stride;
      const Padding& p = l.padding;
      if (k.d < 1 || k.h < 1 || k.w < 1) fail(l.id, "kernel must be positive");
      if (j.d < 1 || j.h < 1 || j.w < 1) fail(l.id, "stride must be positive");
      if (p.d_start < 0 || p.d_end < 0 || p.h_start < 0 || p.h_end < 0 || p.w_start < 0 || p.w_end < 0) {
        fail(l.id, "padding must be non-negative");
      }
      if (l.kind == LayerKind::Pool3D && l.op != OpType::Max && l.op != OpType::Avg) {
        fail(l.id, "pool_type must be max or avg");
      }
      break;
    }
    case LayerKind::FullyConnected:
      if (l.filters < 1) fail(l.id, "filters must be positive");
      if (in.h != 1 || in.w != 1 || in.d != 1) fail(l.id, "FullyConnected expects a flattened (1,1,1,C) input");
      break;
    case LayerKind::Activation:
      if (l.op != OpType::Relu && l.op != OpType::Sigmoid && l.op != OpType::Swish) {
        fail(l.id, "act_type must be relu, sigmoid or swish");
      }
      break;
    case LayerKind::ElementWise:
      if (l.op != OpType::Add && l.op != OpType::Mul) fail(l.id, "op_type must be add or mul");
      if (inputs == 2) {
        const TensorShape& rhs = l.shape_in[1];
        if (l.broadcast) {
          if (!(rhs == TensorShape{1, 1, 1, in.c})) fail(l.id, "broadcast operand must have shape (1,1,1,C)");
        } else if (!(rhs == in)) {
          fail(l.id, "ElementWise without broadcast requires identical input shapes");
        }
      }
      break;
    case LayerKind::GlobalAvgPool:
    case LayerKind::Flatten:
      break;
  }
}

TensorShape shape_from_json(const json& j, const std::string& layer_id, const char* field) {
  if (!j.is_array() || j.size() != 4) fail(layer_id, std::string(field) + " must be a [D,H,W,C] array");
  for (const auto& v : j) {
    if (!v.is_number_integer()) fail(layer_id, std::string(field) + " entries must be integers");
  }
  return TensorShape{j[1].get<std::int64_t>(), j[2].get<std::int64_t>(), j[0].get<std::int64_t>(),
                     j[3].get<std::int64_t>()};
}

json shape_to_json(const TensorShape& s) { return json::array({s.d, s.h, s.w, s.c}); }

Triple triple_from_json(const json& j, const std::string& layer_id, const char* field) {
  if (!j.is_array() || j.size() != 3) fail(layer_id, std::string(field) + " must be a [D,H,W] array");
  for (const auto& v : j) {
    if (!v.is_number_integer()) fail(layer_id, std::string(field) + " entries must be integers");
  }
  return Triple{j[0].get<std::int64_t>(), j[1].get<std::int64_t>(), j[2].get<std::int64_t>()};
}

Padding padding_from_json(const json& j, const std::string& layer_id) {
  if (!j.is_array() || j.size() != 6) fail(layer_id, "padding must be a [Ds,De,Hs,He,Ws,We] array");
  for (const auto& v : j) {
    if (!v.is_number_integer()) fail(layer_id, "padding entries must be integers");
  }
  return Padding{j[0].get<std::int64_t>(), j[1].get<std::int64_t>(), j[2].get<std::int64_t>(),
                 j[3].get<std::int64_t>(), j[4].get<std::int64_t>(), j[5].get<std::int64_t>()};
}

const json& require(const json& obj, const char* key, const std::string& layer_id) {
  auto it = obj.find(key);
  if (it == obj.end()) fail(layer_id, std::string("missing field '") + key + "'");
  return *it;
}

std::int64_t require_int(const json& obj, const char* key, const std::string& layer_id) {
  const json& v = require(obj, key, layer_id);
  if (!v.is_number_integer()) fail(layer_id, std::string("field '") + key + "' must be an integer");
  return v.get<std::int64_t>();
}

std::string require_string(const json& obj, const char* key, const std::string& layer_id) {
  const json& v = require(obj, key, layer_id);
  if (!v.is_string()) fail(layer_id, std::string("field '") + key + "' must be a string");
  return v.get<std::string>();
}

LayerDescriptor layer_from_json(const json& j, std::size_t position) {
  std::string where = "#" + std::to_string(position);
  if (!j.is_object()) fail(where, "layer entry must be an object");
  LayerDescriptor l;
  l.id = require_string(j, "id", where);
  if (l.id.empty()) fail(where, "id must be non-empty");
  try {
    l.kind = parse_layer_kind(require_string(j, "kind", l.id));
  } catch (const std::invalid_argument& e) {
    fail(l.id, e.what());
  }
  const json& in = require(j, "shape_in", l.id);
  if (in.is_array() && !in.empty() && in[0].is_array()) {
    for (const auto& s : in) l.shape_in.push_back(shape_from_json(s, l.id, "shape_in"));
  } else {
    l.shape_in.push_back(shape_from_json(in, l.id, "shape_in"));
  }
  l.shape_out = shape_from_json(require(j, "shape_out", l.id), l.id, "shape_out");

  auto op_field = [&](const char* key) {
    try {
      return parse_op_type(require_string(j, key, l.id));
    } catch (const std::invalid_argument& e) {
      fail(l.id, e.what());
    }
  };
  auto window = [&] {
    l.kernel = triple_from_json(require(j, "kernel", l.id), l.id, "kernel");
    l.stride = j.contains("stride") ? triple_from_json(j["stride"], l.id, "stride") : Triple{1, 1, 1};
    l.padding = j.contains("padding") ? padding_from_json(j["padding"], l.id) : Padding{};
  };

  switch (l.kind) {
    case LayerKind::Conv3D:
      l.filters = require_int(j, "filters", l.id);
      l.groups = j.contains("groups") ? require_int(j, "groups", l.id) : 1;
      window();
      break;
    case LayerKind::FullyConnected:
      l.filters = require_int(j, "filters", l.id);
      break;
    case LayerKind::Pool3D:
      l.op = op_field("pool_type");
      window();
      break;
    case LayerKind::Activation:
      l.op = op_field("act_type");
      break;
    case LayerKind::ElementWise:
      l.op = op_field("op_type");
      if (j.contains("broadcast")) {
        if (!j["broadcast"].is_boolean()) fail(l.id, "field 'broadcast' must be a boolean");
        l.broadcast = j["broadcast"].get<bool>();
      }
      break;
    case LayerKind::GlobalAvgPool:
    case LayerKind::Flatten:
      break;
  }
  return l;
}

json layer_to_json(const LayerDescriptor& l) {
  json j;
  j["id"] = l.id;
  j["kind"] = std::string(to_string(l.kind));
  if (l.shape_in.size() == 1) {
    j["shape_in"] = shape_to_json(l.shape_in.front());
  } else {
    json ins = json::array();
    for (const auto& s : l.shape_in) ins.push_back(shape_to_json(s));
    j["shape_in"] = ins;
  }
  j["shape_out"] = shape_to_json(l.shape_out);
  auto window = [&] {
    j["kernel"] = json::array({l.kernel.d, l.kernel.h, l.kernel.w});
    j["stride"] = json::array({l.stride.d, l.stride.h, l.stride.w});
    const Padding& p = l.padding;
    j["padding"] = json::array({p.d_start, p.d_end, p.h_start, p.h_end, p.w_start, p.w_end});
  };
  switch (l.kind) {
    case LayerKind::Conv3D:
      j["filters"] = l.filters;
      window();
      j["groups"] = l.groups;
      break;
    case LayerKind::FullyConnected:
      j["filters"] = l.filters;
      break;
    case LayerKind::Pool3D:
      j["pool_type"] = std::string(to_string(l.op));
      window();
      break;
    case LayerKind::Activation:
      j["act_type"] = std::string(to_string(l.op));
      break;
    case LayerKind::ElementWise:
      j["op_type"] = std::string(to_string(l.op));
      j["broadcast"] = l.broadcast;
      break;
    case LayerKind::GlobalAvgPool:
    case LayerKind::Flatten:
      break;
  }
  return j;
}

}  // namespace

std::string_view to_string(LayerKind kind) {
  for (const auto& [k, name] : kKindNames) {
    if (k == kind) return name;
  }
  return "?";
}

std::string_view to_string(OpType op) {
  for (const auto& [o, name] : kOpNames) {
    if (o == op) return name;
  }
  return "?";
}

LayerKind parse_layer_kind(std::string_view text) {
  for (const auto& [k, name] : kKindNames) {
    if (name == text) return k;
  }
  throw std::invalid_argument("unknown layer kind '" + std::string(text) + "'");
}

OpType parse_op_type(std::string_view text) {
  for (const auto& [o, name] : kOpNames) {
    if (name == text && o != OpType::None) return o;
  }
  throw std::invalid_argument("unknown operation type '" + std::string(text) + "'");
}

TensorShape infer_output_shape(const LayerDescriptor& l) {
  if (l.shape_in.empty()) fail(l.id, "missing shape_in");
  const TensorShape& in = l.input();
  switch (l.kind) {
    case LayerKind::Conv3D:
    case LayerKind::Pool3D: {
      const Padding& p = l.padding;
      TensorShape out;
      out.d = window_extent(in.d, p.d_start, p.d_end, l.kernel.d, l.stride.d, l.id, "D");
      out.h = window_extent(in.h, p.h_start, p.h_end, l.kernel.h, l.stride.h, l.id, "H");
      out.w = window_extent(in.w, p.w_start, p.w_end, l.kernel.w, l.stride.w, l.id, "W");
      out.c = l.kind == LayerKind::Conv3D ? l.filters : in.c;
      return out;
    }
    case LayerKind::FullyConnected:
      return TensorShape{1, 1, 1, l.filters};
    case LayerKind::GlobalAvgPool:
      return TensorShape{1, 1, 1, in.c};
    case LayerKind::Flatten:
      return TensorShape{1, 1, 1, in.volume()};
    case LayerKind::Activation:
    case LayerKind::ElementWise:
      return in;
  }
  return in;
}

std::int64_t layer_workload_macs(const LayerDescriptor& l) {
  switch (l.kind) {
    case LayerKind::Conv3D: {
      const TensorShape& out = l.shape_out;
      return out.h * out.w * out.d * l.input().c * l.filters * l.kernel.volume() / l.groups;
    }
    case LayerKind::FullyConnected:
      return l.input().c * l.filters;
    default:
      return 0;
  }
}

std::int64_t model_workload_macs(const ModelGraph& model) {
  std::int64_t total = 0;
  for (const auto& l : model.layers()) total += layer_workload_macs(l);
  return total;
}

const LayerDescriptor* ModelGraph::find(std::string_view id) const {
  auto it = index_.find(id);
  return it == index_.end() ? nullptr : &layers_[it->second];
}

const LayerDescriptor& ModelGraph::layer(std::string_view id) const {
  const LayerDescriptor* l = find(id);
  if (l == nullptr) throw ModelError("unknown layer '" + std::string(id) + "'");
  return *l;
}

std::vector<std::string> ModelGraph::producers(std::string_view id) const {
  std::vector<std::string> out;
  for (const auto& [src, dst] : edges_) {
    if (dst == id) out.push_back(src);
  }
  return out;
}

std::vector<std::string> ModelGraph::consumers(std::string_view id) const {
  std::vector<std::string> out;
  for (const auto& [src, dst] : edges_) {
    if (src == id) out.push_back(dst);
  }
  return out;
}

ModelGraph ModelGraph::build(std::string name, std::vector<LayerDescriptor> layers,
                             std::vector<std::pair<std::string, std::string>> edges) {
  if (layers.empty()) throw ModelError("model '" + name + "' has an empty layer list");
  ModelGraph g;
  g.name_ = std::move(name);
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (!g.index_.emplace(layers[i].id, i).second) fail(layers[i].id, "duplicate layer id");
  }
  for (const auto& l : layers) {
    validate_parameters(l);
    TensorShape expected = infer_output_shape(l);
    if (!(expected == l.shape_out)) {
      std::ostringstream os;
      os << "declared shape_out [" << l.shape_out.d << "," << l.shape_out.h << "," << l.shape_out.w << ","
         << l.shape_out.c << "] does not match inferred [" << expected.d << "," << expected.h << "," << expected.w
         << "," << expected.c << "]";
      fail(l.id, os.str());
    }
  }
  std::map<std::string, std::vector<std::string>> succ;
  std::map<std::string, std::size_t> in_degree;
  for (const auto& l : layers) in_degree[l.id] = 0;
  for (const auto& [src, dst] : edges) {
    if (!g.index_.contains(src)) throw ModelError("edge references unknown producer '" + src + "'");
    if (!g.index_.contains(dst)) throw ModelError("edge references unknown consumer '" + dst + "'");
    succ[src].push_back(dst);
    ++in_degree[dst];
  }

  // Kahn's pass; whatever remains is on or behind a cycle.
  {
    auto remaining = in_degree;
    std::vector<std::string> ready;
    for (const auto& [id, deg] : remaining) {
      if (deg == 0) ready.push_back(id);
    }
    std::size_t visited = 0;
    while (!ready.empty()) {
      std::string id = ready.back();
      ready.pop_back();
      ++visited;
      for (const auto& next : succ[id]) {
        if (--remaining[next] == 0) ready.push_back(next);
      }
    }
    if (visited != layers.size()) {
      std::string names;
      for (const auto& [id, deg] : remaining) {
        if (deg > 0) names += (names.empty() ? "" : ", ") + id;
      }
      throw ModelError("cycle detected among layers: " + names);
    }
  }

  std::vector<std::string> sources;
  for (const auto& l : layers) {
    if (in_degree[l.id] == 0) sources.push_back(l.id);
  }
  if (sources.size() != 1) {
    std::string names;
    for (const auto& s : sources) names += (names.empty() ? "" : ", ") + s;
    throw ModelError("model must have exactly one input layer, found: " + names);
  }
  if (g.index_.size() > 0 && layers[g.index_.at(sources.front())].shape_in.size() != 1) {
    fail(sources.front(), "input layer must take a single input");
  }

  std::map<std::string, std::size_t> port;
  for (const auto& [src, dst] : edges) {
    const LayerDescriptor& consumer = layers[g.index_.at(dst)];
    const LayerDescriptor& producer = layers[g.index_.at(src)];
    std::size_t p = port[dst]++;
    if (p >= consumer.shape_in.size()) fail(dst, "more incoming edges than declared input shapes");
    if (!(producer.shape_out == consumer.shape_in[p])) {
      fail(dst, "shape mismatch on edge from '" + src + "' (input " + std::to_string(p) + ")");
    }
  }
  for (const auto& l : layers) {
    if (in_degree[l.id] != 0 && port[l.id] != l.shape_in.size()) {
      fail(l.id, "declares " + std::to_string(l.shape_in.size()) + " input shapes but has " +
                     std::to_string(port[l.id]) + " incoming edges");
    }
  }
  g.layers_ = std::move(layers);
  g.edges_ = std::move(edges);
  return g;
}

ModelGraph model_from_json(const json& doc) {
  if (!doc.is_object()) throw ModelError("model document must be a JSON object");
  if (!doc.contains("name") || !doc["name"].is_string()) throw ModelError("model document needs a string 'name'");
  if (!doc.contains("layers") || !doc["layers"].is_array()) throw ModelError("model document needs a 'layers' array");
  std::vector<LayerDescriptor> layers;
  std::size_t position = 0;
  for (const auto& lj : doc["layers"]) layers.push_back(layer_from_json(lj, position++));
  std::vector<std::pair<std::string, std::string>> edges;
  if (doc.contains("edges")) {
    if (!doc["edges"].is_array()) throw ModelError("'edges' must be an array");
    for (const auto& e : doc["edges"]) {
      if (!e.is_array() || e.size() != 2 || !e[0].is_string() || !e[1].is_string()) {
        throw ModelError("each edge must be a [src, dst] pair of layer ids");
      }
      edges.emplace_back(e[0].get<std::string>(), e[1].get<std::string>());
    }
  }
  return ModelGraph::build(doc["name"].get<std::string>(), std::move(layers), std::move(edges));
}

ModelGraph parse_model(std::string_view document) {
  json doc;
  try {
    doc = json::parse(document);
  } catch (const json::parse_error& e) {
    throw ModelError(std::string("model document is not valid JSON: ") + e.what());
  }
  return model_from_json(doc);
}

json model_to_json(const ModelGraph& model) {
  json doc;
  doc["name"] = model.name();
  json layers = json::array();
  for (const auto& l : model.layers()) layers.push_back(layer_to_json(l));
  doc["layers"] = layers;
  json edges = json::array();
  for (const auto& [src, dst] : model.edges()) edges.push_back(json::array({src, dst}));
  doc["edges"] = edges;
  return doc;
}

std::string serialize_model(const ModelGraph& model) { return model_to_json(model).dump(2) + "\n"; }

std::vector<std::string> topological_order(const ModelGraph& model) {
  std::map<std::string, std::size_t> in_degree;
  std::map<std::string, std::vector<std::string>> succ;
  for (const auto& l : model.layers()) in_degree[l.id] = 0;
  for (const auto& [src, dst] : model.edges()) {
    ++in_degree[dst];
    succ[src].push_back(dst);
  }
  std::priority_queue<std::string, std::vector<std::string>, std::greater<>> ready;
  for (const auto& [id, deg] : in_degree) {
    if (deg == 0) ready.push(id);
  }
  std::vector<std::string> order;
  order.reserve(model.size());
  while (!ready.empty()) {
    std::string id = ready.top();
    ready.pop();
    for (const auto& next : succ[id]) {
      if (--in_degree[next] == 0) ready.push(next);
    }
    order.push_back(std::move(id));
  }
  return order;
}

Padding same_padding(Triple k) {
  return Padding{k.d / 2, k.d / 2, k.h / 2, k.h / 2, k.w / 2, k.w / 2};
}

ModelBuilder::ModelBuilder(std::string name, TensorShape input) : name_(std::move(name)) {
  shapes_[""] = input;
}

const TensorShape& ModelBuilder::shape_of(const std::string& id) const {
  auto it = shapes_.find(id);
  if (it == shapes_.end()) throw ModelError("builder: unknown layer '" + id + "'");
  return it->second;
}

std::string ModelBuilder::append(LayerDescriptor layer, const std::vector<std::string>& from) {
  for (const auto& src : from) layer.shape_in.push_back(shape_of(src));
  layer.shape_out = infer_output_shape(layer);
  for (const auto& src : from) {
    if (!src.empty()) edges_.emplace_back(src, layer.id);
  }
  shapes_[layer.id] = layer.shape_out;
  layers_.push_back(std::move(layer));
  return layers_.back().id;
}

std::string ModelBuilder::conv(const std::string& id, const std::string& from, std::int64_t filters, Triple kernel,
                               Triple stride, Padding padding, std::int64_t groups) {
  LayerDescriptor l;
  l.id = id;
  l.kind = LayerKind::Conv3D;
  l.filters = filters;
  l.kernel = kernel;
  l.stride = stride;
  l.padding = padding;
  l.groups = groups;
  return append(std::move(l), {from});
}

std::string ModelBuilder::pool(const std::string& id, const std::string& from, OpType type, Triple kernel,
                               Triple stride, Padding padding) {
  LayerDescriptor l;
  l.id = id;
  l.kind = LayerKind::Pool3D;
  l.op = type;
  l.kernel = kernel;
  l.stride = stride;
  l.padding = padding;
  return append(std::move(l), {from});
}

std::string ModelBuilder::activation(const std::string& id, const std::string& from, OpType type) {
  LayerDescriptor l;
  l.id = id;
  l.kind = LayerKind::Activation;
  l.op = type;
  return append(std::move(l), {from});
}

std::string ModelBuilder::global_avg_pool(const std::string& id, const std::string& from) {
  LayerDescriptor l;
  l.id = id;
  l.kind = LayerKind::GlobalAvgPool;
  return append(std::move(l), {from});
}

std::string ModelBuilder::flatten(const std::string& id, const std::string& from) {
  LayerDescriptor l;
  l.id = id;
  l.kind = LayerKind::Flatten;
  return append(std::move(l), {from});
}

std::string ModelBuilder::fully_connected(const std::string& id, const std::string& from, std::int64_t filters) {
  LayerDescriptor l;
  l.id = id;
  l.kind = LayerKind::FullyConnected;
  l.filters = filters;
  return append(std::move(l), {from});
}

std::string ModelBuilder::elementwise(const std::string& id, const std::string& lhs, const std::string& rhs,
                                      OpType type, bool broadcast) {
  LayerDescriptor l;
  l.id = id;
  l.kind = LayerKind::ElementWise;
  l.op = type;
  l.broadcast = broadcast;
  return append(std::move(l), {lhs, rhs});
}

ModelGraph ModelBuilder::build() const { return ModelGraph::build(name_, layers_, edges_); }

}  // namespace flow3d
