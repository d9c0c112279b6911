#include "flow3d/hardware_graph.hpp"

#include <algorithm>
#include <numeric>

#include "flow3d/tiling.hpp"

namespace flow3d {

using nlohmann::json;

namespace {

std::string_view node_prefix(LayerKind kind) {
  switch (kind) {
    case LayerKind::Conv3D: return "conv";
    case LayerKind::FullyConnected: return "fc";
    case LayerKind::Pool3D: return "pool";
    case LayerKind::Activation: return "act";
    case LayerKind::GlobalAvgPool: return "gap";
    case LayerKind::ElementWise: return "eltwise";
    case LayerKind::Flatten: return "view";
  }
  return "node";
}

std::string fresh_id(HardwareGraph& g, LayerKind kind) {
  for (;;) {
    std::string id = std::string(node_prefix(kind)) + "_" + std::to_string(g.next_serial++);
    if (!g.find_node(id)) return id;
  }
}

TensorShape max_shape(const TensorShape& a, const TensorShape& b) {
  return {std::max(a.h, b.h), std::max(a.w, b.w), std::max(a.d, b.d), std::max(a.c, b.c)};
}

Triple max_triple(const Triple& a, const Triple& b) {
  return {std::max(a.d, b.d), std::max(a.h, b.h), std::max(a.w, b.w)};
}

Padding max_padding(const Padding& a, const Padding& b) {
  return {std::max(a.d_start, b.d_start), std::max(a.d_end, b.d_end), std::max(a.h_start, b.h_start),
          std::max(a.h_end, b.h_end),     std::max(a.w_start, b.w_start), std::max(a.w_end, b.w_end)};
}

void erase_node(HardwareGraph& g, const std::string& id) {
  g.nodes.erase(std::remove_if(g.nodes.begin(), g.nodes.end(), [&](const NodeCapability& n) { return n.id == id; }),
                g.nodes.end());
  g.mapping.erase(id);
}

json shape_json(const TensorShape& s) { return json::array({s.d, s.h, s.w, s.c}); }

TensorShape shape_from(const json& j) {
  if (!j.is_array() || j.size() != 4) throw HardwareGraphError("node shape must be [D,H,W,C]");
  return {j[1].get<std::int64_t>(), j[2].get<std::int64_t>(), j[0].get<std::int64_t>(), j[3].get<std::int64_t>()};
}

json triple_json(const Triple& t) { return json::array({t.d, t.h, t.w}); }

Triple triple_from(const json& j) {
  if (!j.is_array() || j.size() != 3) throw HardwareGraphError("node triple must be [D,H,W]");
  return {j[0].get<std::int64_t>(), j[1].get<std::int64_t>(), j[2].get<std::int64_t>()};
}

}  // namespace

// Folds must divide the dimensions they parallelize.
void repair_folds(NodeCapability& cap) {
  cap.coarse_in = std::gcd(std::max<std::int64_t>(cap.coarse_in, 1), cap.shape_in_max.c);
  if (has_filters(cap.kind)) {
    cap.coarse_out = std::gcd(std::max<std::int64_t>(cap.coarse_out, 1), cap.filters_max);
  } else {
    cap.coarse_out = cap.coarse_in;
  }
  if (cap.kind == LayerKind::Conv3D) {
    cap.fine = std::gcd(std::max<std::int64_t>(cap.fine, 1), cap.kernel_max.volume());
  } else {
    cap.fine = 1;
  }
}

const NodeCapability* HardwareGraph::find_node(const std::string& id) const {
  for (const auto& n : nodes) {
    if (n.id == id) return &n;
  }
  return nullptr;
}

NodeCapability* HardwareGraph::find_node(const std::string& id) {
  for (auto& n : nodes) {
    if (n.id == id) return &n;
  }
  return nullptr;
}

const NodeCapability& HardwareGraph::node(const std::string& id) const {
  const NodeCapability* n = find_node(id);
  if (!n) throw HardwareGraphError("unknown node '" + id + "'");
  return *n;
}

std::string HardwareGraph::node_of(const std::string& layer_id) const {
  for (const auto& [node_id, layers] : mapping) {
    if (std::binary_search(layers.begin(), layers.end(), layer_id)) return node_id;
  }
  return {};
}

const std::vector<std::string>& HardwareGraph::layers_of(const std::string& node_id) const {
  auto it = mapping.find(node_id);
  if (it == mapping.end()) throw HardwareGraphError("node '" + node_id + "' has no mapping");
  return it->second;
}

std::vector<std::int64_t> divisors(std::int64_t n) {
  std::vector<std::int64_t> low, high;
  for (std::int64_t i = 1; i * i <= n; ++i) {
    if (n % i != 0) continue;
    low.push_back(i);
    if (i != n / i) high.push_back(n / i);
  }
  low.insert(low.end(), high.rbegin(), high.rend());
  return low;
}

NodeCapability derive_capability(const ModelGraph& model, LayerKind kind, const std::vector<std::string>& layer_ids,
                                 std::string id) {
  NodeCapability cap;
  cap.id = std::move(id);
  cap.kind = kind;
  cap.shape_in_max = {0, 0, 0, 0};
  cap.kernel_max = {1, 1, 1};
  cap.stride_max = {1, 1, 1};
  for (const auto& lid : layer_ids) {
    const LayerDescriptor& l = model.layer(lid);
    if (l.kind != kind) {
      throw HardwareGraphError("layer '" + lid + "' is " + std::string(to_string(l.kind)) + ", node expects " +
                               std::string(to_string(kind)));
    }
    cap.shape_in_max = max_shape(cap.shape_in_max, l.input());
    if (has_filters(kind)) cap.filters_max = std::max(cap.filters_max, l.filters);
    if (is_windowed(kind)) {
      cap.kernel_max = max_triple(cap.kernel_max, l.kernel);
      cap.stride_max = max_triple(cap.stride_max, l.stride);
      cap.padding_max = max_padding(cap.padding_max, l.padding);
    }
    if (l.op != OpType::None) cap.supports_types.insert(l.op);
    cap.supports_broadcast = cap.supports_broadcast || l.broadcast;
  }
  if (layer_ids.empty()) cap.shape_in_max = {1, 1, 1, 1};
  refresh_output_bound(cap, model, layer_ids);
  return cap;
}

void refresh_output_bound(NodeCapability& cap, const ModelGraph& model, const std::vector<std::string>& layer_ids) {
  TensorShape out{1, 1, 1, 1};
  for (const auto& lid : layer_ids) {
    const LayerDescriptor& l = model.layer(lid);
    SpatialTiles t = spatial_tiles(l, cap.shape_in_max);
    for (const auto& s : t.h) out.h = std::max(out.h, s.out_extent);
    for (const auto& s : t.w) out.w = std::max(out.w, s.out_extent);
    for (const auto& s : t.d) out.d = std::max(out.d, s.out_extent);
  }
  out.c = cap.channels_out_max();
  cap.shape_out_max = out;
}

HardwareGraph initial_mapping(const ModelGraph& model) {
  std::map<LayerKind, std::vector<std::string>> by_kind;
  for (const auto& l : model.layers()) {
    if (is_hardware_kind(l.kind)) by_kind[l.kind].push_back(l.id);
  }
  HardwareGraph g;
  for (auto& [kind, ids] : by_kind) {
    std::sort(ids.begin(), ids.end());
    std::string id = fresh_id(g, kind);
    g.nodes.push_back(derive_capability(model, kind, ids, id));
    g.mapping[id] = ids;
  }
  return g;
}

HardwareGraph combine_nodes(const HardwareGraph& g, const ModelGraph& model, const std::set<std::string>& node_ids) {
  if (node_ids.size() < 2) throw HardwareGraphError("combine needs at least two distinct nodes");
  std::vector<const NodeCapability*> parts;
  for (const auto& id : node_ids) parts.push_back(&g.node(id));
  const LayerKind kind = parts.front()->kind;
  for (const auto* p : parts) {
    if (p->kind != kind) throw HardwareGraphError("cannot combine nodes of different kinds");
  }

  std::vector<std::string> layers;
  for (const auto& id : node_ids) {
    const auto& ls = g.layers_of(id);
    layers.insert(layers.end(), ls.begin(), ls.end());
  }
  std::sort(layers.begin(), layers.end());

  const std::string survivor = *node_ids.begin();
  NodeCapability merged = derive_capability(model, kind, layers, survivor);
  for (const auto* p : parts) {
    merged.shape_in_max = max_shape(merged.shape_in_max, p->shape_in_max);
    merged.filters_max = std::max(merged.filters_max, p->filters_max);
    merged.kernel_max = max_triple(merged.kernel_max, p->kernel_max);
    merged.stride_max = max_triple(merged.stride_max, p->stride_max);
    merged.padding_max = max_padding(merged.padding_max, p->padding_max);
    merged.supports_types.insert(p->supports_types.begin(), p->supports_types.end());
    merged.supports_broadcast = merged.supports_broadcast || p->supports_broadcast;
  }
  refresh_output_bound(merged, model, layers);
  merged.runtime_configurable = parts.front()->runtime_configurable;
  merged.shape_out_max = max_shape(merged.shape_out_max, parts.front()->shape_out_max);
  for (const auto* p : parts) merged.shape_out_max = max_shape(merged.shape_out_max, p->shape_out_max);
  merged.shape_out_max.c = merged.channels_out_max();

  // Keep the widest fold any part already had that still divides the merged bounds.
  merged.coarse_in = merged.coarse_out = merged.fine = 1;
  for (const auto* p : parts) {
    merged.coarse_in = std::max(merged.coarse_in, std::gcd(p->coarse_in, merged.shape_in_max.c));
    merged.coarse_out = std::max(merged.coarse_out, std::gcd(p->coarse_out, merged.channels_out_max()));
    merged.fine = std::max(merged.fine, std::gcd(p->fine, merged.kernel_max.volume()));
  }
  repair_folds(merged);

  HardwareGraph out = g;
  for (const auto& id : node_ids) {
    if (id != survivor) erase_node(out, id);
  }
  *out.find_node(survivor) = merged;
  out.mapping[survivor] = layers;
  return out;
}

HardwareGraph separate_node(const HardwareGraph& g, const ModelGraph& model, const std::string& node_id,
                            const std::set<std::string>& layer_ids) {
  if (layer_ids.empty()) throw HardwareGraphError("separate needs at least one layer");
  const NodeCapability& src = g.node(node_id);
  const auto& mapped = g.layers_of(node_id);
  for (const auto& lid : layer_ids) {
    if (!std::binary_search(mapped.begin(), mapped.end(), lid)) {
      throw HardwareGraphError("layer '" + lid + "' is not mapped to node '" + node_id + "'");
    }
  }

  HardwareGraph out = g;
  std::vector<std::string> detached(layer_ids.begin(), layer_ids.end());
  std::string id = fresh_id(out, src.kind);

  if (detached.size() == mapped.size()) {
    NodeCapability copy = src;
    copy.id = id;
    erase_node(out, node_id);
    out.nodes.push_back(copy);
    out.mapping[id] = detached;
    return out;
  }

  NodeCapability fresh = derive_capability(model, src.kind, detached, id);
  fresh.runtime_configurable = src.runtime_configurable;
  fresh.coarse_in = src.coarse_in;
  fresh.coarse_out = src.coarse_out;
  fresh.fine = src.fine;
  repair_folds(fresh);

  std::vector<std::string> remaining;
  std::set_difference(mapped.begin(), mapped.end(), detached.begin(), detached.end(), std::back_inserter(remaining));
  out.mapping[node_id] = remaining;
  out.nodes.push_back(fresh);
  out.mapping[id] = detached;
  return out;
}

HardwareGraph fuse_activations(const HardwareGraph& g, const ModelGraph& model) {
  HardwareGraph out = g;
  for (const auto& l : model.layers()) {
    if (l.kind != LayerKind::Activation || out.fused.count(l.id)) continue;
    auto producers = model.producers(l.id);
    if (producers.size() != 1) continue;
    const LayerDescriptor& p = model.layer(producers.front());
    if (p.kind != LayerKind::Conv3D && p.kind != LayerKind::FullyConnected && p.kind != LayerKind::ElementWise) continue;
    if (model.consumers(p.id).size() != 1) continue;
    std::string node_id = out.node_of(l.id);
    if (!node_id.empty()) {
      auto& ls = out.mapping[node_id];
      ls.erase(std::remove(ls.begin(), ls.end(), l.id), ls.end());
      if (ls.empty()) erase_node(out, node_id);
    }
    out.fused[l.id] = p.id;
  }
  return out;
}

std::vector<std::string> schedulable_layers(const HardwareGraph& g, const ModelGraph& model) {
  std::vector<std::string> out;
  for (const auto& id : topological_order(model)) {
    if (!is_hardware_kind(model.layer(id).kind) || g.fused.count(id)) continue;
    out.push_back(id);
  }
  return out;
}

std::vector<std::string> validate_mapping(const HardwareGraph& g, const ModelGraph& model) {
  std::vector<std::string> problems;
  std::map<std::string, std::string> owner;
  std::set<std::string> node_ids;
  for (const auto& n : g.nodes) {
    if (!node_ids.insert(n.id).second) problems.push_back("duplicate node id '" + n.id + "'");
    if (!g.mapping.count(n.id)) problems.push_back("node '" + n.id + "' has no mapping entry");
  }
  for (const auto& [node_id, layers] : g.mapping) {
    const NodeCapability* n = g.find_node(node_id);
    if (!n) {
      problems.push_back("mapping references unknown node '" + node_id + "'");
      continue;
    }
    if (layers.empty()) problems.push_back("node '" + node_id + "' executes no layers");
    if (!std::is_sorted(layers.begin(), layers.end())) problems.push_back("node '" + node_id + "' layers unsorted");
    for (const auto& lid : layers) {
      const LayerDescriptor* l = model.find(lid);
      if (!l) {
        problems.push_back("node '" + node_id + "' maps unknown layer '" + lid + "'");
        continue;
      }
      if (l->kind != n->kind) problems.push_back("layer '" + lid + "' kind differs from node '" + node_id + "'");
      if (g.fused.count(lid)) problems.push_back("fused layer '" + lid + "' is still mapped");
      auto [it, fresh] = owner.emplace(lid, node_id);
      if (!fresh) problems.push_back("layer '" + lid + "' mapped to both '" + it->second + "' and '" + node_id + "'");
    }
  }
  for (const auto& [act, producer] : g.fused) {
    const LayerDescriptor* l = model.find(act);
    if (!l || l->kind != LayerKind::Activation) problems.push_back("fused entry '" + act + "' is not an activation");
    if (!model.find(producer)) problems.push_back("fused entry '" + act + "' names unknown producer");
  }
  for (const auto& l : model.layers()) {
    if (!is_hardware_kind(l.kind)) {
      if (owner.count(l.id)) problems.push_back("view layer '" + l.id + "' must not be mapped");
      continue;
    }
    if (!owner.count(l.id) && !g.fused.count(l.id)) problems.push_back("layer '" + l.id + "' is not mapped");
  }
  return problems;
}

json node_to_json(const NodeCapability& cap) {
  json j;
  j["id"] = cap.id;
  j["kind"] = std::string(to_string(cap.kind));
  j["shape_in_max"] = shape_json(cap.shape_in_max);
  j["shape_out_max"] = shape_json(cap.shape_out_max);
  if (has_filters(cap.kind)) j["filters_max"] = cap.filters_max;
  if (is_windowed(cap.kind)) {
    j["kernel_max"] = triple_json(cap.kernel_max);
    j["stride_max"] = triple_json(cap.stride_max);
    const Padding& p = cap.padding_max;
    j["padding_max"] = json::array({p.d_start, p.d_end, p.h_start, p.h_end, p.w_start, p.w_end});
  }
  j["coarse_in"] = cap.coarse_in;
  j["coarse_out"] = cap.coarse_out;
  j["fine"] = cap.fine;
  json types = json::array();
  for (OpType t : cap.supports_types) types.push_back(std::string(to_string(t)));
  j["supports_types"] = types;
  j["supports_broadcast"] = cap.supports_broadcast;
  j["runtime_configurable"] = cap.runtime_configurable;
  return j;
}

NodeCapability node_from_json(const json& j) {
  try {
    NodeCapability cap;
    cap.id = j.at("id").get<std::string>();
    cap.kind = parse_layer_kind(j.at("kind").get<std::string>());
    cap.shape_in_max = shape_from(j.at("shape_in_max"));
    cap.shape_out_max = shape_from(j.at("shape_out_max"));
    cap.filters_max = j.value("filters_max", std::int64_t{0});
    if (j.contains("kernel_max")) cap.kernel_max = triple_from(j["kernel_max"]);
    if (j.contains("stride_max")) cap.stride_max = triple_from(j["stride_max"]);
    if (j.contains("padding_max")) {
      const json& p = j["padding_max"];
      if (!p.is_array() || p.size() != 6) throw HardwareGraphError("padding_max must have six entries");
      cap.padding_max = {p[0].get<std::int64_t>(), p[1].get<std::int64_t>(), p[2].get<std::int64_t>(),
                         p[3].get<std::int64_t>(), p[4].get<std::int64_t>(), p[5].get<std::int64_t>()};
    }
    cap.coarse_in = j.at("coarse_in").get<std::int64_t>();
    cap.coarse_out = j.at("coarse_out").get<std::int64_t>();
    cap.fine = j.at("fine").get<std::int64_t>();
    for (const auto& t : j.value("supports_types", json::array())) cap.supports_types.insert(parse_op_type(t.get<std::string>()));
    cap.supports_broadcast = j.value("supports_broadcast", false);
    cap.runtime_configurable = j.value("runtime_configurable", true);
    return cap;
  } catch (const json::exception& e) {
    throw HardwareGraphError(std::string("malformed node: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw HardwareGraphError(std::string("malformed node: ") + e.what());
  }
}

json design_to_json(const Design& design) {
  json doc;
  doc["mode"] = std::string(to_string(design.mode));
  doc["next_serial"] = design.graph.next_serial;
  json nodes = json::array();
  for (const auto& n : design.graph.nodes) {
    json j = node_to_json(n);
    j["layers"] = design.graph.mapping.count(n.id) ? json(design.graph.mapping.at(n.id)) : json::array();
    nodes.push_back(j);
  }
  doc["nodes"] = nodes;
  json fused = json::array();
  for (const auto& [act, producer] : design.graph.fused) fused.push_back(json{{"layer", act}, {"into", producer}});
  doc["fused"] = fused;
  doc["model"] = model_to_json(design.model);
  return doc;
}

Design design_from_json(const json& doc) {
  if (!doc.is_object()) throw HardwareGraphError("design must be a JSON object");
  Design d;
  if (!doc.contains("model")) throw HardwareGraphError("design is missing field 'model'");
  d.model = model_from_json(doc["model"]);
  try {
    d.mode = parse_execution_mode(doc.value("mode", std::string("runtime_configurable")));
  } catch (const std::invalid_argument& e) {
    throw HardwareGraphError(e.what());
  }
  d.graph.next_serial = doc.value("next_serial", std::int64_t{0});
  if (!doc.contains("nodes") || !doc["nodes"].is_array()) throw HardwareGraphError("design is missing 'nodes'");
  for (const auto& j : doc["nodes"]) {
    NodeCapability cap = node_from_json(j);
    std::vector<std::string> layers = j.value("layers", std::vector<std::string>{});
    std::sort(layers.begin(), layers.end());
    d.graph.mapping[cap.id] = layers;
    d.graph.nodes.push_back(std::move(cap));
  }
  for (const auto& f : doc.value("fused", json::array())) {
    d.graph.fused[f.at("layer").get<std::string>()] = f.at("into").get<std::string>();
  }
  auto problems = validate_mapping(d.graph, d.model);
  if (!problems.empty()) throw HardwareGraphError("invalid design: " + problems.front());
  return d;
}

}  // namespace flow3d
