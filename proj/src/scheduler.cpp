#include "flow3d/scheduler.hpp"

#include <algorithm>
#include <functional>
#include <numeric>

#include "flow3d/perf_model.hpp"
#include "flow3d/tiling.hpp"

namespace flow3d {

using nlohmann::json;

namespace {

struct AxisItem {
  std::int64_t index = 0;
  std::int64_t origin = 0;
  std::int64_t extent = 1;
  std::int64_t out_extent = 1;
  std::int64_t count = 1;
  bool last = true;
};

std::vector<AxisItem> items_of(const std::vector<AxisSegment>& segments, bool grouped) {
  std::vector<AxisItem> items;
  for (const auto& s : segments) {
    if (grouped && !items.empty()) {
      AxisItem& prev = items.back();
      if (prev.extent == s.extent && prev.out_extent == s.out_extent && prev.last == s.last) {
        ++prev.count;
        continue;
      }
    }
    items.push_back({s.index, s.start, s.extent, s.out_extent, 1, s.last});
  }
  return items;
}

[[noreturn]] void infeasible(const LayerDescriptor& l, const NodeCapability& n, const std::string& what) {
  throw ScheduleError("layer '" + l.id + "' cannot run on node '" + n.id + "': " + what);
}

void check_layer_fits(const LayerDescriptor& l, const NodeCapability& n) {
  if (l.kind != n.kind) infeasible(l, n, "kind mismatch");
  if (is_windowed(l.kind)) {
    const Triple& k = l.kernel;
    const Triple& km = n.kernel_max;
    if (k.d > km.d || k.h > km.h || k.w > km.w) infeasible(l, n, "kernel exceeds node kernel");
    const Triple& j = l.stride;
    const Triple& jm = n.stride_max;
    if (j.d > jm.d || j.h > jm.h || j.w > jm.w) infeasible(l, n, "stride exceeds node stride");
    const Padding& p = l.padding;
    const Padding& pm = n.padding_max;
    if (p.d_start > pm.d_start || p.d_end > pm.d_end || p.h_start > pm.h_start || p.h_end > pm.h_end ||
        p.w_start > pm.w_start || p.w_end > pm.w_end) {
      infeasible(l, n, "padding exceeds node padding");
    }
  }
  if (l.op != OpType::None && !n.supports_types.count(l.op)) {
    infeasible(l, n, "type " + std::string(to_string(l.op)) + " unsupported");
  }
  if (l.broadcast && !n.supports_broadcast) infeasible(l, n, "broadcast unsupported");
  const TensorShape& s = n.shape_in_max;
  if (s.h < 1 || s.w < 1 || s.d < 1 || s.c < 1) infeasible(l, n, "node has an empty dimension");
  if (has_filters(l.kind) && n.filters_max < 1) infeasible(l, n, "node has no filters");
}

// Padded execution needs a whole number of groups in the node's channel bounds.
std::int64_t padded_groups(const LayerDescriptor& l, const NodeCapability& n) {
  if (l.groups == 1) return 1;
  const std::int64_t cpg = l.input().c / l.groups;
  const std::int64_t gr = n.shape_in_max.c / cpg;
  if (n.shape_in_max.c % cpg == 0 && gr >= 1 && n.filters_max % gr == 0) return gr;
  return 1;
}

using Emit = std::function<void(const TileRegion&, const RuntimeConfig&, std::int64_t count)>;

void tile_layer(const LayerDescriptor& l, const NodeCapability& n, ExecutionMode mode, bool grouped_items,
                const Emit& emit) {
  check_layer_fits(l, n);
  const bool padded = mode == ExecutionMode::PaddedBaseline || !n.runtime_configurable;
  const TensorShape& in = l.input();

  SpatialTiles spatial = spatial_tiles(l, n.shape_in_max);
  auto hs = items_of(spatial.h, grouped_items);
  auto ws = items_of(spatial.w, grouped_items);
  auto ds = items_of(spatial.d, grouped_items);

  const bool grouped_conv = l.kind == LayerKind::Conv3D && l.groups > 1;
  std::int64_t cpg = 1, fpg = 1;
  std::vector<AxisItem> cs, fs;
  if (grouped_conv) {
    cpg = in.c / l.groups;
    fpg = l.filters / l.groups;
    const std::int64_t whole = std::min(n.shape_in_max.c / cpg, n.filters_max / fpg);
    if (whole < 1) infeasible(l, n, "node channels cannot hold one group");
    cs = items_of(tile_axis(in.c, cpg * whole, AxisMap::Identity), grouped_items);
    fs.push_back({});
  } else {
    cs = items_of(tile_axis(in.c, n.shape_in_max.c, AxisMap::Identity), grouped_items);
    if (has_filters(l.kind)) {
      fs = items_of(tile_axis(l.filters, n.filters_max, AxisMap::Identity), grouped_items);
    } else {
      fs.push_back({});
    }
  }

  const std::int64_t kvol = l.kernel.volume();
  for (const auto& h : hs) {
    for (const auto& w : ws) {
      for (const auto& d : ds) {
        for (const auto& c : cs) {
          for (const auto& f : fs) {
            TileRegion t;
            t.index = {h.index, w.index, d.index, c.index, grouped_conv ? c.index : f.index};
            t.origin = {h.origin, w.origin, d.origin, c.origin, f.origin};
            t.extent = {h.extent, w.extent, d.extent, c.extent, f.extent};
            std::int64_t tile_filters = f.extent;
            if (grouped_conv) {
              t.origin[kAxisF] = c.origin / cpg * fpg;
              t.extent[kAxisF] = tile_filters = c.extent / cpg * fpg;
            }

            RuntimeConfig cfg;
            cfg.kind = l.kind;
            cfg.op = l.op;
            cfg.broadcast = l.broadcast;
            cfg.psum = has_filters(l.kind) && !grouped_conv && !c.last;
            if (is_windowed(l.kind)) {
              cfg.stride = l.stride;
              cfg.padding = l.padding;
            }

            if (padded) {
              cfg.shape_in = n.shape_in_max;
              cfg.shape_out = n.shape_out_max;
              cfg.filters = has_filters(l.kind) ? n.filters_max : 0;
              if (is_windowed(l.kind)) cfg.kernel = n.kernel_max;
              cfg.groups = grouped_conv ? padded_groups(l, n) : 1;
              cfg.coarse_in = n.coarse_in;
              cfg.coarse_out = n.coarse_out;
              cfg.fine = n.kind == LayerKind::Conv3D ? n.fine : 1;
            } else {
              cfg.shape_in = {h.extent, w.extent, d.extent, c.extent};
              const std::int64_t out_c = has_filters(l.kind) ? tile_filters : c.extent;
              cfg.shape_out = {h.out_extent, w.out_extent, d.out_extent, out_c};
              if (l.kind == LayerKind::FullyConnected) cfg.shape_out = {1, 1, 1, out_c};
              cfg.filters = has_filters(l.kind) ? tile_filters : 0;
              if (is_windowed(l.kind)) cfg.kernel = l.kernel;
              cfg.groups = grouped_conv ? c.extent / cpg : 1;
              cfg.coarse_in = std::gcd(c.extent, n.coarse_in);
              if (has_filters(l.kind)) {
                cfg.coarse_out = std::gcd(tile_filters, n.coarse_out);
              } else {
                cfg.coarse_out = cfg.coarse_in;
              }
              cfg.fine = l.kind == LayerKind::Conv3D ? std::gcd(kvol, n.fine) : 1;
            }
            emit(t, cfg, h.count * w.count * d.count * c.count * f.count);
          }
        }
      }
    }
  }
}

template <typename F>
void for_each_layer(const ModelGraph& model, const HardwareGraph& g, F&& fn) {
  for (const auto& id : schedulable_layers(g, model)) {
    const std::string node_id = g.node_of(id);
    if (node_id.empty()) throw ScheduleError("layer '" + id + "' is not mapped to any node");
    fn(model.layer(id), g.node(node_id));
  }
}

std::string cell_name(const std::string& layer, std::int64_t h, std::int64_t w, std::int64_t d, std::int64_t c,
                      std::int64_t f) {
  return layer + "[h=" + std::to_string(h) + ",w=" + std::to_string(w) + ",d=" + std::to_string(d) +
         ",c=" + std::to_string(c) + (f >= 0 ? ",f=" + std::to_string(f) : std::string()) + "]";
}

constexpr std::size_t kReportLimit = 32;

json shape_json(const TensorShape& s) { return json::array({s.d, s.h, s.w, s.c}); }
TensorShape shape_from(const json& j) {
  return {j.at(1).get<std::int64_t>(), j.at(2).get<std::int64_t>(), j.at(0).get<std::int64_t>(),
          j.at(3).get<std::int64_t>()};
}

json rational_json(const std::optional<Rational>& r) {
  if (!r) return "unlimited";
  return r->to_string();
}

}  // namespace

Schedule build_schedule(const ModelGraph& model, const HardwareGraph& g, ExecutionMode mode) {
  Schedule s;
  s.mode = mode;
  for_each_layer(model, g, [&](const LayerDescriptor& l, const NodeCapability& n) {
    tile_layer(l, n, mode, false, [&](const TileRegion& t, const RuntimeConfig& cfg, std::int64_t) {
      s.entries.push_back({n.id, l.id, t, cfg});
    });
  });
  return s;
}

CompactSchedule compact_schedule(const ModelGraph& model, const HardwareGraph& g, ExecutionMode mode) {
  CompactSchedule s;
  s.mode = mode;
  for_each_layer(model, g, [&](const LayerDescriptor& l, const NodeCapability& n) {
    tile_layer(l, n, mode, true, [&](const TileRegion&, const RuntimeConfig& cfg, std::int64_t count) {
      s.entries.push_back({n.id, l.id, cfg, count});
    });
  });
  return s;
}

std::optional<std::string> exceeds_capability(const RuntimeConfig& cfg, const NodeCapability& cap) {
  auto shape_over = [](const TensorShape& a, const TensorShape& b) {
    return a.h > b.h || a.w > b.w || a.d > b.d || a.c > b.c;
  };
  if (cfg.kind != cap.kind) return "kind";
  if (shape_over(cfg.shape_in, cap.shape_in_max)) return "shape_in";
  if (shape_over(cfg.shape_out, cap.shape_out_max)) return "shape_out";
  if (has_filters(cfg.kind) && cfg.filters > cap.filters_max) return "filters";
  if (is_windowed(cfg.kind)) {
    const Triple &k = cfg.kernel, &km = cap.kernel_max;
    if (k.d > km.d || k.h > km.h || k.w > km.w) return "kernel";
    const Triple &j = cfg.stride, &jm = cap.stride_max;
    if (j.d > jm.d || j.h > jm.h || j.w > jm.w) return "stride";
    const Padding &p = cfg.padding, &pm = cap.padding_max;
    if (p.d_start > pm.d_start || p.d_end > pm.d_end || p.h_start > pm.h_start || p.h_end > pm.h_end ||
        p.w_start > pm.w_start || p.w_end > pm.w_end) {
      return "padding";
    }
  }
  if (cfg.coarse_in > cap.coarse_in) return "coarse_in";
  if (cfg.coarse_out > cap.coarse_out) return "coarse_out";
  if (cfg.fine > cap.fine) return "fine";
  if (cfg.op != OpType::None && !cap.supports_types.count(cfg.op)) return "type";
  if (cfg.broadcast && !cap.supports_broadcast) return "broadcast";
  return std::nullopt;
}

CoverageReport coverage_oracle(const Schedule& schedule, const ModelGraph& model) {
  CoverageReport report;
  std::map<std::string, std::vector<const ScheduleEntry*>> by_layer;
  for (const auto& e : schedule.entries) by_layer[e.layer_id].push_back(&e);

  auto note = [&](std::vector<std::string>& list, std::string what) {
    report.pass = false;
    if (list.size() < kReportLimit) list.push_back(std::move(what));
  };

  for (const auto& [layer_id, entries] : by_layer) {
    const LayerDescriptor* l = model.find(layer_id);
    if (!l) {
      note(report.gaps, layer_id + " (unknown layer)");
      continue;
    }
    const TensorShape& in = l->input();
    const bool filters = has_filters(l->kind);
    const bool grouped = l->kind == LayerKind::Conv3D && l->groups > 1;
    const std::int64_t fdim = filters && !grouped ? l->filters : 1;
    const __int128 cells = static_cast<__int128>(in.h) * in.w * in.d * in.c * fdim;
    if (cells > kCoverageCellCap) {
      report.skipped.push_back(layer_id);
      continue;
    }
    std::vector<std::uint8_t> hits(static_cast<std::size_t>(cells), 0);
    auto at = [&](std::int64_t h, std::int64_t w, std::int64_t d, std::int64_t c, std::int64_t f) {
      return static_cast<std::size_t>((((h * in.w + w) * in.d + d) * in.c + c) * fdim + f);
    };
    for (const ScheduleEntry* e : entries) {
      const TileRegion& t = e->tile;
      if (grouped) {
        const std::int64_t cpg = in.c / l->groups;
        const std::int64_t fpg = l->filters / l->groups;
        if (t.origin[kAxisC] % cpg != 0 || t.extent[kAxisC] % cpg != 0 ||
            t.origin[kAxisF] != t.origin[kAxisC] / cpg * fpg || t.extent[kAxisF] != t.extent[kAxisC] / cpg * fpg) {
          note(report.gaps, layer_id + " tile " + std::to_string(t.index[kAxisC]) + " filters misaligned with groups");
        }
      }
      for (std::int64_t h = t.origin[kAxisH]; h < t.origin[kAxisH] + t.extent[kAxisH]; ++h) {
        for (std::int64_t w = t.origin[kAxisW]; w < t.origin[kAxisW] + t.extent[kAxisW]; ++w) {
          for (std::int64_t d = t.origin[kAxisD]; d < t.origin[kAxisD] + t.extent[kAxisD]; ++d) {
            for (std::int64_t c = t.origin[kAxisC]; c < t.origin[kAxisC] + t.extent[kAxisC]; ++c) {
              const std::int64_t f0 = fdim > 1 ? t.origin[kAxisF] : 0;
              const std::int64_t f1 = fdim > 1 ? t.origin[kAxisF] + t.extent[kAxisF] : 1;
              for (std::int64_t f = f0; f < f1; ++f) {
                if (h >= in.h || w >= in.w || d >= in.d || c >= in.c || f >= fdim || h < 0 || w < 0 || d < 0 ||
                    c < 0 || f < 0) {
                  note(report.duplicates, cell_name(layer_id, h, w, d, c, fdim > 1 ? f : -1) + " out of range");
                  continue;
                }
                if (++hits[at(h, w, d, c, f)] == 2) {
                  note(report.duplicates, cell_name(layer_id, h, w, d, c, fdim > 1 ? f : -1));
                }
              }
            }
          }
        }
      }
    }
    for (std::int64_t h = 0; h < in.h; ++h) {
      for (std::int64_t w = 0; w < in.w; ++w) {
        for (std::int64_t d = 0; d < in.d; ++d) {
          for (std::int64_t c = 0; c < in.c; ++c) {
            for (std::int64_t f = 0; f < fdim; ++f) {
              if (hits[at(h, w, d, c, f)] == 0) note(report.gaps, cell_name(layer_id, h, w, d, c, fdim > 1 ? f : -1));
            }
          }
        }
      }
    }
  }
  for (const auto& l : model.layers()) {
    if (!is_hardware_kind(l.kind) || by_layer.count(l.id)) continue;
    // Fused activations legitimately have no entries; anything else is a gap.
    bool fused = false;
    auto producers = model.producers(l.id);
    if (l.kind == LayerKind::Activation && producers.size() == 1) {
      const auto& p = model.layer(producers.front());
      fused = (p.kind == LayerKind::Conv3D || p.kind == LayerKind::FullyConnected || p.kind == LayerKind::ElementWise) &&
              model.consumers(p.id).size() == 1;
    }
    if (!fused) note(report.gaps, l.id + " (no invocations)");
  }
  return report;
}

std::int64_t schedule_latency_oracle(const Schedule& schedule, const DeviceProfile& dev) {
  std::int64_t total = 0;
  for (const auto& e : schedule.entries) {
    const RuntimeConfig& g = e.config;
    // Feed one MAC (or one element) per lane slot; a cycle ends when every lane is busy.
    std::int64_t lanes = 0;
    std::int64_t work = 0;
    switch (g.kind) {
      case LayerKind::Conv3D: {
        lanes = g.coarse_in * g.coarse_out * g.fine;
        const std::int64_t cpg = g.shape_in.c / g.groups;
        const std::int64_t fpg = g.filters / g.groups;
        const std::int64_t positions = g.shape_out.h * g.shape_out.w * g.shape_out.d;
        for (std::int64_t pos = 0; pos < positions; ++pos) {
          for (std::int64_t f = 0; f < g.filters; ++f) {
            const std::int64_t group = f / fpg;
            for (std::int64_t c = group * cpg; c < (group + 1) * cpg; ++c) {
              for (std::int64_t kd = 0; kd < g.kernel.d; ++kd) {
                for (std::int64_t kh = 0; kh < g.kernel.h; ++kh) {
                  for (std::int64_t kw = 0; kw < g.kernel.w; ++kw) ++work;
                }
              }
            }
          }
        }
        break;
      }
      case LayerKind::FullyConnected:
        lanes = g.coarse_in * g.coarse_out;
        for (std::int64_t c = 0; c < g.shape_in.c; ++c) {
          for (std::int64_t f = 0; f < g.filters; ++f) ++work;
        }
        break;
      default:
        lanes = g.coarse_in;
        for (std::int64_t i = 0; i < g.shape_in.volume(); ++i) ++work;
        break;
    }
    std::int64_t cycles = 0;
    std::int64_t filled = 0;
    for (std::int64_t i = 0; i < work; ++i) {
      if (++filled == lanes) {
        ++cycles;
        filled = 0;
      }
    }
    if (filled > 0) ++cycles;

    // Streaming |S| words through a DMA capped at B words/cycle takes |S|/B cycles.
    std::int64_t entry = cycles;
    if (dev.bw_in_words_per_cycle && g.shape_in.volume() > 0) {
      entry = std::max(entry, (Rational(g.shape_in.volume()) / *dev.bw_in_words_per_cycle).ceil());
    }
    if (dev.bw_out_words_per_cycle && g.shape_out.volume() > 0) {
      entry = std::max(entry, (Rational(g.shape_out.volume()) / *dev.bw_out_words_per_cycle).ceil());
    }
    total += entry;
  }
  return total;
}

json config_to_json(const RuntimeConfig& cfg) {
  json j;
  j["kind"] = std::string(to_string(cfg.kind));
  j["shape_in"] = shape_json(cfg.shape_in);
  j["shape_out"] = shape_json(cfg.shape_out);
  if (has_filters(cfg.kind)) j["filters"] = cfg.filters;
  if (is_windowed(cfg.kind)) {
    j["kernel"] = json::array({cfg.kernel.d, cfg.kernel.h, cfg.kernel.w});
    j["stride"] = json::array({cfg.stride.d, cfg.stride.h, cfg.stride.w});
    const Padding& p = cfg.padding;
    j["padding"] = json::array({p.d_start, p.d_end, p.h_start, p.h_end, p.w_start, p.w_end});
  }
  if (cfg.kind == LayerKind::Conv3D) j["groups"] = cfg.groups;
  if (cfg.op != OpType::None) j["type"] = std::string(to_string(cfg.op));
  if (cfg.kind == LayerKind::ElementWise) j["broadcast"] = cfg.broadcast;
  j["coarse_in"] = cfg.coarse_in;
  j["coarse_out"] = cfg.coarse_out;
  j["fine"] = cfg.fine;
  j["psum"] = cfg.psum;
  return j;
}

RuntimeConfig config_from_json(const json& j) {
  RuntimeConfig cfg;
  cfg.kind = parse_layer_kind(j.at("kind").get<std::string>());
  cfg.shape_in = shape_from(j.at("shape_in"));
  cfg.shape_out = shape_from(j.at("shape_out"));
  cfg.filters = j.value("filters", std::int64_t{0});
  if (j.contains("kernel")) {
    const json& k = j["kernel"];
    cfg.kernel = {k.at(0).get<std::int64_t>(), k.at(1).get<std::int64_t>(), k.at(2).get<std::int64_t>()};
  }
  if (j.contains("stride")) {
    const json& s = j["stride"];
    cfg.stride = {s.at(0).get<std::int64_t>(), s.at(1).get<std::int64_t>(), s.at(2).get<std::int64_t>()};
  }
  if (j.contains("padding")) {
    const json& p = j["padding"];
    cfg.padding = {p.at(0).get<std::int64_t>(), p.at(1).get<std::int64_t>(), p.at(2).get<std::int64_t>(),
                   p.at(3).get<std::int64_t>(), p.at(4).get<std::int64_t>(), p.at(5).get<std::int64_t>()};
  }
  cfg.groups = j.value("groups", std::int64_t{1});
  if (j.contains("type")) cfg.op = parse_op_type(j["type"].get<std::string>());
  cfg.broadcast = j.value("broadcast", false);
  cfg.coarse_in = j.at("coarse_in").get<std::int64_t>();
  cfg.coarse_out = j.at("coarse_out").get<std::int64_t>();
  cfg.fine = j.at("fine").get<std::int64_t>();
  cfg.psum = j.value("psum", false);
  return cfg;
}

json schedule_to_json(const Schedule& schedule, const DeviceProfile* dev) {
  json doc;
  doc["mode"] = std::string(to_string(schedule.mode));
  json entries = json::array();
  std::int64_t total = 0;
  for (const auto& e : schedule.entries) {
    json j;
    j["node"] = e.node_id;
    j["layer"] = e.layer_id;
    j["tile"] = e.tile.index;
    j["origin"] = e.tile.origin;
    j["extent"] = e.tile.extent;
    j["config"] = config_to_json(e.config);
    if (dev) {
      LatencyBreakdown b = invocation_latency(e.config, *dev);
      j["latency"] = json{{"compute_cycles", b.compute_cycles},
                          {"bw_in", rational_json(b.bw_in)},
                          {"bw_out", rational_json(b.bw_out)},
                          {"bound", std::string(to_string(b.bound))},
                          {"total_cycles", b.total_cycles}};
      total += b.total_cycles;
    }
    entries.push_back(std::move(j));
  }
  doc["entries"] = std::move(entries);
  if (dev) {
    doc["device"] = dev->name;
    doc["total_cycles"] = total;
  }
  return doc;
}

Schedule schedule_from_json(const json& doc) {
  Schedule s;
  try {
    s.mode = parse_execution_mode(doc.value("mode", std::string("runtime_configurable")));
    for (const auto& j : doc.at("entries")) {
      ScheduleEntry e;
      e.node_id = j.at("node").get<std::string>();
      e.layer_id = j.at("layer").get<std::string>();
      auto fill = [&](const char* key, std::array<std::int64_t, kTileAxes>& out) {
        const json& a = j.at(key);
        for (std::size_t i = 0; i < kTileAxes; ++i) out[i] = a.at(i).get<std::int64_t>();
      };
      fill("tile", e.tile.index);
      fill("origin", e.tile.origin);
      fill("extent", e.tile.extent);
      e.config = config_from_json(j.at("config"));
      s.entries.push_back(std::move(e));
    }
  } catch (const json::exception& e) {
    throw ScheduleError(std::string("malformed schedule: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw ScheduleError(std::string("malformed schedule: ") + e.what());
  }
  return s;
}

}  // namespace flow3d
