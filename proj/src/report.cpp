#include "flow3d/report.hpp"

#include <map>
#include <ostream>

#include "flow3d/resource_model.hpp"

namespace flow3d {

using nlohmann::json;

Metrics derive_metrics(double gmacs, double latency_s, std::int64_t dsp_total, double clock_hz) {
  if (latency_s <= 0.0 || dsp_total <= 0 || clock_hz <= 0.0) {
    throw std::invalid_argument("metrics need a positive latency, DSP count and clock");
  }
  Metrics m;
  m.gops = gmacs / latency_s;
  m.gops_per_dsp = m.gops / static_cast<double>(dsp_total);
  m.op_per_dsp_cycle = m.gops_per_dsp / (clock_hz * 1e-9);
  return m;
}

Report build_report(const Design& design, const Schedule& schedule, const DeviceProfile& dev,
                    const ResourceModel& rm) {
  Report r;
  r.model = design.model.name();
  r.device = dev.name;
  r.mode = std::string(to_string(schedule.mode));
  r.workload_gmacs = static_cast<double>(model_workload_macs(design.model)) * 1e-9;

  std::map<std::string, std::size_t> row;
  std::map<std::string, std::array<std::int64_t, 3>> bound_cycles;
  for (const auto& e : schedule.entries) {
    LatencyBreakdown b = invocation_latency(e.config, dev);
    auto [it, fresh] = row.emplace(e.layer_id, r.layers.size());
    if (fresh) r.layers.push_back({e.layer_id, e.node_id});
    LayerLatency& l = r.layers[it->second];
    ++l.invocations;
    l.compute_cycles += b.compute_cycles;
    l.total_cycles += b.total_cycles;
    bound_cycles[e.layer_id][static_cast<std::size_t>(b.bound)] += b.total_cycles;
    r.latency_cycles += b.total_cycles;
  }
  for (auto& l : r.layers) {
    const auto& c = bound_cycles[l.layer];
    std::size_t top = 0;
    for (std::size_t i = 1; i < c.size(); ++i) {
      if (c[i] > c[top]) top = i;
    }
    l.bound = static_cast<Bound>(top);
  }
  const double seconds = cycles_to_seconds(r.latency_cycles, dev);
  r.latency_ms = seconds * 1e3;
  if (r.latency_cycles > 0) r.metrics = derive_metrics(r.workload_gmacs, seconds, dev.dsp_total, dev.clock_hz);

  r.resources = graph_resources(design.graph, dev, rm);
  auto pct = [](std::int64_t used, std::int64_t total) { return 100.0 * static_cast<double>(used) / total; };
  r.dsp_pct = pct(r.resources.dsp, dev.dsp_total);
  r.bram_pct = pct(r.resources.bram, dev.bram_total);
  r.lut_pct = pct(r.resources.lut, dev.lut_total);
  r.ff_pct = pct(r.resources.ff, dev.ff_total);
  return r;
}

json report_to_json(const Report& r) {
  json layers = json::array();
  for (const auto& l : r.layers) {
    layers.push_back(json{{"layer", l.layer},
                          {"node", l.node},
                          {"invocations", l.invocations},
                          {"compute_cycles", l.compute_cycles},
                          {"total_cycles", l.total_cycles},
                          {"bound", std::string(to_string(l.bound))}});
  }
  return json{{"model", r.model},
              {"device", r.device},
              {"mode", r.mode},
              {"latency_cycles", r.latency_cycles},
              {"latency_ms", r.latency_ms},
              {"workload_gmacs", r.workload_gmacs},
              {"gops_per_s", r.metrics.gops},
              {"gops_per_s_per_dsp", r.metrics.gops_per_dsp},
              {"op_per_dsp_per_cycle", r.metrics.op_per_dsp_cycle},
              {"resources", {{"dsp", r.resources.dsp}, {"bram", r.resources.bram}, {"lut", r.resources.lut},
                             {"ff", r.resources.ff}}},
              {"utilization_pct", {{"dsp", r.dsp_pct}, {"bram", r.bram_pct}, {"lut", r.lut_pct}, {"ff", r.ff_pct}}},
              {"layers", layers}};
}

void write_trace_csv(std::ostream& out, const std::vector<TracePoint>& trace) {
  out << "iter,tau,current_cycles,best_cycles,feasible\n";
  for (const auto& t : trace) {
    out << t.iteration << ',' << json(t.tau).dump() << ',' << t.current_cycles << ',' << t.best_cycles << ','
        << (t.feasible ? 1 : 0) << '\n';
  }
}

void write_pareto_csv(std::ostream& out, const std::vector<ParetoPoint>& points) {
  out << "dsp,bram,latency_ms\n";
  for (const auto& p : points) out << p.dsp << ',' << p.bram << ',' << json(p.latency_ms).dump() << '\n';
}

}  // namespace flow3d
