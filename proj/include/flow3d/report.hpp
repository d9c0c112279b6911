#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "flow3d/device_profile.hpp"
#include "flow3d/hardware_graph.hpp"
#include "flow3d/optimizer.hpp"
#include "flow3d/perf_model.hpp"
#include "flow3d/schedule.hpp"
#include "json.hpp"

namespace flow3d {

struct Metrics {
  double gops = 0.0;
  double gops_per_dsp = 0.0;
  double op_per_dsp_cycle = 0.0;
};

/// Throughput figures from a MAC count, a latency and the device's DSPs and clock.
Metrics derive_metrics(double gmacs, double latency_s, std::int64_t dsp_total, double clock_hz);

struct LayerLatency {
  std::string layer;
  std::string node;
  std::int64_t invocations = 0;
  std::int64_t compute_cycles = 0;
  std::int64_t total_cycles = 0;
  Bound bound = Bound::Compute;
};

struct Report {
  std::string model;
  std::string device;
  std::string mode;
  std::int64_t latency_cycles = 0;
  double latency_ms = 0.0;
  double workload_gmacs = 0.0;
  Metrics metrics;
  ResourceVector resources;
  double dsp_pct = 0.0, bram_pct = 0.0, lut_pct = 0.0, ff_pct = 0.0;
  std::vector<LayerLatency> layers;
};

Report build_report(const Design& design, const Schedule& schedule, const DeviceProfile& dev,
                    const ResourceModel& rm = ResourceModel::defaults());
nlohmann::json report_to_json(const Report& r);

void write_trace_csv(std::ostream& out, const std::vector<TracePoint>& trace);
void write_pareto_csv(std::ostream& out, const std::vector<ParetoPoint>& points);

}  // namespace flow3d
