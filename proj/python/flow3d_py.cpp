// Python bindings. Documents cross the boundary as JSON text; the package
// wrapper in flow3d/__init__.py turns them into dicts.
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "flow3d/device_profile.hpp"
#include "flow3d/hardware_graph.hpp"
#include "flow3d/model_ir.hpp"
#include "flow3d/model_zoo.hpp"
#include "flow3d/optimizer.hpp"
#include "flow3d/perf_model.hpp"
#include "flow3d/report.hpp"
#include "flow3d/resource_model.hpp"
#include "flow3d/scheduler.hpp"

namespace py = pybind11;
using namespace flow3d;
using nlohmann::json;

namespace {

AnnealingParams params_of(const std::string& text) {
  return text.empty() ? AnnealingParams{} : params_from_json(json::parse(text));
}

py::dict summary(const std::string& model_text) {
  ModelGraph m = parse_model(model_text);
  py::dict d;
  d["name"] = m.name();
  d["layers"] = m.size();
  d["edges"] = m.edges().size();
  d["macs"] = model_workload_macs(m);
  return d;
}

py::tuple optimize(const std::string& model_text, const std::string& device_text, const std::string& params_text) {
  ModelGraph model = parse_model(model_text);
  DeviceProfile dev = load_profile(device_text);
  AnnealingParams p = params_of(params_text);
  AnnealResult r;
  {
    py::gil_scoped_release release;
    r = anneal_multistart(model, dev, p);
  }
  std::ostringstream trace;
  write_trace_csv(trace, r.trace);
  Design d{model, r.best.graph, r.best.mode};
  return py::make_tuple(design_to_json(d).dump(), r.best.latency_cycles, r.warm.latency_cycles, trace.str());
}

std::string schedule(const std::string& design_text, const std::string& device_text) {
  Design d = design_from_json(json::parse(design_text));
  Schedule s = build_schedule(d.model, d.graph, d.mode);
  if (device_text.empty()) return schedule_to_json(s).dump();
  DeviceProfile dev = load_profile(device_text);
  return schedule_to_json(s, &dev).dump();
}

std::string report(const std::string& design_text, const std::string& device_text) {
  Design d = design_from_json(json::parse(design_text));
  DeviceProfile dev = load_profile(device_text);
  return report_to_json(build_report(d, build_schedule(d.model, d.graph, d.mode), dev)).dump();
}

std::string pareto(const std::string& model_text, const std::string& device_text,
                   const std::vector<std::int64_t>& budgets, const std::string& params_text) {
  ModelGraph model = parse_model(model_text);
  DeviceProfile dev = load_profile(device_text);
  AnnealingParams p = params_of(params_text);
  std::vector<ParetoPoint> points;
  {
    py::gil_scoped_release release;
    points = pareto_sweep(model, dev, p, budgets);
  }
  std::ostringstream csv;
  write_pareto_csv(csv, points);
  return csv.str();
}

py::dict metrics(double gmacs, double latency_s, std::int64_t dsp, double clock_hz) {
  Metrics m = derive_metrics(gmacs, latency_s, dsp, clock_hz);
  py::dict d;
  d["gops_per_s"] = m.gops;
  d["gops_per_s_per_dsp"] = m.gops_per_dsp;
  d["op_per_dsp_per_cycle"] = m.op_per_dsp_cycle;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "flow3d native core";
  py::register_exception<ModelError>(m, "ModelError", PyExc_ValueError);
  py::register_exception<DeviceError>(m, "DeviceError", PyExc_ValueError);
  py::register_exception<HardwareGraphError>(m, "HardwareGraphError", PyExc_ValueError);
  py::register_exception<ScheduleError>(m, "ScheduleError", PyExc_ValueError);
  py::register_exception<OptimizerError>(m, "OptimizerError", PyExc_RuntimeError);

  m.attr("DATA_DIR") = FLOW3D_DATA_DIR;
  m.def("zoo_names", &zoo::names);
  m.def("zoo_model", [](const std::string& name) { return serialize_model(zoo::by_name(name)); });
  m.def("model_summary", &summary, py::arg("model"));
  m.def("normalize_model", [](const std::string& text) { return serialize_model(parse_model(text)); });
  m.def("normalize_device", [](const std::string& text) { return profile_to_json(load_profile(text)).dump(); });
  m.def("optimize", &optimize, py::arg("model"), py::arg("device"), py::arg("params") = "");
  m.def("schedule", &schedule, py::arg("design"), py::arg("device") = "");
  m.def("report", &report, py::arg("design"), py::arg("device"));
  m.def("pareto", &pareto, py::arg("model"), py::arg("device"), py::arg("budgets"), py::arg("params") = "");
  m.def("derive_metrics", &metrics, py::arg("gmacs"), py::arg("latency_s"), py::arg("dsp"), py::arg("clock_hz"));
  m.def("bram_blocks", &bram_blocks, py::arg("depth"), py::arg("words"));
}
