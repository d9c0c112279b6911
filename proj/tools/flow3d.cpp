// flow3d command line: parse, optimize, schedule, report, pareto.
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "CLI11.hpp"
#include "flow3d/device_profile.hpp"
#include "flow3d/hardware_graph.hpp"
#include "flow3d/model_ir.hpp"
#include "flow3d/model_zoo.hpp"
#include "flow3d/optimizer.hpp"
#include "flow3d/report.hpp"
#include "flow3d/scheduler.hpp"

using namespace flow3d;
using nlohmann::json;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json read_json(const std::string& path) {
  try {
    return json::parse(slurp(path));
  } catch (const json::parse_error& e) {
    throw std::runtime_error("'" + path + "' is not valid JSON: " + e.what());
  }
}

// Writes to `path`, or stdout when it is empty or "-".
void emit(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out << text;
}

std::vector<std::int64_t> parse_budgets(const std::string& text) {
  std::vector<std::int64_t> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    std::size_t used = 0;
    long long v = std::stoll(item, &used);
    if (used != item.size()) throw std::runtime_error("bad budget '" + item + "'");
    out.push_back(v);
  }
  if (out.empty()) throw std::runtime_error("no DSP budgets given");
  return out;
}

void print_summary(const ModelGraph& m) {
  std::map<std::string, int> census;
  for (const auto& l : m.layers()) ++census[std::string(to_string(l.kind))];
  std::cout << "model " << m.name() << ": " << m.size() << " layers, " << m.edges().size() << " edges, "
            << static_cast<double>(model_workload_macs(m)) * 1e-9 << " GMACs\n";
  for (const auto& [kind, n] : census) std::cout << "  " << kind << ": " << n << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Latency-driven mapping of 3D CNNs onto runtime-configurable FPGA accelerators"};
  app.require_subcommand(1);

  std::string model_path;
  auto* parse = app.add_subcommand("parse", "Validate a model and print a summary");
  parse->add_option("model", model_path, "Model JSON")->required();

  std::string device_path, params_path, design_out, trace_out;
  std::uint64_t seed = 1;
  std::int64_t chains = 0;
  bool no_fusion = false, no_reconfig = false, no_combine = false;
  auto* optimize = app.add_subcommand("optimize", "Search for a low-latency design");
  optimize->add_option("--model", model_path, "Model JSON")->required();
  optimize->add_option("--device", device_path, "Device JSON")->required();
  optimize->add_option("--seed", seed, "Random seed");
  optimize->add_option("--params", params_path, "Annealing parameters JSON");
  optimize->add_option("--chains", chains, "Concurrent annealing chains");
  optimize->add_option("--out", design_out, "Design JSON output");
  optimize->add_option("--trace", trace_out, "Trace CSV output");
  optimize->add_flag("--no-fusion", no_fusion, "Keep activations as standalone layers");
  optimize->add_flag("--no-runtime-reconfig", no_reconfig, "Execute every tile at the node's full size");
  optimize->add_flag("--no-combine", no_combine, "Disable combine/separate moves");

  std::string design_path, schedule_out;
  auto* schedule = app.add_subcommand("schedule", "Build the invocation schedule of a design");
  schedule->add_option("--design", design_path, "Design JSON")->required();
  schedule->add_option("--device", device_path, "Device JSON (adds latency per entry)");
  schedule->add_option("--out", schedule_out, "Schedule JSON output");

  std::string schedule_path, report_out;
  auto* report = app.add_subcommand("report", "Latency, throughput and utilization of a design");
  report->add_option("--design", design_path, "Design JSON")->required();
  report->add_option("--schedule", schedule_path, "Schedule JSON (rebuilt from the design if omitted)");
  report->add_option("--device", device_path, "Device JSON")->required();
  report->add_option("--out", report_out, "Report JSON output");

  std::string budgets_text, pareto_out;
  auto* pareto = app.add_subcommand("pareto", "Sweep DSP budgets and keep the non-dominated designs");
  pareto->add_option("--model", model_path, "Model JSON")->required();
  pareto->add_option("--device", device_path, "Device JSON")->required();
  pareto->add_option("--budgets", budgets_text, "Comma-separated ascending DSP caps")->required();
  pareto->add_option("--seed", seed, "Random seed");
  pareto->add_option("--params", params_path, "Annealing parameters JSON");
  pareto->add_option("--chains", chains, "Concurrent chains per budget");
  pareto->add_option("--out", pareto_out, "Pareto CSV output");

  double latency_ms = 0, gmacs = 0, clock_mhz = 0;
  std::int64_t dsp = 0;
  auto* metrics = app.add_subcommand("metrics", "Throughput figures from latency, workload and device");
  metrics->add_option("--latency-ms", latency_ms)->required();
  metrics->add_option("--gmacs", gmacs)->required();
  metrics->add_option("--dsp", dsp)->required();
  metrics->add_option("--clock-mhz", clock_mhz)->required();

  std::string zoo_name, zoo_out;
  auto* zoo_cmd = app.add_subcommand("zoo", "Write a bundled model as JSON");
  zoo_cmd->add_option("name", zoo_name, "c3d, r2plus1d_18, toy or multi_shape")->required();
  zoo_cmd->add_option("--out", zoo_out, "Model JSON output");

  CLI11_PARSE(app, argc, argv);

  try {
    auto load_params = [&] {
      AnnealingParams p;
      if (!params_path.empty()) p = params_from_json(read_json(params_path));
      if (optimize->count("--seed") || pareto->count("--seed")) p.seed = seed;
      if (chains > 0) p.chains = chains;
      return p;
    };

    if (*parse) {
      print_summary(parse_model(slurp(model_path)));
    } else if (*optimize) {
      ModelGraph model = parse_model(slurp(model_path));
      DeviceProfile dev = load_profile(slurp(device_path));
      AnnealingParams p = load_params();
      if (no_fusion) p.fusion = false;
      if (no_reconfig) p.runtime_reconfig = false;
      if (no_combine) p.combine_separate = false;
      p.validate();
      AnnealResult r = anneal_multistart(model, dev, p);
      Design d{model, r.best.graph, r.best.mode};
      emit(design_out, design_to_json(d).dump(2) + "\n");
      if (!trace_out.empty()) {
        std::ostringstream csv;
        write_trace_csv(csv, r.trace);
        emit(trace_out, csv.str());
      }
      const ResourceVector& res = r.best.resources;
      std::cerr << "latency " << r.best.latency_cycles << " cycles ("
                << cycles_to_seconds(r.best.latency_cycles, dev) * 1e3 << " ms), warm start "
                << r.warm.latency_cycles << " cycles; dsp " << res.dsp << " bram " << res.bram << " lut "
                << res.lut << " ff " << res.ff << "\n";
    } else if (*schedule) {
      Design d = design_from_json(read_json(design_path));
      Schedule s = build_schedule(d.model, d.graph, d.mode);
      if (device_path.empty()) {
        emit(schedule_out, schedule_to_json(s).dump(2) + "\n");
      } else {
        DeviceProfile dev = load_profile(slurp(device_path));
        emit(schedule_out, schedule_to_json(s, &dev).dump(2) + "\n");
      }
    } else if (*report) {
      Design d = design_from_json(read_json(design_path));
      DeviceProfile dev = load_profile(slurp(device_path));
      Schedule s = schedule_path.empty() ? build_schedule(d.model, d.graph, d.mode)
                                         : schedule_from_json(read_json(schedule_path));
      emit(report_out, report_to_json(build_report(d, s, dev)).dump(2) + "\n");
    } else if (*pareto) {
      ModelGraph model = parse_model(slurp(model_path));
      DeviceProfile dev = load_profile(slurp(device_path));
      auto points = pareto_sweep(model, dev, load_params(), parse_budgets(budgets_text));
      std::ostringstream csv;
      write_pareto_csv(csv, points);
      emit(pareto_out, csv.str());
    } else if (*metrics) {
      Metrics m = derive_metrics(gmacs, latency_ms * 1e-3, dsp, clock_mhz * 1e6);
      std::cout << json{{"gops_per_s", m.gops}, {"gops_per_s_per_dsp", m.gops_per_dsp},
                        {"op_per_dsp_per_cycle", m.op_per_dsp_cycle}}
                       .dump(2)
                << "\n";
    } else if (*zoo_cmd) {
      emit(zoo_out, serialize_model(zoo::by_name(zoo_name)));
    }
  } catch (const std::exception& e) {
    std::cerr << "flow3d: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
