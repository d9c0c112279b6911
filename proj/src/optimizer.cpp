#include "flow3d/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <thread>

#include "flow3d/log.hpp"
#include "flow3d/perf_model.hpp"
#include "flow3d/scheduler.hpp"

namespace flow3d {

using nlohmann::json;

void AnnealingParams::validate() const {
  if (!(tau_min > 0.0)) throw OptimizerError("tau_min must be positive");
  if (!(tau_start > tau_min)) throw OptimizerError("tau_start must exceed tau_min");
  if (!(cooling > 0.0 && cooling < 1.0)) throw OptimizerError("cooling rate must lie in (0, 1)");
  if (iterations_per_temperature < 1) throw OptimizerError("iterations_per_temperature must be at least 1");
  if (warm_start_samples < 1) throw OptimizerError("warm_start_samples must be at least 1");
  if (separate_layers < 1) throw OptimizerError("separate_layers must be at least 1");
  if (combine_count < 2) throw OptimizerError("combine_count must be at least 2");
  if (chains < 1) throw OptimizerError("chains must be at least 1");
}

json params_to_json(const AnnealingParams& p) {
  return json{{"tau_start", p.tau_start},
              {"tau_min", p.tau_min},
              {"cooling", p.cooling},
              {"seed", p.seed},
              {"iterations_per_temperature", p.iterations_per_temperature},
              {"warm_start_samples", p.warm_start_samples},
              {"separate_layers", p.separate_layers},
              {"combine_count", p.combine_count},
              {"chains", p.chains},
              {"combine_separate", p.combine_separate},
              {"fusion", p.fusion},
              {"runtime_reconfig", p.runtime_reconfig}};
}

AnnealingParams params_from_json(const json& j) {
  if (!j.is_object()) throw OptimizerError("annealing parameters must be a JSON object");
  AnnealingParams p;
  try {
    p.tau_start = j.value("tau_start", p.tau_start);
    p.tau_min = j.value("tau_min", p.tau_min);
    p.cooling = j.value("cooling", p.cooling);
    p.seed = j.value("seed", p.seed);
    p.iterations_per_temperature = j.value("iterations_per_temperature", p.iterations_per_temperature);
    p.warm_start_samples = j.value("warm_start_samples", p.warm_start_samples);
    p.separate_layers = j.value("separate_layers", p.separate_layers);
    p.combine_count = j.value("combine_count", p.combine_count);
    p.chains = j.value("chains", p.chains);
    p.combine_separate = j.value("combine_separate", p.combine_separate);
    p.fusion = j.value("fusion", p.fusion);
    p.runtime_reconfig = j.value("runtime_reconfig", p.runtime_reconfig);
  } catch (const json::exception& e) {
    throw OptimizerError(std::string("bad annealing parameter: ") + e.what());
  }
  p.validate();
  return p;
}

std::uint64_t Rng::below(std::uint64_t n) {
  if (n == 0) throw std::invalid_argument("Rng::below needs a positive bound");
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % n;
  std::uint64_t x;
  do {
    x = engine_();
  } while (x >= limit);
  return x % n;
}

std::int64_t Rng::between(std::int64_t lo, std::int64_t hi) {
  if (hi < lo) std::swap(lo, hi);
  return lo + static_cast<std::int64_t>(below(static_cast<std::uint64_t>(hi - lo) + 1));
}

double Rng::unit() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

namespace {

constexpr double kScheduleFailureScore = 1e3;

struct Checked {
  std::vector<Violation> violations;
  std::int64_t latency = 0;
};

Checked check_all(const CandidateState& s, const ModelGraph& model, const DeviceProfile& dev) {
  Checked out;
  auto& v = out.violations;

  for (const auto& problem : validate_mapping(s.graph, model)) v.push_back({"mapping", "graph", problem, 1.0});

  for (const auto& e : s.schedule.entries) {
    const NodeCapability* n = s.graph.find_node(e.node_id);
    LatencyBreakdown b = invocation_latency(e.config, dev);
    out.latency += e.count * b.total_cycles;
    const bool starved_in = e.config.shape_in.volume() > 0 && b.bw_in && !(*b.bw_in > Rational(0));
    const bool starved_out = e.config.shape_out.volume() > 0 && b.bw_out && !(*b.bw_out > Rational(0));
    if (starved_in || starved_out) {
      v.push_back({"bandwidth", e.layer_id, "stream makes no progress", 1.0});
    }
    if (!n) {
      v.push_back({"capability", e.layer_id, "unknown node " + e.node_id, 1.0});
      continue;
    }
    if (auto field = exceeds_capability(e.config, *n)) {
      v.push_back({"capability", e.layer_id, *field + " exceeds node " + n->id, 1.0});
    }
  }

  const ResourceVector budget = dev.budget();
  auto over = [&](const char* name, std::int64_t used, std::int64_t avail) {
    if (used <= avail) return;
    std::ostringstream d;
    d << name << " " << used << " > " << avail;
    v.push_back({"resource", name, d.str(), static_cast<double>(used - avail) / static_cast<double>(avail)});
  };
  over("dsp", s.resources.dsp, budget.dsp);
  over("bram", s.resources.bram, budget.bram);
  over("lut", s.resources.lut, budget.lut);
  over("ff", s.resources.ff, budget.ff);

  for (const auto& n : s.graph.nodes) {
    if (n.coarse_in < 1 || n.shape_in_max.c % n.coarse_in != 0) {
      v.push_back({"divisibility", n.id, "coarse_in does not divide C", 1.0});
    }
    if (has_filters(n.kind)) {
      if (n.coarse_out < 1 || n.filters_max % n.coarse_out != 0) {
        v.push_back({"divisibility", n.id, "coarse_out does not divide F", 1.0});
      }
    } else if (n.coarse_out != n.coarse_in) {
      v.push_back({"divisibility", n.id, "single-stream node with coarse_out != coarse_in", 1.0});
    }
    const std::int64_t kvol = n.kind == LayerKind::Conv3D ? n.kernel_max.volume() : 1;
    if (n.fine < 1 || kvol % n.fine != 0) v.push_back({"divisibility", n.id, "fine does not divide |K|", 1.0});
  }
  return out;
}

struct NodeSpace {
  std::int64_t h = 1;
  std::int64_t lo_w = 1, hi_w = 1, lo_d = 1, hi_d = 1;
  std::vector<std::int64_t> c_choices;
  std::vector<std::int64_t> f_choices;
  [[nodiscard]] bool reshapeable() const {
    return lo_w < hi_w || lo_d < hi_d || c_choices.size() > 1 || f_choices.size() > 1;
  }
};

std::vector<std::int64_t> union_divisors(const std::vector<std::int64_t>& values) {
  std::vector<std::int64_t> out;
  for (auto v : values) {
    auto d = divisors(v);
    out.insert(out.end(), d.begin(), d.end());
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

NodeSpace space_of(const ModelGraph& model, const HardwareGraph& g, const NodeCapability& n) {
  NodeSpace s;
  std::vector<std::int64_t> cs, fs;
  for (const auto& lid : g.layers_of(n.id)) {
    const LayerDescriptor& l = model.layer(lid);
    s.h = std::max(s.h, l.input().h);
    s.hi_w = std::max(s.hi_w, l.input().w);
    s.hi_d = std::max(s.hi_d, l.input().d);
    if (is_windowed(l.kind)) {
      s.lo_w = std::max(s.lo_w, l.kernel.w);
      s.lo_d = std::max(s.lo_d, l.kernel.d);
    }
    cs.push_back(l.input().c);
    if (has_filters(l.kind)) fs.push_back(l.filters);
  }
  s.lo_w = std::min(s.lo_w, s.hi_w);
  s.lo_d = std::min(s.lo_d, s.hi_d);
  s.c_choices = union_divisors(cs);
  s.f_choices = union_divisors(fs);
  return s;
}

void refresh(NodeCapability& n, const ModelGraph& model, const HardwareGraph& g) {
  repair_folds(n);
  refresh_output_bound(n, model, g.layers_of(n.id));
}

void randomize_node(NodeCapability& n, const ModelGraph& model, const HardwareGraph& g, Rng& rng) {
  NodeSpace s = space_of(model, g, n);
  n.shape_in_max.w = rng.between(s.lo_w, s.hi_w);
  n.shape_in_max.d = rng.between(s.lo_d, s.hi_d);
  n.shape_in_max.c = rng.pick(s.c_choices);
  if (has_filters(n.kind)) n.filters_max = rng.pick(s.f_choices);
  n.coarse_in = rng.pick(divisors(n.shape_in_max.c));
  n.coarse_out = has_filters(n.kind) ? rng.pick(divisors(n.filters_max)) : n.coarse_in;
  if (n.kind == LayerKind::Conv3D) n.fine = rng.pick(divisors(n.kernel_max.volume()));
  refresh(n, model, g);
}

bool better(const CandidateState& a, const CandidateState& b) {
  if (a.feasible != b.feasible) return a.feasible;
  if (a.feasible) return a.latency_cycles < b.latency_cycles;
  return a.violation_score < b.violation_score;
}

double cycles_to_ms(std::int64_t cycles, const DeviceProfile& dev) { return cycles_to_seconds(cycles, dev) * 1e3; }

}  // namespace

std::vector<Violation> check_constraints(const CandidateState& state, const ModelGraph& model,
                                         const DeviceProfile& dev) {
  auto v = check_all(state, model, dev).violations;
  if (state.latency_cycles < 0) v.push_back({"capability", "schedule", "no schedule could be built", 1.0});
  return v;
}

CandidateState evaluate(const ModelGraph& model, HardwareGraph graph, ExecutionMode mode, const DeviceProfile& dev,
                        const ResourceModel& rm) {
  CandidateState s;
  s.graph = std::move(graph);
  s.mode = mode;
  s.resources = graph_resources(s.graph, dev, rm);
  std::optional<Violation> failure;
  try {
    s.schedule = compact_schedule(model, s.graph, mode);
  } catch (const ScheduleError& e) {
    failure = Violation{"capability", "schedule", e.what(), kScheduleFailureScore};
  } catch (const HardwareGraphError& e) {
    failure = Violation{"mapping", "schedule", e.what(), kScheduleFailureScore};
  }
  Checked c = check_all(s, model, dev);
  s.violations = std::move(c.violations);
  if (failure) {
    s.schedule.entries.clear();
    s.violations.push_back(*failure);
    s.latency_cycles = -1;
  } else {
    s.latency_cycles = c.latency;
  }
  s.feasible = s.violations.empty();
  for (const auto& v : s.violations) s.violation_score += v.excess;
  return s;
}

CandidateState random_transformation(const CandidateState& state, const ModelGraph& model, const DeviceProfile& dev,
                                     const AnnealingParams& params, Rng& rng, const ResourceModel& rm) {
  const HardwareGraph& g = state.graph;

  std::vector<std::size_t> reshape_nodes, coarse_nodes, fine_nodes, separate_nodes;
  std::map<LayerKind, std::vector<std::string>> by_kind;
  for (std::size_t i = 0; i < g.nodes.size(); ++i) {
    const NodeCapability& n = g.nodes[i];
    if (space_of(model, g, n).reshapeable()) reshape_nodes.push_back(i);
    if (n.shape_in_max.c > 1 || (has_filters(n.kind) && n.filters_max > 1)) coarse_nodes.push_back(i);
    if (n.kind == LayerKind::Conv3D && n.kernel_max.volume() > 1) fine_nodes.push_back(i);
    if (static_cast<std::int64_t>(g.layers_of(n.id).size()) > params.separate_layers) separate_nodes.push_back(i);
    by_kind[n.kind].push_back(n.id);
  }
  std::vector<LayerKind> combine_kinds;
  for (const auto& [kind, ids] : by_kind) {
    if (static_cast<std::int64_t>(ids.size()) >= params.combine_count) combine_kinds.push_back(kind);
  }

  std::vector<Transform> enabled;
  if (!reshape_nodes.empty()) enabled.push_back(Transform::Reshape);
  if (!coarse_nodes.empty()) enabled.push_back(Transform::CoarseFold);
  if (!fine_nodes.empty()) enabled.push_back(Transform::FineFold);
  if (params.combine_separate) {
    if (!combine_kinds.empty()) enabled.push_back(Transform::Combine);
    if (!separate_nodes.empty()) enabled.push_back(Transform::Separate);
  }
  if (enabled.empty()) return evaluate(model, g, state.mode, dev, rm);

  HardwareGraph next = g;
  switch (rng.pick(enabled)) {
    case Transform::Reshape: {
      NodeCapability& n = next.nodes[rng.pick(reshape_nodes)];
      NodeSpace s = space_of(model, next, n);
      std::vector<int> dims;
      if (s.lo_w < s.hi_w) dims.push_back(0);
      if (s.lo_d < s.hi_d) dims.push_back(1);
      if (s.c_choices.size() > 1) dims.push_back(2);
      if (s.f_choices.size() > 1) dims.push_back(3);
      switch (rng.pick(dims)) {
        case 0: n.shape_in_max.w = rng.between(s.lo_w, s.hi_w); break;
        case 1: n.shape_in_max.d = rng.between(s.lo_d, s.hi_d); break;
        case 2: n.shape_in_max.c = rng.pick(s.c_choices); break;
        default: n.filters_max = rng.pick(s.f_choices); break;
      }
      n.shape_in_max.h = s.h;
      refresh(n, model, next);
      break;
    }
    case Transform::CoarseFold: {
      NodeCapability& n = next.nodes[rng.pick(coarse_nodes)];
      const bool out_side = has_filters(n.kind) && n.filters_max > 1 && (n.shape_in_max.c == 1 || rng.below(2) == 1);
      // Both sides at once, so the DSP split between in and out can shift in one move.
      if (has_filters(n.kind) && rng.below(3) == 0) {
        n.coarse_in = rng.pick(divisors(n.shape_in_max.c));
        n.coarse_out = rng.pick(divisors(n.filters_max));
      } else if (out_side) {
        n.coarse_out = rng.pick(divisors(n.filters_max));
      } else {
        n.coarse_in = rng.pick(divisors(n.shape_in_max.c));
        if (!has_filters(n.kind)) n.coarse_out = n.coarse_in;
      }
      break;
    }
    case Transform::FineFold: {
      NodeCapability& n = next.nodes[rng.pick(fine_nodes)];
      const std::int64_t lanes = n.coarse_in * n.coarse_out * n.fine;
      n.fine = rng.pick(divisors(n.kernel_max.volume()));
      // Half the time trade the change against c_out so the DSP count stays
      // put; otherwise a cheaper f with wider streams is two uphill moves away.
      if (rng.below(2) == 0) {
        const double want = static_cast<double>(lanes) / static_cast<double>(n.coarse_in * n.fine);
        double best = std::numeric_limits<double>::infinity();
        for (std::int64_t d : divisors(n.filters_max)) {
          const double gap = std::abs(std::log(static_cast<double>(d) / want));
          if (gap < best) {
            best = gap;
            n.coarse_out = d;
          }
        }
      }
      break;
    }
    case Transform::Combine: {
      const auto& ids = by_kind[rng.pick(combine_kinds)];
      std::vector<std::string> pool = ids;
      std::set<std::string> chosen;
      while (static_cast<std::int64_t>(chosen.size()) < params.combine_count) {
        std::size_t k = rng.below(pool.size());
        chosen.insert(pool[k]);
        pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(k));
      }
      TensorShape parts{1, 1, 1, 1};
      std::int64_t parts_f = 1;
      for (const auto& id : chosen) {
        const NodeCapability& p = g.node(id);
        parts.w = std::max(parts.w, p.shape_in_max.w);
        parts.d = std::max(parts.d, p.shape_in_max.d);
        parts.c = std::max(parts.c, p.shape_in_max.c);
        parts_f = std::max(parts_f, p.filters_max);
      }
      next = combine_nodes(g, model, chosen);
      // combine_nodes sizes the survivor for every layer; pull it back to the
      // parts' own sizes so the merge alone does not blow the memory budget.
      NodeCapability& n = *next.find_node(*chosen.begin());
      NodeSpace s = space_of(model, next, n);
      n.shape_in_max.w = std::clamp(parts.w, s.lo_w, s.hi_w);
      n.shape_in_max.d = std::clamp(parts.d, s.lo_d, s.hi_d);
      if (std::binary_search(s.c_choices.begin(), s.c_choices.end(), parts.c)) n.shape_in_max.c = parts.c;
      if (has_filters(n.kind) && std::binary_search(s.f_choices.begin(), s.f_choices.end(), parts_f)) {
        n.filters_max = parts_f;
      }
      refresh(n, model, next);
      break;
    }
    case Transform::Separate: {
      const NodeCapability& n = g.nodes[rng.pick(separate_nodes)];
      std::vector<std::string> pool = g.layers_of(n.id);
      std::set<std::string> chosen;
      while (static_cast<std::int64_t>(chosen.size()) < params.separate_layers) {
        std::size_t k = rng.below(pool.size());
        chosen.insert(pool[k]);
        pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(k));
      }
      next = separate_node(g, model, n.id, chosen);
      break;
    }
  }
  return evaluate(model, std::move(next), state.mode, dev, rm);
}

CandidateState warm_start(const ModelGraph& model, const DeviceProfile& dev, const AnnealingParams& params, Rng& rng,
                          const ResourceModel& rm) {
  HardwareGraph base = initial_mapping(model);
  if (params.fusion) base = fuse_activations(base, model);
  CandidateState best = evaluate(model, base, params.mode(), dev, rm);
  for (std::int64_t i = 0; i < params.warm_start_samples; ++i) {
    HardwareGraph g = base;
    for (auto& n : g.nodes) randomize_node(n, model, g, rng);
    CandidateState s = evaluate(model, std::move(g), params.mode(), dev, rm);
    if (better(s, best)) best = std::move(s);
  }
  return best;
}

AnnealResult anneal(const ModelGraph& model, const DeviceProfile& dev, const AnnealingParams& params,
                    const ResourceModel& rm) {
  params.validate();
  Rng rng(params.seed);
  AnnealResult result;
  result.warm = warm_start(model, dev, params, rng, rm);
  CandidateState current = result.warm;
  std::optional<CandidateState> best;
  if (current.feasible) best = current;

  std::int64_t iteration = 0;
  for (double tau = params.tau_start; tau > params.tau_min; tau *= params.cooling) {
    for (std::int64_t k = 0; k < params.iterations_per_temperature; ++k, ++iteration) {
      CandidateState next = random_transformation(current, model, dev, params, rng, rm);
      bool accept = false;
      if (next.feasible) {
        if (!current.feasible) {
          accept = true;
        } else {
          // Relative change in percent, so one temperature schedule suits
          // models whose latencies differ by orders of magnitude.
          const double delta = 100.0 * static_cast<double>(next.latency_cycles - current.latency_cycles) /
                               static_cast<double>(current.latency_cycles);
          accept = delta <= 0.0 || rng.unit() < std::exp(-delta / tau);
        }
      } else if (!current.feasible) {
        accept = next.violation_score <= current.violation_score;
      }
      if (accept) current = std::move(next);
      if (current.feasible && (!best || current.latency_cycles < best->latency_cycles)) best = current;
      result.trace.push_back(
          {iteration, tau, current.latency_cycles, best ? best->latency_cycles : -1, current.feasible});
    }
  }
  if (!best) {
    std::string why = "no feasible design found";
    if (!current.violations.empty()) {
      why += "; last violation: " + current.violations.front().constraint + " (" + current.violations.front().subject +
             "): " + current.violations.front().detail;
    }
    throw OptimizerError(why);
  }
  result.best = std::move(*best);
  log_info("anneal seed " + std::to_string(params.seed) + ": " + std::to_string(result.best.latency_cycles) +
           " cycles after " + std::to_string(iteration) + " iterations");
  return result;
}

AnnealResult anneal_multistart(const ModelGraph& model, const DeviceProfile& dev, const AnnealingParams& params,
                               const ResourceModel& rm) {
  params.validate();
  const auto chains = static_cast<std::size_t>(params.chains);
  if (chains == 1) return anneal(model, dev, params, rm);

  std::vector<std::optional<AnnealResult>> results(chains);
  std::vector<std::string> errors(chains);
  std::vector<std::thread> workers;
  for (std::size_t i = 0; i < chains; ++i) {
    workers.emplace_back([&, i] {
      AnnealingParams p = params;
      p.chains = 1;
      p.seed = params.seed + i * 0x9E3779B97F4A7C15ULL;
      try {
        results[i] = anneal(model, dev, p, rm);
      } catch (const std::exception& e) {
        errors[i] = e.what();
      }
    });
  }
  for (auto& w : workers) w.join();

  std::optional<std::size_t> winner;
  for (std::size_t i = 0; i < chains; ++i) {
    if (!results[i]) continue;
    if (!winner || results[i]->best.latency_cycles < results[*winner]->best.latency_cycles) winner = i;
  }
  if (!winner) throw OptimizerError(errors.front());
  return std::move(*results[*winner]);
}

std::vector<ParetoPoint> non_dominated(std::vector<ParetoPoint> points) {
  std::stable_sort(points.begin(), points.end(), [](const ParetoPoint& a, const ParetoPoint& b) {
    if (a.dsp != b.dsp) return a.dsp < b.dsp;
    return a.latency_cycles < b.latency_cycles;
  });
  std::vector<ParetoPoint> out;
  for (auto& p : points) {
    if (!out.empty() && p.latency_cycles >= out.back().latency_cycles) continue;
    out.push_back(std::move(p));
  }
  return out;
}

std::vector<ParetoPoint> pareto_sweep(const ModelGraph& model, const DeviceProfile& dev, const AnnealingParams& params,
                                      const std::vector<std::int64_t>& budgets, const ResourceModel& rm) {
  if (!std::is_sorted(budgets.begin(), budgets.end())) throw OptimizerError("budgets must be ascending");
  for (auto b : budgets) {
    if (b < 1) throw OptimizerError("DSP budgets must be positive");
  }
  std::vector<std::optional<AnnealResult>> results(budgets.size());
  std::vector<std::thread> workers;
  for (std::size_t i = 0; i < budgets.size(); ++i) {
    workers.emplace_back([&, i] {
      DeviceProfile capped = dev;
      capped.dsp_total = std::min(budgets[i], dev.dsp_total);
      AnnealingParams p = params;
      p.seed = params.seed + i;
      try {
        results[i] = anneal_multistart(model, capped, p, rm);
      } catch (const OptimizerError& e) {
        log_info("budget " + std::to_string(budgets[i]) + ": " + e.what());
      }
    });
  }
  for (auto& w : workers) w.join();

  std::vector<ParetoPoint> points;
  std::optional<ParetoPoint> carried;
  for (std::size_t i = 0; i < budgets.size(); ++i) {
    if (results[i]) {
      const CandidateState& s = results[i]->best;
      ParetoPoint p{budgets[i], s.resources.dsp, s.resources.bram, s.latency_cycles,
                    cycles_to_ms(s.latency_cycles, dev), s.graph};
      if (!carried || p.latency_cycles < carried->latency_cycles) carried = p;
    }
    if (carried) {
      ParetoPoint p = *carried;
      p.budget = budgets[i];
      points.push_back(std::move(p));
    }
  }
  return non_dominated(std::move(points));
}

}  // namespace flow3d
