#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "flow3d/device_profile.hpp"
#include "flow3d/hardware_graph.hpp"
#include "flow3d/resource_model.hpp"
#include "flow3d/schedule.hpp"
#include "json.hpp"

namespace flow3d {

class OptimizerError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct AnnealingParams {
  double tau_start = 10.0;
  double tau_min = 1e-6;
  double cooling = 0.99;
  std::uint64_t seed = 1;
  std::int64_t iterations_per_temperature = 10;
  /// Random samples tried by the warm start.
  std::int64_t warm_start_samples = 32;
  /// Layers detached per separate move (L_e).
  std::int64_t separate_layers = 1;
  /// Nodes merged per combine move (N_c).
  std::int64_t combine_count = 2;
  /// Independent chains; the best result wins.
  std::int64_t chains = 1;
  bool combine_separate = true;
  bool fusion = true;
  bool runtime_reconfig = true;

  /// Throws OptimizerError when a field is out of range.
  void validate() const;
  [[nodiscard]] ExecutionMode mode() const {
    return runtime_reconfig ? ExecutionMode::RuntimeConfigurable : ExecutionMode::PaddedBaseline;
  }
};

nlohmann::json params_to_json(const AnnealingParams& p);
/// Missing fields keep their defaults.
AnnealingParams params_from_json(const nlohmann::json& j);

/// Portable across standard libraries: only the engine comes from <random>.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  /// Uniform in [0, n).
  std::uint64_t below(std::uint64_t n);
  /// Uniform in [lo, hi].
  std::int64_t between(std::int64_t lo, std::int64_t hi);
  /// Uniform in [0, 1).
  double unit();
  template <typename T>
  const T& pick(const std::vector<T>& v) {
    return v[below(v.size())];
  }

 private:
  std::mt19937_64 engine_;
};

struct Violation {
  std::string constraint;  // bandwidth, resource, divisibility, capability
  std::string subject;
  std::string detail;
  /// Relative amount by which the constraint is missed.
  double excess = 1.0;
};

struct CandidateState {
  HardwareGraph graph;
  ExecutionMode mode = ExecutionMode::RuntimeConfigurable;
  CompactSchedule schedule;
  /// -1 when no schedule could be built.
  std::int64_t latency_cycles = -1;
  ResourceVector resources;
  bool feasible = false;
  std::vector<Violation> violations;
  double violation_score = 0.0;
};

/// Schedules, estimates and constraint-checks one hardware graph.
CandidateState evaluate(const ModelGraph& model, HardwareGraph graph, ExecutionMode mode, const DeviceProfile& dev,
                        const ResourceModel& rm = ResourceModel::defaults());

/// Bandwidth floor, resource budgets, fold divisibility and Γ ≤ Γ_max.
std::vector<Violation> check_constraints(const CandidateState& state, const ModelGraph& model,
                                         const DeviceProfile& dev);

enum class Transform { Reshape, CoarseFold, FineFold, Combine, Separate };

/// Applies one enabled transform to one eligible node. Returns the state
/// unchanged (re-evaluated) when nothing is eligible.
CandidateState random_transformation(const CandidateState& state, const ModelGraph& model, const DeviceProfile& dev,
                                     const AnnealingParams& params, Rng& rng,
                                     const ResourceModel& rm = ResourceModel::defaults());

/// Initial mapping (fused when enabled) plus randomized reshapes and folds;
/// keeps the fastest feasible sample, or the least violating one.
CandidateState warm_start(const ModelGraph& model, const DeviceProfile& dev, const AnnealingParams& params, Rng& rng,
                          const ResourceModel& rm = ResourceModel::defaults());

struct TracePoint {
  std::int64_t iteration = 0;
  double tau = 0.0;
  std::int64_t current_cycles = -1;
  std::int64_t best_cycles = -1;
  bool feasible = false;
};

struct AnnealResult {
  CandidateState best;
  CandidateState warm;
  std::vector<TracePoint> trace;
};

/// One annealing chain. Throws OptimizerError if no feasible state is seen.
AnnealResult anneal(const ModelGraph& model, const DeviceProfile& dev, const AnnealingParams& params,
                    const ResourceModel& rm = ResourceModel::defaults());

/// params.chains concurrent chains with derived seeds; the fastest wins, ties
/// going to the lowest chain index.
AnnealResult anneal_multistart(const ModelGraph& model, const DeviceProfile& dev, const AnnealingParams& params,
                               const ResourceModel& rm = ResourceModel::defaults());

struct ParetoPoint {
  std::int64_t budget = 0;
  std::int64_t dsp = 0;
  std::int64_t bram = 0;
  std::int64_t latency_cycles = 0;
  double latency_ms = 0.0;
  HardwareGraph graph;
};

/// Anneals under each DSP cap (ascending) and keeps the non-dominated
/// (dsp, latency) points. A design found under a smaller cap stays valid
/// under larger ones and is carried forward when it is faster.
std::vector<ParetoPoint> pareto_sweep(const ModelGraph& model, const DeviceProfile& dev, const AnnealingParams& params,
                                      const std::vector<std::int64_t>& budgets,
                                      const ResourceModel& rm = ResourceModel::defaults());

/// Points not dominated in (dsp, latency), sorted by dsp.
std::vector<ParetoPoint> non_dominated(std::vector<ParetoPoint> points);

}  // namespace flow3d
