#include <gtest/gtest.h>

#include <set>

#include "flow3d/model_zoo.hpp"
#include "flow3d/optimizer.hpp"
#include "flow3d/perf_model.hpp"
#include "flow3d/scheduler.hpp"
#include "support.hpp"

using namespace flow3d;

namespace {

AnnealingParams quick(std::uint64_t seed = 1) {
  AnnealingParams p;
  p.seed = seed;
  p.tau_start = 10;
  p.tau_min = 1e-2;
  p.cooling = 0.95;
  p.warm_start_samples = 8;
  return p;
}

bool has(const std::vector<Violation>& v, const std::string& constraint, const std::string& subject = "") {
  for (const auto& x : v)
    if (x.constraint == constraint && (subject.empty() || x.subject == subject)) return true;
  return false;
}

std::string conv_node(const HardwareGraph& g) {
  for (const auto& n : g.nodes)
    if (n.kind == LayerKind::Conv3D) return n.id;
  return {};
}

}  // namespace

TEST(Params, Validation) {
  AnnealingParams p;
  EXPECT_NO_THROW(p.validate());
  p.cooling = 1.0;
  EXPECT_THROW(p.validate(), OptimizerError);
  p = {};
  p.tau_min = p.tau_start;
  EXPECT_THROW(p.validate(), OptimizerError);
  p = {};
  p.combine_count = 1;
  EXPECT_THROW(p.validate(), OptimizerError);
  EXPECT_THROW(params_from_json(nlohmann::json{{"tau_min", 0.0}}), OptimizerError);
}

TEST(Params, JsonRoundTripAndDefaults) {
  AnnealingParams p = params_from_json(nlohmann::json::object());
  EXPECT_DOUBLE_EQ(p.tau_start, 10.0);
  EXPECT_DOUBLE_EQ(p.tau_min, 1e-6);
  EXPECT_DOUBLE_EQ(p.cooling, 0.99);
  EXPECT_EQ(p.warm_start_samples, 32);
  p.seed = 99;
  p.fusion = false;
  AnnealingParams back = params_from_json(params_to_json(p));
  EXPECT_EQ(back.seed, 99u);
  EXPECT_FALSE(back.fusion);
}

TEST(Rng, PortableStream) {
  Rng a(5), b(5);
  for (int i = 0; i < 100; ++i) {
    const auto x = a.between(-3, 9);
    EXPECT_EQ(x, b.between(-3, 9));
    EXPECT_GE(x, -3);
    EXPECT_LE(x, 9);
    const double u = a.unit();
    EXPECT_EQ(u, b.unit());
    EXPECT_GE(u, 0.0);
    EXPECT_LT(u, 1.0);
  }
  EXPECT_THROW(a.below(0), std::invalid_argument);
}

TEST(Constraints, TrivialGraphFitsZcu102) {
  ModelGraph m = zoo::toy();
  DeviceProfile dev = testing_support::device("zcu102");
  CandidateState s = evaluate(m, initial_mapping(m), ExecutionMode::RuntimeConfigurable, dev);
  EXPECT_TRUE(s.feasible);
  EXPECT_TRUE(check_constraints(s, m, dev).empty());
  EXPECT_GT(s.latency_cycles, 0);
}

TEST(Constraints, DspOverBudgetReportsAmounts) {
  ModelGraph m = zoo::c3d();
  DeviceProfile dev = testing_support::device("zcu102");
  HardwareGraph g = initial_mapping(m);
  NodeCapability& c = *g.find_node(conv_node(g));
  c.coarse_out = 128;
  c.fine = 27;  // 3456 DSP
  CandidateState s = evaluate(m, g, ExecutionMode::RuntimeConfigurable, dev);
  EXPECT_FALSE(s.feasible);
  ASSERT_TRUE(has(s.violations, "resource", "dsp"));
  for (const auto& v : s.violations) {
    if (v.subject != "dsp") continue;
    EXPECT_NE(v.detail.find("> 2520"), std::string::npos) << v.detail;
    EXPECT_GT(v.excess, 0.0);
  }
}

TEST(Constraints, NonDividingFoldFlagged) {
  ModelBuilder b("d", {4, 4, 2, 8});
  b.conv("c", "", 8, {1, 1, 1});
  ModelGraph m = b.build();
  HardwareGraph g = initial_mapping(m);
  g.nodes[0].coarse_in = 3;
  DeviceProfile dev = testing_support::device("zcu102");
  CandidateState s = evaluate(m, g, ExecutionMode::RuntimeConfigurable, dev);
  EXPECT_FALSE(s.feasible);
  EXPECT_TRUE(has(s.violations, "divisibility", g.nodes[0].id));
}

TEST(Constraints, UnschedulableGraphIsInfeasible) {
  ModelGraph m = zoo::toy();
  HardwareGraph g = initial_mapping(m);
  g.find_node(conv_node(g))->kernel_max = {1, 1, 1};
  DeviceProfile dev = testing_support::device("zcu102");
  CandidateState s = evaluate(m, g, ExecutionMode::RuntimeConfigurable, dev);
  EXPECT_FALSE(s.feasible);
  EXPECT_EQ(s.latency_cycles, -1);
  EXPECT_TRUE(has(check_constraints(s, m, dev), "capability"));
}

TEST(Transformation, FineFoldDrawsFromKernelFactors) {
  ModelBuilder b("k", {6, 6, 6, 4});
  b.conv("c", "", 4, {3, 3, 3});
  ModelGraph m = b.build();
  DeviceProfile dev = testing_support::device("zcu102");
  AnnealingParams p = quick();
  p.combine_separate = false;
  CandidateState s = evaluate(m, initial_mapping(m), ExecutionMode::RuntimeConfigurable, dev);
  Rng rng(3);
  std::set<std::int64_t> seen;
  for (int i = 0; i < 2000; ++i) {
    s = random_transformation(s, m, dev, p, rng);
    seen.insert(s.graph.nodes[0].fine);
  }
  EXPECT_EQ(seen, (std::set<std::int64_t>{1, 3, 9, 27}));
}

TEST(Transformation, ReshapeKeepsFullHeight) {
  ModelGraph m = zoo::multi_shape();
  DeviceProfile dev = testing_support::device("zcu102");
  AnnealingParams p = quick();
  CandidateState s = evaluate(m, fuse_activations(initial_mapping(m), m), ExecutionMode::RuntimeConfigurable, dev);
  Rng rng(4);
  auto max_h = [&](const NodeCapability& n) {
    std::int64_t h = 0;
    for (const auto& l : s.graph.layers_of(n.id)) h = std::max(h, m.layer(l).input().h);
    return h;
  };
  for (int i = 0; i < 3000; ++i) {
    s = random_transformation(s, m, dev, p, rng);
    ASSERT_TRUE(validate_mapping(s.graph, m).empty());
    for (const auto& n : s.graph.nodes) ASSERT_GE(n.shape_in_max.h, max_h(n)) << n.id;
    if (s.feasible) {
      for (const auto& n : s.graph.nodes) {
        ASSERT_EQ(n.shape_in_max.c % n.coarse_in, 0);
        if (has_filters(n.kind)) ASSERT_EQ(n.filters_max % n.coarse_out, 0);
        ASSERT_EQ((n.kind == LayerKind::Conv3D ? n.kernel_max.volume() : 1) % n.fine, 0);
      }
    }
  }
  // Without structural moves every node has been reshaped back to the tallest layer.
  p.combine_separate = false;
  for (int i = 0; i < 3000; ++i) s = random_transformation(s, m, dev, p, rng);
  int exact = 0;
  for (const auto& n : s.graph.nodes) exact += n.shape_in_max.h == max_h(n);
  EXPECT_EQ(exact, static_cast<int>(s.graph.nodes.size()));
}

TEST(Transformation, NothingEligibleReturnsSameGraph) {
  ModelBuilder b("u", {1, 1, 1, 1});
  b.activation("a", "", OpType::Relu);
  ModelGraph m = b.build();
  DeviceProfile dev = testing_support::device("zcu102");
  CandidateState s = evaluate(m, initial_mapping(m), ExecutionMode::RuntimeConfigurable, dev);
  Rng rng(1);
  CandidateState t = random_transformation(s, m, dev, quick(), rng);
  EXPECT_EQ(t.graph, s.graph);
  EXPECT_EQ(t.latency_cycles, s.latency_cycles);
}

TEST(Anneal, ToyBestNeverWorseThanWarmStart) {
  ModelGraph m = zoo::toy();
  DeviceProfile dev = testing_support::device("zcu102");
  AnnealResult r = anneal(m, dev, quick(7));
  ASSERT_TRUE(r.warm.feasible);
  EXPECT_LE(r.best.latency_cycles, r.warm.latency_cycles);
  EXPECT_TRUE(r.best.feasible);
  EXPECT_TRUE(check_constraints(r.best, m, dev).empty());
  std::int64_t prev = INT64_MAX;
  for (const auto& t : r.trace) {
    ASSERT_GE(t.best_cycles, 0);
    ASSERT_LE(t.best_cycles, prev);
    prev = t.best_cycles;
  }
  EXPECT_EQ(r.trace.back().best_cycles, r.best.latency_cycles);
}

TEST(Anneal, IterationCountFollowsSchedule) {
  AnnealingParams p = quick();
  ModelGraph m = zoo::toy();
  AnnealResult r = anneal(m, testing_support::device("zcu102"), p);
  std::int64_t temps = 0;
  for (double t = p.tau_start; t > p.tau_min; t *= p.cooling) ++temps;
  EXPECT_EQ(static_cast<std::int64_t>(r.trace.size()), temps * p.iterations_per_temperature);
  EXPECT_DOUBLE_EQ(r.trace.front().tau, p.tau_start);
}

TEST(Anneal, SameSeedSameTrace) {
  ModelGraph m = zoo::toy();
  DeviceProfile dev = testing_support::device("zcu102");
  AnnealResult a = anneal(m, dev, quick(3));
  AnnealResult b = anneal(m, dev, quick(3));
  ASSERT_EQ(a.trace.size(), b.trace.size());
  for (std::size_t i = 0; i < a.trace.size(); ++i) {
    ASSERT_EQ(a.trace[i].current_cycles, b.trace[i].current_cycles);
    ASSERT_EQ(a.trace[i].feasible, b.trace[i].feasible);
  }
  EXPECT_EQ(a.best.graph, b.best.graph);
}

TEST(Anneal, MultistartIsDeterministicAndNoWorse) {
  ModelGraph m = zoo::toy();
  DeviceProfile dev = testing_support::device("zcu102");
  AnnealingParams p = quick(2);
  p.chains = 3;
  AnnealResult a = anneal_multistart(m, dev, p);
  AnnealResult b = anneal_multistart(m, dev, p);
  EXPECT_EQ(a.best.graph, b.best.graph);
  p.chains = 1;
  EXPECT_LE(a.best.latency_cycles, anneal_multistart(m, dev, p).best.latency_cycles);
}

TEST(Anneal, ImpossibleBudgetFailsWithReason) {
  ModelGraph m = zoo::toy();
  DeviceProfile dev = testing_support::device("zcu102");
  dev.bram_total = 1;
  try {
    anneal(m, dev, quick());
    FAIL();
  } catch (const OptimizerError& e) {
    EXPECT_NE(std::string(e.what()).find("bram"), std::string::npos) << e.what();
  }
}

TEST(Pareto, NonDominatedFilter) {
  std::vector<ParetoPoint> pts(5);
  const std::int64_t dsp[] = {10, 20, 20, 30, 40};
  const std::int64_t lat[] = {100, 80, 90, 85, 50};
  for (int i = 0; i < 5; ++i) {
    pts[i].dsp = dsp[i];
    pts[i].latency_cycles = lat[i];
  }
  auto out = non_dominated(pts);
  ASSERT_EQ(out.size(), 3u);
  EXPECT_EQ(out[0].dsp, 10);
  EXPECT_EQ(out[1].latency_cycles, 80);
  EXPECT_EQ(out[2].dsp, 40);
}

TEST(Pareto, SingleBudgetIsSingleton) {
  ModelGraph m = zoo::toy();
  auto pts = pareto_sweep(m, testing_support::device("zcu102"), quick(), {64});
  ASSERT_EQ(pts.size(), 1u);
  EXPECT_LE(pts[0].dsp, 64);
}

TEST(Pareto, SweepIsNonDominatedAndRespectsCaps) {
  ModelGraph m = zoo::toy();
  auto pts = pareto_sweep(m, testing_support::device("zcu102"), quick(5), {8, 16, 32, 64, 128});
  ASSERT_FALSE(pts.empty());
  for (std::size_t i = 0; i < pts.size(); ++i) {
    EXPECT_LE(pts[i].dsp, pts[i].budget);
    for (std::size_t j = 0; j < pts.size(); ++j) {
      if (i == j) continue;
      const bool dominates = pts[j].dsp <= pts[i].dsp && pts[j].latency_cycles <= pts[i].latency_cycles;
      EXPECT_FALSE(dominates) << i << " dominated by " << j;
    }
    if (i > 0) {
      EXPECT_GT(pts[i].budget, pts[i - 1].budget);
      EXPECT_LT(pts[i].latency_cycles, pts[i - 1].latency_cycles);
    }
  }
  EXPECT_THROW(pareto_sweep(m, testing_support::device("zcu102"), quick(), {64, 8}), OptimizerError);
}
