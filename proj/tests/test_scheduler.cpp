#include <gtest/gtest.h>

#include "flow3d/model_zoo.hpp"
#include "flow3d/perf_model.hpp"
#include "flow3d/scheduler.hpp"
#include "support.hpp"

using namespace flow3d;
using testing_support::random_capabilities;
using testing_support::random_model;

namespace {

std::vector<const ScheduleEntry*> entries_of(const Schedule& s, const std::string& layer) {
  std::vector<const ScheduleEntry*> out;
  for (const auto& e : s.entries)
    if (e.layer_id == layer) out.push_back(&e);
  return out;
}

ModelGraph single_conv(TensorShape in, std::int64_t filters, Triple k = {1, 1, 1}) {
  ModelBuilder b("one", in);
  b.conv("c", "", filters, k);
  return b.build();
}

}  // namespace

TEST(BuildSchedule, ChannelTilesFollowMinRule) {
  ModelGraph m = single_conv({4, 4, 2, 96}, 8);
  HardwareGraph g = initial_mapping(m);
  g.nodes[0].shape_in_max.c = 64;
  Schedule s = build_schedule(m, g, ExecutionMode::RuntimeConfigurable);
  ASSERT_EQ(s.entries.size(), 2u);
  EXPECT_EQ(s.entries[0].config.shape_in.c, 64);
  EXPECT_EQ(s.entries[1].config.shape_in.c, 32);
  EXPECT_TRUE(s.entries[0].config.psum);
  EXPECT_FALSE(s.entries[1].config.psum);
  EXPECT_EQ(s.entries[1].tile.origin[kAxisC], 64);
}

TEST(BuildSchedule, LayerEqualToNodeIsOneInvocation) {
  ModelGraph m = single_conv({6, 6, 4, 8}, 16, {3, 3, 3});
  HardwareGraph g = initial_mapping(m);
  Schedule s = build_schedule(m, g, ExecutionMode::RuntimeConfigurable);
  ASSERT_EQ(s.entries.size(), 1u);
  const auto& c = s.entries[0].config;
  const auto& l = m.layer("c");
  EXPECT_EQ(c.shape_in, l.input());
  EXPECT_EQ(c.shape_out, l.shape_out);
  EXPECT_EQ(c.filters, 16);
  EXPECT_EQ(c.kernel, l.kernel);
  // padded execution of a full tile is the same invocation
  EXPECT_EQ(build_schedule(m, g, ExecutionMode::PaddedBaseline).entries[0].config, c);
}

TEST(BuildSchedule, RuntimeFoldsDivideBothTileAndStreams) {
  ModelGraph m = single_conv({2, 2, 1, 44}, 8);
  HardwareGraph g = initial_mapping(m);
  g.nodes[0].shape_in_max.c = 32;
  g.nodes[0].coarse_in = 8;
  Schedule s = build_schedule(m, g, ExecutionMode::RuntimeConfigurable);
  ASSERT_EQ(s.entries.size(), 2u);
  EXPECT_EQ(s.entries[0].config.shape_in.c, 32);
  EXPECT_EQ(s.entries[0].config.coarse_in, 8);
  EXPECT_EQ(s.entries[1].config.shape_in.c, 12);
  EXPECT_EQ(s.entries[1].config.coarse_in, 4);
}

TEST(BuildSchedule, RuntimeFoldsMatchDivisorIntersection) {
  Rng rng(8);
  for (int i = 0; i < 200; ++i) {
    ModelGraph m = random_model(rng, "r" + std::to_string(i));
    HardwareGraph g = random_capabilities(m, initial_mapping(m), rng);
    Schedule s = build_schedule(m, g, ExecutionMode::RuntimeConfigurable);
    for (const auto& e : s.entries) {
      const auto& n = g.node(e.node_id);
      EXPECT_EQ(e.config.coarse_in, oracle::common_divisor(e.config.shape_in.c, n.coarse_in));
      if (e.config.kind == LayerKind::Conv3D) {
        EXPECT_EQ(e.config.fine, oracle::common_divisor(e.config.kernel.volume(), n.fine));
      }
      EXPECT_FALSE(exceeds_capability(e.config, n).has_value()) << *exceeds_capability(e.config, n);
    }
  }
}

TEST(BuildSchedule, KernelBeyondNodeNamesLayerAndNode) {
  ModelGraph m = single_conv({6, 6, 4, 8}, 16, {3, 3, 3});
  HardwareGraph g = initial_mapping(m);
  g.nodes[0].kernel_max = {1, 1, 1};
  try {
    build_schedule(m, g, ExecutionMode::RuntimeConfigurable);
    FAIL();
  } catch (const ScheduleError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("'c'"), std::string::npos) << msg;
    EXPECT_NE(msg.find(g.nodes[0].id), std::string::npos) << msg;
  }
}

TEST(BuildSchedule, UnsupportedPoolTypeRejected) {
  ModelBuilder b("p", {4, 4, 4, 2});
  b.pool("p", "", OpType::Avg, {2, 2, 2}, {2, 2, 2});
  ModelGraph m = b.build();
  HardwareGraph g = initial_mapping(m);
  g.nodes[0].supports_types = {OpType::Max};
  EXPECT_THROW(build_schedule(m, g, ExecutionMode::RuntimeConfigurable), ScheduleError);
}

TEST(BuildSchedule, Deterministic) {
  Rng rng(2);
  for (int i = 0; i < 50; ++i) {
    ModelGraph m = random_model(rng, "d" + std::to_string(i));
    HardwareGraph g = random_capabilities(m, initial_mapping(m), rng);
    EXPECT_EQ(schedule_to_json(build_schedule(m, g, ExecutionMode::RuntimeConfigurable)).dump(),
              schedule_to_json(build_schedule(m, g, ExecutionMode::RuntimeConfigurable)).dump());
  }
}

TEST(Coverage, RandomSchedulesPass) {
  Rng rng(11);
  for (int i = 0; i < 500; ++i) {
    ModelGraph m = random_model(rng, "c" + std::to_string(i));
    HardwareGraph g = random_capabilities(m, initial_mapping(m), rng);
    if (rng.below(2)) g = fuse_activations(g, m);
    for (auto mode : {ExecutionMode::RuntimeConfigurable, ExecutionMode::PaddedBaseline}) {
      CoverageReport r = coverage_oracle(build_schedule(m, g, mode), m);
      ASSERT_TRUE(r.pass) << i << " " << (r.gaps.empty() ? r.duplicates.front() : r.gaps.front());
      EXPECT_TRUE(r.skipped.empty());
    }
  }
}

TEST(Coverage, ZooSchedulesPass) {
  for (const auto& name : {"toy", "multi_shape"}) {
    ModelGraph m = zoo::by_name(name);
    HardwareGraph g = fuse_activations(initial_mapping(m), m);
    for (auto& n : g.nodes) n.shape_in_max.w = std::max<std::int64_t>(n.kernel_max.w, n.shape_in_max.w / 2);
    EXPECT_TRUE(coverage_oracle(build_schedule(m, g, ExecutionMode::RuntimeConfigurable), m).pass) << name;
  }
}

TEST(Coverage, DuplicateTileReported) {
  ModelGraph m = single_conv({4, 4, 2, 96}, 8);
  HardwareGraph g = initial_mapping(m);
  g.nodes[0].shape_in_max.c = 64;
  Schedule s = build_schedule(m, g, ExecutionMode::RuntimeConfigurable);
  s.entries.push_back(s.entries.front());
  CoverageReport r = coverage_oracle(s, m);
  EXPECT_FALSE(r.pass);
  ASSERT_FALSE(r.duplicates.empty());
  EXPECT_EQ(r.duplicates.front(), "c[h=0,w=0,d=0,c=0,f=0]");
}

TEST(Coverage, MissingChannelTileReported) {
  ModelGraph m = single_conv({4, 4, 2, 96}, 8);
  HardwareGraph g = initial_mapping(m);
  g.nodes[0].shape_in_max.c = 64;
  Schedule s = build_schedule(m, g, ExecutionMode::RuntimeConfigurable);
  s.entries.pop_back();
  CoverageReport r = coverage_oracle(s, m);
  EXPECT_FALSE(r.pass);
  ASSERT_FALSE(r.gaps.empty());
  EXPECT_EQ(r.gaps.front(), "c[h=0,w=0,d=0,c=64,f=0]");
  EXPECT_TRUE(r.duplicates.empty());
}

TEST(LatencyOracle, SinglePool) {
  ModelBuilder b("p", {4, 4, 4, 6});
  b.pool("p", "", OpType::Max, {2, 2, 2}, {2, 2, 2});
  ModelGraph m = b.build();
  HardwareGraph g = initial_mapping(m);
  g.nodes[0].coarse_in = g.nodes[0].coarse_out = 3;
  Schedule s = build_schedule(m, g, ExecutionMode::RuntimeConfigurable);
  DeviceProfile dev = testing_support::unlimited(testing_support::device("zcu102"));
  EXPECT_EQ(schedule_latency_oracle(s, dev), 4 * 4 * 4 * 6 / 3);
}

TEST(LatencyOracle, MatchesAnalyticModel) {
  Rng rng(1000);
  const DeviceProfile zcu = testing_support::device("zcu102");
  DeviceProfile narrow = zcu;
  narrow.bw_in_words_per_cycle = Rational(3, 2);
  narrow.bw_out_words_per_cycle = Rational(1);
  const DeviceProfile devs[] = {zcu, testing_support::unlimited(zcu), narrow};
  for (int i = 0; i < 1000; ++i) {
    ModelGraph m = random_model(rng, "o" + std::to_string(i));
    HardwareGraph g = random_capabilities(m, initial_mapping(m), rng);
    if (rng.below(2)) g = fuse_activations(g, m);
    const auto mode = rng.below(4) == 0 ? ExecutionMode::PaddedBaseline : ExecutionMode::RuntimeConfigurable;
    Schedule s = build_schedule(m, g, mode);
    const DeviceProfile& dev = devs[i % 3];
    ASSERT_EQ(schedule_latency_oracle(s, dev), schedule_latency(s, dev)) << i;
    ASSERT_EQ(schedule_latency(compact_schedule(m, g, mode), dev), schedule_latency(s, dev)) << i;
  }
}

TEST(LatencyOracle, PaddedOverRuntimeIsVolumeRatio) {
  ModelBuilder b("a", {8, 8, 4, 16});
  b.activation("a", "", OpType::Relu);
  ModelGraph m = b.build();
  HardwareGraph g = initial_mapping(m);
  g.nodes[0].shape_in_max.d = 8;  // node twice the layer
  g.nodes[0].shape_out_max.d = 8;
  g.nodes[0].coarse_in = g.nodes[0].coarse_out = 4;
  DeviceProfile dev = testing_support::unlimited(testing_support::device("zcu102"));
  const std::int64_t run = schedule_latency(build_schedule(m, g, ExecutionMode::RuntimeConfigurable), dev);
  const std::int64_t pad = schedule_latency(build_schedule(m, g, ExecutionMode::PaddedBaseline), dev);
  EXPECT_EQ(run, 8 * 8 * 4 * 16 / 4);
  EXPECT_EQ(pad, 2 * run);
  EXPECT_EQ(schedule_latency_oracle(build_schedule(m, g, ExecutionMode::PaddedBaseline), dev), pad);
}

// With unit folds every runtime tile does a subset of the padded tile's work.
TEST(LatencyOracle, PaddedNeverFasterWithUnitFolds) {
  Rng rng(9);
  const DeviceProfile dev = testing_support::device("zcu102");
  for (int i = 0; i < 300; ++i) {
    ModelGraph m = random_model(rng, "p" + std::to_string(i));
    HardwareGraph g = random_capabilities(m, initial_mapping(m), rng);
    for (auto& n : g.nodes) n.coarse_in = n.coarse_out = n.fine = 1;
    Schedule run = build_schedule(m, g, ExecutionMode::RuntimeConfigurable);
    Schedule pad = build_schedule(m, g, ExecutionMode::PaddedBaseline);
    ASSERT_EQ(run.entries.size(), pad.entries.size());
    for (std::size_t k = 0; k < run.entries.size(); ++k) {
      EXPECT_LE(invocation_latency(run.entries[k].config, dev).total_cycles,
                invocation_latency(pad.entries[k].config, dev).total_cycles)
          << i << " " << run.entries[k].layer_id;
    }
  }
}

TEST(WorkConservation, TilesSumToLayerMacs) {
  Rng rng(31);
  int checked = 0;
  for (int i = 0; i < 400; ++i) {
    ModelGraph m = random_model(rng, "w" + std::to_string(i));
    HardwareGraph g = random_capabilities(m, initial_mapping(m), rng);
    Schedule s = build_schedule(m, g, ExecutionMode::RuntimeConfigurable);
    for (const auto& l : m.layers()) {
      if (l.kind != LayerKind::Conv3D) continue;
      std::int64_t lane_cycles = 0;
      for (const auto* e : entries_of(s, l.id)) {
        const auto& c = e->config;
        const std::int64_t lanes = c.coarse_in * c.coarse_out * c.fine;
        if (l.groups == 1) {
          // one tile: cycles x lanes is exactly its MACs
          ASSERT_EQ(compute_latency(c) * lanes,
                    c.shape_out.h * c.shape_out.w * c.shape_out.d * c.shape_in.c * c.filters * c.kernel.volume());
        }
        lane_cycles += compute_latency(c) * lanes;
      }
      if (l.groups == 1) {
        EXPECT_EQ(lane_cycles, oracle::conv_macs(l)) << l.id;
        ++checked;
      } else {
        EXPECT_GE(lane_cycles, oracle::conv_macs(l)) << l.id;
      }
    }
  }
  EXPECT_GT(checked, 50);
}

TEST(ScheduleJson, RoundTrip) {
  Rng rng(14);
  DeviceProfile dev = testing_support::device("zcu102");
  for (int i = 0; i < 30; ++i) {
    ModelGraph m = random_model(rng, "j" + std::to_string(i));
    HardwareGraph g = random_capabilities(m, initial_mapping(m), rng);
    Schedule s = build_schedule(m, g, i % 2 ? ExecutionMode::PaddedBaseline : ExecutionMode::RuntimeConfigurable);
    Schedule back = schedule_from_json(nlohmann::json::parse(schedule_to_json(s, &dev).dump()));
    EXPECT_EQ(back.mode, s.mode);
    ASSERT_EQ(back.entries.size(), s.entries.size());
    for (std::size_t k = 0; k < s.entries.size(); ++k) {
      EXPECT_EQ(back.entries[k].config, s.entries[k].config);
      EXPECT_EQ(back.entries[k].tile, s.entries[k].tile);
      EXPECT_EQ(back.entries[k].layer_id, s.entries[k].layer_id);
      EXPECT_EQ(back.entries[k].node_id, s.entries[k].node_id);
    }
  }
}

TEST(BuildSchedule, C3dCompactMatchesFull) {
  ModelGraph m = zoo::c3d();
  HardwareGraph g = fuse_activations(initial_mapping(m), m);
  for (auto& n : g.nodes) {
    n.shape_in_max.w = std::max<std::int64_t>(n.kernel_max.w, 28);
    n.shape_in_max.d = std::max<std::int64_t>(n.kernel_max.d, 4);
    n.coarse_in = std::gcd(n.shape_in_max.c, std::int64_t{4});
    n.coarse_out = has_filters(n.kind) ? std::gcd(n.filters_max, std::int64_t{8}) : n.coarse_in;
    refresh_output_bound(n, m, g.layers_of(n.id));
  }
  DeviceProfile dev = testing_support::device("zcu102");
  for (auto mode : {ExecutionMode::RuntimeConfigurable, ExecutionMode::PaddedBaseline}) {
    EXPECT_EQ(schedule_latency(compact_schedule(m, g, mode), dev), schedule_latency(build_schedule(m, g, mode), dev));
  }
}
