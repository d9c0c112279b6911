#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "flow3d/model_zoo.hpp"
#include "flow3d/perf_model.hpp"
#include "flow3d/resource_model.hpp"
#include "support.hpp"

using namespace flow3d;

namespace {

NodeCapability conv_cap(TensorShape in, std::int64_t filters, Triple k, std::int64_t ci, std::int64_t co,
                        std::int64_t f) {
  NodeCapability n;
  n.id = "conv";
  n.kind = LayerKind::Conv3D;
  n.shape_in_max = in;
  n.filters_max = filters;
  n.kernel_max = k;
  n.coarse_in = ci;
  n.coarse_out = co;
  n.fine = f;
  return n;
}

}  // namespace

TEST(BramBlocks, HandEvaluated) {
  EXPECT_EQ(bram_blocks(512, 2), 1);   // 1 * ceil(32/36)
  EXPECT_EQ(bram_blocks(1024, 3), 4);  // 2 * ceil(48/36)
  for (std::int64_t k : {0, 1, 7, 100}) EXPECT_EQ(bram_blocks(0, k), 0);
  EXPECT_EQ(bram_blocks(513, 0), 0);
}

TEST(BramBlocks, MonotoneInBothArguments) {
  for (std::int64_t d = 0; d < 1600; d += 7) {
    for (std::int64_t w = 0; w < 60; ++w) {
      EXPECT_LE(bram_blocks(d, w), bram_blocks(d + 1, w));
      EXPECT_LE(bram_blocks(d, w), bram_blocks(d, w + 1));
    }
  }
}

TEST(NodeDsp, Formula) {
  EXPECT_EQ(node_dsp(conv_cap({4, 4, 4, 8}, 8, {3, 3, 3}, 4, 8, 3)), 96);
  EXPECT_EQ(node_dsp(conv_cap({4, 4, 4, 8}, 8, {3, 3, 3}, 1, 1, 1)), 1);
  NodeCapability fc;
  fc.kind = LayerKind::FullyConnected;
  fc.coarse_in = 4;
  fc.coarse_out = 2;
  fc.fine = 5;  // ignored
  EXPECT_EQ(node_dsp(fc), 8);
  for (LayerKind k : {LayerKind::Pool3D, LayerKind::Activation, LayerKind::ElementWise, LayerKind::GlobalAvgPool}) {
    NodeCapability n;
    n.kind = k;
    n.coarse_in = n.coarse_out = 16;
    EXPECT_EQ(node_dsp(n), 0);
  }
}

TEST(SlidingWindowBram, HandEvaluated) {
  EXPECT_EQ(sliding_window_bram(conv_cap({16, 16, 16, 64}, 8, {1, 1, 1}, 4, 1, 1)), 0);
  // R(64,4) + R(16,12) + R(4,36) = 2 + 6 + 16
  EXPECT_EQ(sliding_window_bram(conv_cap({4, 4, 4, 8}, 8, {3, 3, 3}, 2, 1, 1)), 24);
}

// Wider input folds keep the buffered word count but cut the depth, and a
// shallow buffer still costs a whole block per 36-bit column. So the block
// count can grow with c_in; it never drops below the raw storage.
TEST(SlidingWindowBram, WiderFoldCanCostMoreOnShallowBuffers) {
  EXPECT_EQ(sliding_window_bram(conv_cap({4, 4, 4, 8}, 8, {3, 3, 3}, 4, 1, 1)), 47);
}

TEST(SlidingWindowBram, NeverBelowBufferedBits) {
  Rng rng(4);
  for (int i = 0; i < 2000; ++i) {
    TensorShape s{rng.between(1, 32), rng.between(1, 32), rng.between(1, 16), rng.between(1, 64)};
    Triple k{rng.between(1, 3), rng.between(1, 7), rng.between(1, 7)};
    const std::int64_t c = rng.pick(oracle::divisors(s.c));
    const std::int64_t words = s.w * s.d * s.c * (k.h - 1) + s.d * s.c * k.h * (k.w - 1) + s.c * k.h * k.w * (k.d - 1);
    EXPECT_GE(sliding_window_bram(conv_cap(s, 1, k, c, 1, 1)) * 512 * 36, words * 16);
  }
}

TEST(WeightsBram, HandEvaluated) {
  NodeCapability fc;
  fc.kind = LayerKind::FullyConnected;
  fc.shape_in_max = {1, 1, 1, 16};
  fc.filters_max = 10;
  fc.coarse_in = 4;
  fc.coarse_out = 2;
  EXPECT_EQ(weights_bram(fc), 4);  // R(20, 8) = ceil(128/36)
  // R(2304, 48) = 5 * ceil(768/36)
  EXPECT_EQ(weights_bram(conv_cap({8, 8, 8, 64}, 64, {3, 3, 3}, 4, 4, 3)), 110);
  fc.filters_max = 0;
  EXPECT_EQ(weights_bram(fc), 0);
}

TEST(NodeBram, PoolUsesWindowOnlyOthersNothing) {
  NodeCapability p = conv_cap({4, 4, 4, 8}, 0, {3, 3, 3}, 2, 2, 1);
  p.kind = LayerKind::Pool3D;
  EXPECT_EQ(node_bram(p), 24);
  p.kind = LayerKind::Activation;
  EXPECT_EQ(node_bram(p), 0);
}

TEST(WorkConservation, DspTimesCyclesEqualsMacs) {
  Rng rng(1000);
  for (int i = 0; i < 1000; ++i) {
    TensorShape in{rng.between(1, 16), rng.between(1, 16), rng.between(1, 16), rng.between(1, 64)};
    Triple k{rng.between(1, 3), rng.between(1, 3), rng.between(1, 3)};
    const std::int64_t filters = rng.between(1, 64);
    NodeCapability n = conv_cap(in, filters, k, rng.pick(oracle::divisors(in.c)), rng.pick(oracle::divisors(filters)),
                                rng.pick(oracle::divisors(k.volume())));
    RuntimeConfig g;
    g.kind = LayerKind::Conv3D;
    g.shape_in = in;
    g.shape_out = {rng.between(1, 16), rng.between(1, 16), rng.between(1, 16), filters};
    g.filters = filters;
    g.kernel = k;
    g.coarse_in = n.coarse_in;
    g.coarse_out = n.coarse_out;
    g.fine = n.fine;
    const std::int64_t macs = g.shape_out.h * g.shape_out.w * g.shape_out.d * in.c * filters * k.volume();
    ASSERT_EQ(node_dsp(n) * compute_latency(g), macs) << i;
  }
}

TEST(Regression, RecoversKnownLinearFunction) {
  // integer-valued truth so the targets are exact
  const std::vector<double> truth = {3, 5, 7, 11, 2, 0.5, 100, 200, -50, 40, 60};
  const double b0 = 1000;
  Rng rng(12);
  const LayerKind kinds[] = {LayerKind::Conv3D,     LayerKind::FullyConnected, LayerKind::Pool3D,
                             LayerKind::Activation, LayerKind::GlobalAvgPool,  LayerKind::ElementWise};
  std::vector<CalibrationSample> samples;
  for (int i = 0; i < 400; ++i) {
    CalibrationSample s;
    s.kind = kinds[i % 6];
    s.c_in = rng.between(1, 64);
    s.c_out = rng.between(1, 64);
    s.fine = rng.between(1, 27);
    s.kvol = rng.between(1, 27);
    s.smax = 2 * rng.between(1, 100000);
    auto x = regression_features(s.kind, s.c_in, s.c_out, s.fine, s.kvol, s.smax);
    double y = b0;
    for (std::size_t j = 0; j < x.size(); ++j) y += truth[j] * x[j];
    s.lut = static_cast<std::int64_t>(y);
    s.ff = static_cast<std::int64_t>(2 * y);
    samples.push_back(s);
  }
  RegressionModel m = regression_fit(samples, "lut");
  ASSERT_EQ(m.coefficients.size(), truth.size());
  for (std::size_t j = 0; j < truth.size(); ++j) {
    EXPECT_NEAR(m.coefficients[j], truth[j], 1e-9 * std::max(1.0, std::abs(truth[j]))) << kRegressionFeatures[j];
  }
  EXPECT_NEAR(m.intercept, b0, 1e-9 * b0);
  RegressionModel f = regression_fit(samples, "ff");
  EXPECT_NEAR(f.coefficients[3], 22.0, 1e-9 * 22.0);
}

TEST(Regression, SingularFitSuggestsRidge) {
  std::vector<CalibrationSample> few(3);
  try {
    regression_fit(few, "lut");
    FAIL();
  } catch (const RegressionError& e) {
    EXPECT_NE(std::string(e.what()).find("ridge"), std::string::npos);
  }
  RegressionModel r = regression_fit(few, "lut", true);
  EXPECT_EQ(r.coefficients.size(), kRegressionFeatures.size());
  EXPECT_THROW(regression_fit(few, "bram"), RegressionError);
}

TEST(Regression, ZeroCoefficientsPredictIntercept) {
  RegressionModel m;
  m.features = kRegressionFeatures;
  m.coefficients.assign(kRegressionFeatures.size(), 0.0);
  m.intercept = 1234.0;
  NodeCapability n = conv_cap({4, 4, 4, 8}, 8, {3, 3, 3}, 2, 2, 3);
  EXPECT_EQ(m.predict(n), 1234);
  m.intercept = -5;
  EXPECT_EQ(m.predict(n), 0);
}

TEST(Regression, JsonRoundTripAndCsvRoundTrip) {
  const RegressionModel& lut = ResourceModel::defaults().lut;
  RegressionModel back = regression_from_json(regression_to_json(lut));
  EXPECT_EQ(back.coefficients, lut.coefficients);
  EXPECT_EQ(back.intercept, lut.intercept);

  std::vector<CalibrationSample> s(2);
  s[1].kind = LayerKind::Pool3D;
  s[1].lut = 77;
  std::stringstream ss;
  write_calibration_csv(ss, s);
  auto r = read_calibration_csv(ss);
  ASSERT_EQ(r.size(), 2u);
  EXPECT_EQ(r[1].kind, LayerKind::Pool3D);
  EXPECT_EQ(r[1].lut, 77);
  std::stringstream bad("kind,lut\n");
  EXPECT_THROW(read_calibration_csv(bad), RegressionError);
}

TEST(Regression, DefaultsGiveNonzeroEstimateForC3dConvNode) {
  HardwareGraph g = initial_mapping(zoo::c3d());
  for (const auto& n : g.nodes) {
    if (n.kind != LayerKind::Conv3D) continue;
    ResourceVector r = node_resources(n);
    EXPECT_GT(r.lut, 0);
    EXPECT_GT(r.ff, 0);
  }
}

TEST(GraphResources, EmptyGraphIsOverheadOnly) {
  DeviceProfile d = testing_support::device("zcu102");
  EXPECT_EQ(graph_resources(HardwareGraph{}, d), d.dma_overhead + d.xbar_overhead);
}

TEST(GraphResources, AdditiveOverNodesAndDspExact) {
  DeviceProfile d = testing_support::device("zcu102");
  for (const auto& name : zoo::names()) {
    HardwareGraph g = initial_mapping(zoo::by_name(name));
    ResourceVector sum = d.dma_overhead + d.xbar_overhead;
    std::int64_t dsp = 0;
    for (const auto& n : g.nodes) {
      sum += node_resources(n);
      dsp += node_dsp(n);
    }
    ResourceVector total = graph_resources(g, d);
    EXPECT_EQ(total, sum) << name;
    EXPECT_EQ(total.dsp, dsp) << name;
    EXPECT_EQ(graph_resources(g, d), total);
  }
}
