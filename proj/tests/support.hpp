// Random models, capabilities and runtime configs shared by the property tests.
#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>

#include "flow3d/device_profile.hpp"
#include "flow3d/hardware_graph.hpp"
#include "flow3d/model_ir.hpp"
#include "flow3d/optimizer.hpp"
#include "flow3d/schedule.hpp"
#include "oracles/oracles.hpp"

namespace testing_support {

using namespace flow3d;

inline std::string data_path(const std::string& rel) { return std::string(FLOW3D_DATA_DIR) + "/" + rel; }

inline std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline DeviceProfile device(const std::string& name) {
  return load_profile(slurp(data_path("devices/" + name + ".json")));
}

inline DeviceProfile unlimited(DeviceProfile dev) { return dev.with_unlimited_bandwidth(); }

// Small chain model: conv / pool / activation / elementwise / gap / fc layers
// with every extent at most `max_dim`.
inline ModelGraph random_model(Rng& rng, const std::string& name, std::int64_t max_dim = 8) {
  TensorShape in{rng.between(2, max_dim), rng.between(2, max_dim), rng.between(1, max_dim), rng.between(1, max_dim)};
  ModelBuilder b(name, in);
  std::string x;
  const std::int64_t layers = rng.between(1, 6);
  bool flat = false;
  for (std::int64_t i = 0; i < layers && !flat; ++i) {
    const TensorShape s = b.shape_of(x);
    const std::string id = "l" + std::to_string(i);
    switch (rng.below(7)) {
      case 0:
      case 1: {
        Triple k{rng.between(1, std::min<std::int64_t>(3, s.d)), rng.between(1, std::min<std::int64_t>(3, s.h)),
                 rng.between(1, std::min<std::int64_t>(3, s.w))};
        Triple j{rng.between(1, 2), rng.between(1, 2), rng.between(1, 2)};
        Padding p{rng.between(0, k.d / 2), rng.between(0, k.d / 2), rng.between(0, k.h / 2),
                  rng.between(0, k.h / 2), rng.between(0, k.w / 2), rng.between(0, k.w / 2)};
        std::int64_t groups = 1;
        std::int64_t filters = rng.between(1, max_dim);
        if (rng.below(4) == 0) {
          groups = rng.pick(oracle::divisors(s.c));
          filters = groups * rng.between(1, 2);
        }
        x = b.conv(id, x, filters, k, j, p, groups);
        break;
      }
      case 2: {
        Triple k{rng.between(1, std::min<std::int64_t>(2, s.d)), rng.between(1, std::min<std::int64_t>(2, s.h)),
                 rng.between(1, std::min<std::int64_t>(2, s.w))};
        x = b.pool(id, x, rng.below(2) ? OpType::Max : OpType::Avg, k, k);
        break;
      }
      case 3:
        if (x.empty()) {
          x = b.conv(id, x, rng.between(1, max_dim), {1, 1, 1});
        } else {
          x = b.activation(id, x, rng.below(2) ? OpType::Relu : OpType::Swish);
        }
        break;
      case 4:
        if (x.empty()) {
          x = b.conv(id, x, rng.between(1, max_dim), {1, 1, 1});
        } else {
          const std::string a = b.activation(id + "a", x);
          x = b.elementwise(id, x, a, rng.below(2) ? OpType::Add : OpType::Mul);
        }
        break;
      case 5:
        x = b.global_avg_pool(id, x);
        break;
      default:
        if (s.h > 1 || s.w > 1 || s.d > 1) x = b.flatten(id + "f", x);
        x = b.fully_connected(id, x, rng.between(1, max_dim));
        flat = true;
        break;
    }
  }
  return b.build();
}

// Shrinks every node to random bounds inside what its layers need and picks
// random legal folds.
inline HardwareGraph random_capabilities(const ModelGraph& model, HardwareGraph g, Rng& rng) {
  for (auto& n : g.nodes) {
    const auto& layers = g.layers_of(n.id);
    std::int64_t lo_w = 1, lo_d = 1, lo_c = 1, lo_f = 1;
    for (const auto& id : layers) {
      const auto& l = model.layer(id);
      if (is_windowed(l.kind)) {
        lo_w = std::max(lo_w, l.kernel.w);
        lo_d = std::max(lo_d, l.kernel.d);
      }
      // a grouped conv needs room for one whole group
      if (l.kind == LayerKind::Conv3D && l.groups > 1) {
        lo_c = std::max(lo_c, l.input().c / l.groups);
        lo_f = std::max(lo_f, l.filters / l.groups);
      }
    }
    n.shape_in_max.w = rng.between(std::min(lo_w, n.shape_in_max.w), n.shape_in_max.w);
    n.shape_in_max.d = rng.between(std::min(lo_d, n.shape_in_max.d), n.shape_in_max.d);
    n.shape_in_max.c = rng.between(lo_c, n.shape_in_max.c);
    if (has_filters(n.kind)) n.filters_max = rng.between(lo_f, n.filters_max);
    n.coarse_in = rng.pick(oracle::divisors(n.shape_in_max.c));
    n.coarse_out = has_filters(n.kind) ? rng.pick(oracle::divisors(n.filters_max)) : n.coarse_in;
    if (n.kind == LayerKind::Conv3D) n.fine = rng.pick(oracle::divisors(n.kernel_max.volume()));
    repair_folds(n);
    refresh_output_bound(n, model, layers);
  }
  return g;
}

// A valid runtime config with every fold dividing its extent.
inline RuntimeConfig random_config(Rng& rng, LayerKind kind, std::int64_t max_dim = 8) {
  RuntimeConfig g;
  g.kind = kind;
  g.shape_in = {rng.between(1, max_dim), rng.between(1, max_dim), rng.between(1, max_dim), rng.between(1, max_dim)};
  switch (kind) {
    case LayerKind::Conv3D: {
      g.kernel = {rng.between(1, 3), rng.between(1, 3), rng.between(1, 3)};
      g.shape_out = {rng.between(1, max_dim), rng.between(1, max_dim), rng.between(1, max_dim), 1};
      g.groups = rng.pick(oracle::divisors(g.shape_in.c));
      g.filters = g.groups * rng.between(1, std::max<std::int64_t>(1, max_dim / g.groups));
      g.shape_out.c = g.filters;
      g.coarse_in = rng.pick(oracle::divisors(g.shape_in.c / g.groups));
      g.coarse_out = rng.pick(oracle::divisors(g.filters));
      g.fine = rng.pick(oracle::divisors(g.kernel.volume()));
      break;
    }
    case LayerKind::FullyConnected:
      g.shape_in = {1, 1, 1, rng.between(1, max_dim)};
      g.filters = rng.between(1, max_dim);
      g.shape_out = {1, 1, 1, g.filters};
      g.coarse_in = rng.pick(oracle::divisors(g.shape_in.c));
      g.coarse_out = rng.pick(oracle::divisors(g.filters));
      break;
    case LayerKind::GlobalAvgPool:
      g.shape_out = {1, 1, 1, g.shape_in.c};
      g.coarse_in = g.coarse_out = rng.pick(oracle::divisors(g.shape_in.c));
      break;
    default:
      g.shape_out = g.shape_in;
      g.coarse_in = g.coarse_out = rng.pick(oracle::divisors(g.shape_in.c));
      break;
  }
  return g;
}

}  // namespace testing_support
