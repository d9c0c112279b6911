// Synthetic LUT/FF calibration data and the fit that ships as the default
// regression. See docs/calibration.md for the cost heuristic.
//
//   gen_calibration generate [--samples N] [--seed S] > modules.csv
//   gen_calibration fit modules.csv > regression.json
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <string>

#include "flow3d/optimizer.hpp"
#include "flow3d/resource_model.hpp"

using namespace flow3d;

namespace {

struct KindCost {
  LayerKind kind;
  double lut_base;
  double ff_base;
};

constexpr KindCost kKinds[] = {
    {LayerKind::Conv3D, 3000, 4000},       {LayerKind::FullyConnected, 2000, 2500},
    {LayerKind::Pool3D, 1500, 1200},       {LayerKind::Activation, 200, 300},
    {LayerKind::GlobalAvgPool, 400, 500},  {LayerKind::ElementWise, 300, 400},
};

// Shared per-resource slopes; only the base cost depends on the kind.
double lut_cost(const KindCost& k, const CalibrationSample& s, double mults) {
  return k.lut_base + 55.0 * mults + 60.0 * s.c_in + 40.0 * s.c_out + 30.0 * s.fine + 20.0 * s.kvol +
         0.0005 * s.smax;
}

double ff_cost(const KindCost& k, const CalibrationSample& s, double mults) {
  return k.ff_base + 60.0 * mults + 50.0 * s.c_in + 45.0 * s.c_out + 35.0 * s.fine + 25.0 * s.kvol +
         0.0008 * s.smax;
}

int generate(std::int64_t count, std::uint64_t seed) {
  Rng rng(seed);
  const std::vector<std::int64_t> lanes = {1, 2, 4, 8, 16, 32, 64};
  const std::vector<std::int64_t> spatial = {7, 14, 28, 56, 112};
  const std::vector<std::int64_t> depth = {1, 2, 4, 8, 16};
  const std::vector<std::int64_t> channels = {3, 16, 32, 64, 128, 256, 512};
  const std::vector<std::int64_t> conv_kernels = {1, 3, 9, 27, 7, 49};
  const std::vector<std::int64_t> pool_kernels = {1, 8, 27};
  // Conv dominates real designs, so it gets the most samples.
  const std::vector<int> kind_weights = {0, 0, 0, 0, 0, 0, 0, 0, 1, 1, 1, 2, 2, 2, 3, 3, 4, 4, 5, 5};

  std::vector<CalibrationSample> samples;
  for (std::int64_t i = 0; i < count; ++i) {
    const KindCost& k = kKinds[rng.pick(kind_weights)];
    CalibrationSample s;
    s.kind = k.kind;
    s.c_in = rng.pick(lanes);
    s.smax = rng.pick(spatial) * rng.pick(spatial) * rng.pick(depth) * rng.pick(channels);
    switch (k.kind) {
      case LayerKind::Conv3D:
        s.c_out = rng.pick(lanes);
        s.kvol = rng.pick(conv_kernels);
        s.fine = rng.pick(divisors(s.kvol));
        break;
      case LayerKind::FullyConnected:
        s.c_out = rng.pick(lanes);
        s.smax = rng.pick(channels) * 16;
        break;
      case LayerKind::Pool3D:
        s.c_out = s.c_in;
        s.kvol = rng.pick(pool_kernels);
        break;
      default:
        s.c_out = s.c_in;
        break;
    }
    const double mults = has_filters(k.kind) ? static_cast<double>(s.c_in * s.c_out * s.fine) : 0.0;
    const double lut_noise = 1.0 + 0.05 * (2.0 * rng.unit() - 1.0);
    const double ff_noise = 1.0 + 0.05 * (2.0 * rng.unit() - 1.0);
    s.lut = std::llround(lut_cost(k, s, mults) * lut_noise);
    s.ff = std::llround(ff_cost(k, s, mults) * ff_noise);
    samples.push_back(s);
  }
  write_calibration_csv(std::cout, samples);
  return 0;
}

int fit(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    std::cerr << "cannot open " << path << "\n";
    return 1;
  }
  auto samples = read_calibration_csv(in);
  nlohmann::json doc;
  doc["lut"] = regression_to_json(regression_fit(samples, "lut"));
  doc["ff"] = regression_to_json(regression_fit(samples, "ff"));
  std::cout << std::setprecision(17) << doc.dump(2) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  std::string mode = argc > 1 ? argv[1] : "";
  try {
    if (mode == "generate") {
      std::int64_t count = 5000;
      std::uint64_t seed = 2024;
      for (int i = 2; i + 1 < argc; i += 2) {
        std::string flag = argv[i];
        if (flag == "--samples") count = std::stoll(argv[i + 1]);
        else if (flag == "--seed") seed = std::stoull(argv[i + 1]);
        else throw std::invalid_argument("unknown flag " + flag);
      }
      return generate(count, seed);
    }
    if (mode == "fit" && argc == 3) return fit(argv[2]);
  } catch (const std::exception& e) {
    std::cerr << "gen_calibration: " << e.what() << "\n";
    return 1;
  }
  std::cerr << "usage: gen_calibration generate [--samples N] [--seed S] | fit <csv>\n";
  return 2;
}
