#include "flow3d/resource_model.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>

#include "flow3d/rational.hpp"

namespace flow3d {

using nlohmann::json;

const std::vector<std::string> kRegressionFeatures = {"c_in",     "c_out",     "f",        "mults",
                                                      "kvol",     "smax",      "kind_fc",  "kind_pool",
                                                      "kind_act", "kind_gap",  "kind_eltwise"};

std::int64_t bram_blocks(std::int64_t depth, std::int64_t words) {
  if (depth <= 0 || words <= 0) return 0;
  return ceil_div(depth, 512) * ceil_div(16 * words, 36);
}

std::int64_t node_dsp(const NodeCapability& cap) {
  switch (cap.kind) {
    case LayerKind::Conv3D: return cap.coarse_in * cap.coarse_out * cap.fine;
    case LayerKind::FullyConnected: return cap.coarse_in * cap.coarse_out;
    default: return 0;
  }
}

std::int64_t sliding_window_bram(const NodeCapability& cap) {
  if (!is_windowed(cap.kind)) return 0;
  const TensorShape& s = cap.shape_in_max;
  const Triple& k = cap.kernel_max;
  const std::int64_t c = cap.coarse_in;
  const std::int64_t per_stream = s.c / c;
  return bram_blocks(s.w * s.d * per_stream, (k.h - 1) * c) + bram_blocks(s.d * per_stream, k.h * (k.w - 1) * c) +
         bram_blocks(per_stream, k.h * k.w * (k.d - 1) * c);
}

std::int64_t weights_bram(const NodeCapability& cap) {
  if (!has_filters(cap.kind)) return 0;
  const bool fc = cap.kind == LayerKind::FullyConnected;
  const std::int64_t kvol = fc ? 1 : cap.kernel_max.volume();
  const std::int64_t fine = fc ? 1 : cap.fine;
  const std::int64_t lanes = cap.coarse_in * cap.coarse_out * fine;
  const std::int64_t words = cap.shape_in_max.c * cap.filters_max * kvol;
  return bram_blocks(ceil_div(words, lanes), lanes);
}

std::int64_t node_bram(const NodeCapability& cap) { return sliding_window_bram(cap) + weights_bram(cap); }

std::vector<double> regression_features(LayerKind kind, std::int64_t c_in, std::int64_t c_out, std::int64_t fine,
                                        std::int64_t kvol, std::int64_t smax) {
  const double mults = has_filters(kind) ? static_cast<double>(c_in * c_out * fine) : 0.0;
  return {static_cast<double>(c_in),
          static_cast<double>(c_out),
          static_cast<double>(fine),
          mults,
          static_cast<double>(kvol),
          static_cast<double>(smax),
          kind == LayerKind::FullyConnected ? 1.0 : 0.0,
          kind == LayerKind::Pool3D ? 1.0 : 0.0,
          kind == LayerKind::Activation ? 1.0 : 0.0,
          kind == LayerKind::GlobalAvgPool ? 1.0 : 0.0,
          kind == LayerKind::ElementWise ? 1.0 : 0.0};
}

std::vector<double> regression_features(const NodeCapability& cap) {
  const bool conv = cap.kind == LayerKind::Conv3D;
  return regression_features(cap.kind, cap.coarse_in, cap.coarse_out, conv ? cap.fine : 1,
                             is_windowed(cap.kind) ? cap.kernel_max.volume() : 1, cap.shape_in_max.volume());
}

double RegressionModel::predict(const std::vector<double>& x) const {
  if (x.size() != coefficients.size()) throw RegressionError("feature count does not match the model");
  double y = intercept;
  for (std::size_t i = 0; i < x.size(); ++i) y += coefficients[i] * x[i];
  return std::max(0.0, y);
}

std::int64_t RegressionModel::predict(const NodeCapability& cap) const {
  return std::llround(predict(regression_features(cap)));
}

std::vector<CalibrationSample> read_calibration_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw RegressionError("calibration CSV is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "kind,c_in,c_out,f,kvol,smax,lut,ff") {
    throw RegressionError("calibration CSV header must be kind,c_in,c_out,f,kvol,smax,lut,ff");
  }
  std::vector<CalibrationSample> out;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != 8) throw RegressionError("calibration CSV row " + std::to_string(row) + " needs 8 fields");
    try {
      CalibrationSample s;
      s.kind = parse_layer_kind(cells[0]);
      s.c_in = std::stoll(cells[1]);
      s.c_out = std::stoll(cells[2]);
      s.fine = std::stoll(cells[3]);
      s.kvol = std::stoll(cells[4]);
      s.smax = std::stoll(cells[5]);
      s.lut = std::stoll(cells[6]);
      s.ff = std::stoll(cells[7]);
      out.push_back(s);
    } catch (const std::exception& e) {
      throw RegressionError("calibration CSV row " + std::to_string(row) + ": " + e.what());
    }
  }
  return out;
}

void write_calibration_csv(std::ostream& out, const std::vector<CalibrationSample>& samples) {
  out << "kind,c_in,c_out,f,kvol,smax,lut,ff\n";
  for (const auto& s : samples) {
    out << to_string(s.kind) << ',' << s.c_in << ',' << s.c_out << ',' << s.fine << ',' << s.kvol << ',' << s.smax
        << ',' << s.lut << ',' << s.ff << '\n';
  }
}

RegressionModel regression_fit(const std::vector<CalibrationSample>& samples, const std::string& target, bool ridge) {
  if (target != "lut" && target != "ff") throw RegressionError("regression target must be lut or ff");
  const auto n = static_cast<Eigen::Index>(samples.size());
  const auto p = static_cast<Eigen::Index>(kRegressionFeatures.size());
  if (n < 2) throw RegressionError("regression needs at least two samples");

  // Columns are scaled to unit max so smax does not swamp the conditioning.
  Eigen::MatrixXd x(n, p + 1);
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& s = samples[static_cast<std::size_t>(i)];
    auto f = regression_features(s.kind, s.c_in, s.c_out, s.fine, s.kvol, s.smax);
    for (Eigen::Index j = 0; j < p; ++j) x(i, j) = f[static_cast<std::size_t>(j)];
    x(i, p) = 1.0;
    y(i) = static_cast<double>(target == "lut" ? s.lut : s.ff);
  }
  Eigen::VectorXd scale(p + 1);
  for (Eigen::Index j = 0; j <= p; ++j) {
    double m = x.col(j).cwiseAbs().maxCoeff();
    scale(j) = m > 0 ? m : 1.0;
    x.col(j) /= scale(j);
  }

  Eigen::VectorXd beta;
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(x);
  if (!ridge) {
    if (n < p + 1 || qr.rank() < p + 1) {
      throw RegressionError("regression is singular (" + std::to_string(n) + " samples, rank " +
                            std::to_string(qr.rank()) + " of " + std::to_string(p + 1) +
                            "); refit with ridge regularization");
    }
    beta = qr.solve(y);
  } else {
    Eigen::MatrixXd a = x.transpose() * x;
    a.diagonal().array() += kRidgeLambda;
    beta = a.ldlt().solve(x.transpose() * y);
  }
  beta = beta.cwiseQuotient(scale);

  RegressionModel m;
  m.target = target;
  m.features = kRegressionFeatures;
  for (Eigen::Index j = 0; j < p; ++j) m.coefficients.push_back(beta(j));
  m.intercept = beta(p);
  return m;
}

json regression_to_json(const RegressionModel& m) {
  json j;
  j["target"] = m.target;
  j["features"] = m.features;
  j["coefficients"] = m.coefficients;
  j["intercept"] = m.intercept;
  return j;
}

RegressionModel regression_from_json(const json& j) {
  try {
    RegressionModel m;
    m.target = j.at("target").get<std::string>();
    m.features = j.at("features").get<std::vector<std::string>>();
    m.coefficients = j.at("coefficients").get<std::vector<double>>();
    m.intercept = j.at("intercept").get<double>();
    if (m.features != kRegressionFeatures) throw RegressionError("regression features differ from the built-in set");
    if (m.coefficients.size() != m.features.size()) throw RegressionError("coefficient count differs from features");
    return m;
  } catch (const json::exception& e) {
    throw RegressionError(std::string("malformed regression model: ") + e.what());
  }
}

const ResourceModel& ResourceModel::defaults() {
  // Regenerate with `gen_calibration fit data/calibration/modules.csv` after changing the calibration data.
  static const ResourceModel model = [] {
    ResourceModel rm;
    rm.lut.target = "lut";
    rm.lut.features = kRegressionFeatures;
    rm.lut.coefficients = {56.919828645783504, 35.127255630023065, 55.98422159457265, 55.33762770288357, 19.28868181461374, 0.00047932626550139477, -681.5274655110534, -1067.1491320789858, -2385.2169232286337, -2178.4063400339564, -2271.838004518905};
    rm.lut.intercept = 2743.030522294229;
    rm.ff.target = "ff";
    rm.ff.features = kRegressionFeatures;
    rm.ff.coefficients = {46.63642763136296, 48.33281887464516, 35.849492336673094, 60.10997557475757, 29.788361737501376, 0.0007917380226541656, -1410.3953137868796, -2722.9853277286697, -3591.9824520451616, -3381.038689961309, -3477.3111432962583};
    rm.ff.intercept = 3885.843421055804;
    return rm;
  }();
  return model;
}

ResourceVector node_resources(const NodeCapability& cap, const ResourceModel& rm) {
  ResourceVector r;
  r.dsp = node_dsp(cap);
  r.bram = node_bram(cap);
  r.lut = rm.lut.predict(cap);
  r.ff = rm.ff.predict(cap);
  return r;
}

ResourceVector graph_resources(const HardwareGraph& g, const DeviceProfile& dev, const ResourceModel& rm) {
  ResourceVector total = dev.dma_overhead + dev.xbar_overhead;
  for (const auto& n : g.nodes) total += node_resources(n, rm);
  return total;
}

}  // namespace flow3d
