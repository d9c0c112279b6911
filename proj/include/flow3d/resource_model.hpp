#pragma once

#include <cstdint>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "flow3d/device_profile.hpp"
#include "flow3d/hardware_graph.hpp"
#include "json.hpp"

namespace flow3d {

class RegressionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// 18Kb BRAM primitives (512 x 36 bit) for a memory `depth` deep and `words` 16-bit words wide.
std::int64_t bram_blocks(std::int64_t depth, std::int64_t words);

std::int64_t node_dsp(const NodeCapability& cap);
/// Line and frame buffers of the sliding window (Conv and Pool).
std::int64_t sliding_window_bram(const NodeCapability& cap);
/// On-chip weight storage (Conv and FC).
std::int64_t weights_bram(const NodeCapability& cap);
std::int64_t node_bram(const NodeCapability& cap);

/// Feature vector used by the LUT/FF regressions, in kRegressionFeatures order.
extern const std::vector<std::string> kRegressionFeatures;

std::vector<double> regression_features(LayerKind kind, std::int64_t c_in, std::int64_t c_out, std::int64_t fine,
                                        std::int64_t kvol, std::int64_t smax);
std::vector<double> regression_features(const NodeCapability& cap);

/// Linear model over kRegressionFeatures plus an intercept.
struct RegressionModel {
  std::string target;  // "lut" or "ff"
  std::vector<std::string> features;
  std::vector<double> coefficients;
  double intercept = 0.0;

  /// Clamped at zero.
  [[nodiscard]] double predict(const std::vector<double>& x) const;
  [[nodiscard]] std::int64_t predict(const NodeCapability& cap) const;
};

/// Regularizer added to the normal equations when ridge fitting.
inline constexpr double kRidgeLambda = 1e-6;

struct CalibrationSample {
  LayerKind kind = LayerKind::Conv3D;
  std::int64_t c_in = 1;
  std::int64_t c_out = 1;
  std::int64_t fine = 1;
  std::int64_t kvol = 1;
  std::int64_t smax = 1;
  std::int64_t lut = 0;
  std::int64_t ff = 0;
};

std::vector<CalibrationSample> read_calibration_csv(std::istream& in);
void write_calibration_csv(std::ostream& out, const std::vector<CalibrationSample>& samples);

/// Least squares for `target` ("lut" or "ff"). Rank-deficient data throws
/// unless `ridge` is set, in which case kRidgeLambda is added.
RegressionModel regression_fit(const std::vector<CalibrationSample>& samples, const std::string& target,
                               bool ridge = false);

nlohmann::json regression_to_json(const RegressionModel& m);
RegressionModel regression_from_json(const nlohmann::json& j);

struct ResourceModel {
  RegressionModel lut;
  RegressionModel ff;

  /// Coefficients fitted on data/calibration/modules.csv.
  static const ResourceModel& defaults();
};

ResourceVector node_resources(const NodeCapability& cap, const ResourceModel& rm = ResourceModel::defaults());

/// Nodes plus one DMA pair and the crossbar.
ResourceVector graph_resources(const HardwareGraph& g, const DeviceProfile& dev,
                               const ResourceModel& rm = ResourceModel::defaults());

}  // namespace flow3d
