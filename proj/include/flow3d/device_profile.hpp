#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

#include "flow3d/rational.hpp"
#include "json.hpp"

namespace flow3d {

class DeviceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ResourceVector {
  std::int64_t dsp = 0;
  std::int64_t bram = 0;  // 18Kb primitives
  std::int64_t lut = 0;
  std::int64_t ff = 0;

  ResourceVector& operator+=(const ResourceVector& o) {
    dsp += o.dsp;
    bram += o.bram;
    lut += o.lut;
    ff += o.ff;
    return *this;
  }
  friend ResourceVector operator+(ResourceVector a, const ResourceVector& b) { return a += b; }
  friend bool operator==(const ResourceVector&, const ResourceVector&) = default;
};

/// Measured infrastructure costs of the DMA pair and the stream crossbars.
inline constexpr ResourceVector kDefaultDmaOverhead{0, 51, 2900, 4700};
inline constexpr ResourceVector kDefaultXbarOverhead{0, 0, 1700, 1400};
/// 16-bit words per cycle per direction, unless a profile overrides it.
inline constexpr std::int64_t kDefaultDmaWordsPerCycle = 8;

/// Budgets and memory interface of one FPGA board. Immutable once loaded.
struct DeviceProfile {
  std::string name;
  std::int64_t dsp_total = 0;
  std::int64_t bram_total = 0;
  std::int64_t lut_total = 0;
  std::int64_t ff_total = 0;
  double clock_hz = 0.0;
  /// DMA words per cycle; std::nullopt means the bandwidth is not a limit.
  std::optional<Rational> bw_in_words_per_cycle{Rational(kDefaultDmaWordsPerCycle)};
  std::optional<Rational> bw_out_words_per_cycle{Rational(kDefaultDmaWordsPerCycle)};
  ResourceVector dma_overhead = kDefaultDmaOverhead;
  ResourceVector xbar_overhead = kDefaultXbarOverhead;

  [[nodiscard]] ResourceVector budget() const { return {dsp_total, bram_total, lut_total, ff_total}; }
  /// Copy with both DMA caps removed; used for compute-only evaluation.
  [[nodiscard]] DeviceProfile with_unlimited_bandwidth() const;

  friend bool operator==(const DeviceProfile&, const DeviceProfile&) = default;
};

DeviceProfile load_profile(std::string_view document);
DeviceProfile profile_from_json(const nlohmann::json& doc);
nlohmann::json profile_to_json(const DeviceProfile& dev);

}  // namespace flow3d
