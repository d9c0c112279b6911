#include "flow3d/perf_model.hpp"

#include <stdexcept>

namespace flow3d {

namespace {

void require_folds(const RuntimeConfig& cfg) {
  if (cfg.coarse_in < 1 || cfg.coarse_out < 1 || cfg.fine < 1 || cfg.groups < 1) {
    throw std::invalid_argument("invalid folding: coarse, fine and group factors must be positive");
  }
}

std::int64_t checked(__int128 v) {
  if (v > INT64_MAX) throw std::overflow_error("latency does not fit in 64 bits");
  return static_cast<std::int64_t>(v);
}

std::int64_t ceil_div_wide(__int128 num, __int128 den) { return checked(num / den + (num % den != 0 ? 1 : 0)); }

// Parameter words one invocation streams in.
__int128 param_words(const RuntimeConfig& cfg) {
  switch (cfg.kind) {
    case LayerKind::Conv3D:
      return static_cast<__int128>(cfg.shape_in.c) * cfg.filters * cfg.kernel.volume() / cfg.groups;
    case LayerKind::FullyConnected:
      return static_cast<__int128>(cfg.shape_in.c) * cfg.filters;
    default:
      return 0;
  }
}

}  // namespace

std::string_view to_string(Bound bound) {
  switch (bound) {
    case Bound::Compute: return "compute";
    case Bound::MemoryIn: return "memory_in";
    case Bound::MemoryOut: return "memory_out";
  }
  return "compute";
}

std::int64_t compute_latency(const RuntimeConfig& cfg) {
  require_folds(cfg);
  switch (cfg.kind) {
    case LayerKind::Conv3D: {
      const TensorShape& o = cfg.shape_out;
      __int128 num = static_cast<__int128>(o.h) * o.w * o.d * cfg.shape_in.c * cfg.filters * cfg.kernel.volume();
      __int128 den = static_cast<__int128>(cfg.groups) * cfg.coarse_in * cfg.coarse_out * cfg.fine;
      return ceil_div_wide(num, den);
    }
    case LayerKind::FullyConnected:
      return ceil_div_wide(static_cast<__int128>(cfg.shape_in.c) * cfg.filters,
                           static_cast<__int128>(cfg.coarse_in) * cfg.coarse_out);
    default:
      return ceil_div(cfg.shape_in.volume(), cfg.coarse_in);
  }
}

StreamRates stream_rates(const RuntimeConfig& cfg) {
  StreamRates r;
  const std::int64_t cycles = compute_latency(cfg);
  if (cycles == 0) {
    r.unbounded = true;
    return r;
  }
  r.in = Rational(cfg.shape_in.volume(), cycles * cfg.coarse_in);
  r.out = Rational(cfg.shape_out.volume(), cycles * cfg.coarse_out);
  if (has_filters(cfg.kind)) {
    const std::int64_t fine = cfg.kind == LayerKind::FullyConnected ? 1 : cfg.fine;
    r.param = Rational(checked(param_words(cfg)), cycles) / Rational(cfg.coarse_in * cfg.coarse_out * fine);
    if (cfg.psum) r.psum = r.out;
  }
  return r;
}

LatencyBreakdown invocation_latency(const RuntimeConfig& cfg, const DeviceProfile& dev) {
  LatencyBreakdown b;
  b.compute_cycles = compute_latency(cfg);
  const StreamRates r = stream_rates(cfg);

  b.bw_in = dev.bw_in_words_per_cycle;
  b.bw_out = dev.bw_out_words_per_cycle;
  if (!r.unbounded) {
    Rational demand_in = r.in * Rational(cfg.coarse_in);
    if (has_filters(cfg.kind)) {
      const std::int64_t fine = cfg.kind == LayerKind::FullyConnected ? 1 : cfg.fine;
      demand_in += r.psum * Rational(cfg.coarse_out) + r.param * Rational(cfg.coarse_in * cfg.coarse_out * fine);
    }
    Rational demand_out = r.out * Rational(cfg.coarse_out);
    b.bw_in = b.bw_in ? min(*b.bw_in, demand_in) : demand_in;
    b.bw_out = b.bw_out ? min(*b.bw_out, demand_out) : demand_out;
  }

  Rational in_term, out_term;
  const std::int64_t in_words = cfg.shape_in.volume();
  const std::int64_t out_words = cfg.shape_out.volume();
  if (in_words > 0 && b.bw_in) in_term = Rational(in_words) / *b.bw_in;
  if (out_words > 0 && b.bw_out) out_term = Rational(out_words) / *b.bw_out;

  const Rational longest = max(in_term, out_term);
  b.total_cycles = std::max(longest.ceil(), b.compute_cycles);
  const Rational compute(b.compute_cycles);
  if (in_term > compute && in_term >= out_term) {
    b.bound = Bound::MemoryIn;
  } else if (out_term > compute) {
    b.bound = Bound::MemoryOut;
  }
  return b;
}

std::int64_t schedule_latency(const Schedule& schedule, const DeviceProfile& dev) {
  std::int64_t total = 0;
  for (const auto& e : schedule.entries) total += invocation_latency(e.config, dev).total_cycles;
  return total;
}

std::int64_t schedule_latency(const CompactSchedule& schedule, const DeviceProfile& dev) {
  std::int64_t total = 0;
  for (const auto& e : schedule.entries) total += e.count * invocation_latency(e.config, dev).total_cycles;
  return total;
}

}  // namespace flow3d
