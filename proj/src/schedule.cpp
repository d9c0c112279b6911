#include "flow3d/schedule.hpp"

#include <stdexcept>

namespace flow3d {

std::string_view to_string(ExecutionMode mode) {
  return mode == ExecutionMode::PaddedBaseline ? "padded_baseline" : "runtime_configurable";
}

ExecutionMode parse_execution_mode(std::string_view text) {
  if (text == "runtime_configurable") return ExecutionMode::RuntimeConfigurable;
  if (text == "padded_baseline") return ExecutionMode::PaddedBaseline;
  throw std::invalid_argument("unknown execution mode '" + std::string(text) + "'");
}

}  // namespace flow3d
