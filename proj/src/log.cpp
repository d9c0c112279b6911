#include "flow3d/log.hpp"

#include <cstdlib>
#include <iostream>
#include <mutex>
#include <string>

namespace flow3d {

LogLevel log_level() {
  static const LogLevel level = [] {
    const char* env = std::getenv("HARFLOW_LOG");
    std::string v = env ? env : "";
    if (v == "debug") return LogLevel::Debug;
    if (v == "info") return LogLevel::Info;
    return LogLevel::Error;
  }();
  return level;
}

void log_message(LogLevel level, std::string_view message) {
  if (static_cast<int>(level) > static_cast<int>(log_level())) return;
  static std::mutex mu;
  static const char* names[] = {"error", "info", "debug"};
  std::lock_guard<std::mutex> lock(mu);
  std::cerr << "[" << names[static_cast<int>(level)] << "] " << message << '\n';
}

}  // namespace flow3d
