#pragma once

#include <string_view>

namespace flow3d {

enum class LogLevel { Error = 0, Info = 1, Debug = 2 };

/// Read once from HARFLOW_LOG (error, info or debug); defaults to error.
LogLevel log_level();
void log_message(LogLevel level, std::string_view message);

inline void log_info(std::string_view m) { log_message(LogLevel::Info, m); }
inline void log_debug(std::string_view m) { log_message(LogLevel::Debug, m); }
inline void log_error(std::string_view m) { log_message(LogLevel::Error, m); }

}  // namespace flow3d
