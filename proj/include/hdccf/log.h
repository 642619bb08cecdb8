#pragma once

#include <string>

namespace hdccf {

enum class LogLevel { error = 0, warn = 1, info = 2, debug = 3 };

LogLevel parse_log_level(const std::string& name);
void set_log_level(LogLevel level);
LogLevel log_level();

/// Writes "[level] message" to standard error when enabled.
void log(LogLevel level, const std::string& message);

inline void log_info(const std::string& m) { log(LogLevel::info, m); }
inline void log_warn(const std::string& m) { log(LogLevel::warn, m); }
inline void log_debug(const std::string& m) { log(LogLevel::debug, m); }

}  // namespace hdccf
