#include "hdccf/log.h"

#include <atomic>
#include <iostream>
#include <mutex>

#include "hdccf/error.h"

namespace hdccf {

namespace {
std::atomic<int> g_level{static_cast<int>(LogLevel::info)};
std::mutex g_mutex;
constexpr const char* kNames[] = {"error", "warn", "info", "debug"};
}  // namespace

LogLevel parse_log_level(const std::string& name) {
  for (int k = 0; k < 4; ++k) {
    if (name == kNames[k]) return static_cast<LogLevel>(k);
  }
  throw ConfigError("unknown log level '" + name + "' (expected error, warn, info or debug)");
}

void set_log_level(LogLevel level) { g_level = static_cast<int>(level); }
LogLevel log_level() { return static_cast<LogLevel>(g_level.load()); }

void log(LogLevel level, const std::string& message) {
  if (static_cast<int>(level) > g_level.load()) return;
  std::lock_guard<std::mutex> lock(g_mutex);
  std::cerr << '[' << kNames[static_cast<int>(level)] << "] " << message << '\n';
}

}  // namespace hdccf
