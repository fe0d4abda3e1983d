#pragma once

#include <cstdlib>
#include <iostream>
#include <string>

namespace sppm {

enum class LogLevel { Error = 0, Warn = 1, Info = 2, Debug = 3 };

/// Log threshold from the SPPM_LOG environment variable
/// (error|warn|info|debug); defaults to info.
inline LogLevel log_threshold() {
  static const LogLevel level = [] {
    const char* env = std::getenv("SPPM_LOG");
    if (!env) return LogLevel::Info;
    const std::string v(env);
    if (v == "error") return LogLevel::Error;
    if (v == "warn") return LogLevel::Warn;
    if (v == "debug") return LogLevel::Debug;
    return LogLevel::Info;
  }();
  return level;
}

inline void log_line(LogLevel level, const std::string& msg) {
  if (static_cast<int>(level) <= static_cast<int>(log_threshold())) {
    static const char* names[] = {"error", "warn", "info", "debug"};
    std::cerr << "sppm [" << names[static_cast<int>(level)] << "] " << msg << "\n";
  }
}

inline void log_info(const std::string& msg) { log_line(LogLevel::Info, msg); }
inline void log_warn(const std::string& msg) { log_line(LogLevel::Warn, msg); }
inline void log_error(const std::string& msg) { log_line(LogLevel::Error, msg); }
inline void log_debug(const std::string& msg) { log_line(LogLevel::Debug, msg); }

}  // namespace sppm
