#pragma once

#include <string_view>

namespace fastface {

enum class LogLevel { Error = 0, Warn = 1, Info = 2, Debug = 3 };

// Threshold read once from FASTFACE_LOG (error, warn, info, debug); default warn.
LogLevel log_level();
void set_log_level(LogLevel level);

void log_message(LogLevel level, std::string_view message);
inline void log_error(std::string_view m) { log_message(LogLevel::Error, m); }
inline void log_warn(std::string_view m) { log_message(LogLevel::Warn, m); }
inline void log_info(std::string_view m) { log_message(LogLevel::Info, m); }
inline void log_debug(std::string_view m) { log_message(LogLevel::Debug, m); }

}  // namespace fastface
