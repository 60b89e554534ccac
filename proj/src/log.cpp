#include "fastface/log.hpp"

#include <spdlog/sinks/stdout_sinks.h>
#include <spdlog/spdlog.h>

#include <cstdlib>
#include <memory>
#include <string>

namespace fastface {
namespace {

spdlog::level::level_enum to_spdlog(LogLevel level) {
  switch (level) {
    case LogLevel::Error: return spdlog::level::err;
    case LogLevel::Warn: return spdlog::level::warn;
    case LogLevel::Info: return spdlog::level::info;
    case LogLevel::Debug: return spdlog::level::debug;
  }
  return spdlog::level::warn;
}

LogLevel level_from_env() {
  const char* env = std::getenv("FASTFACE_LOG");
  if (!env) return LogLevel::Warn;
  const std::string v(env);
  if (v == "error") return LogLevel::Error;
  if (v == "info") return LogLevel::Info;
  if (v == "debug") return LogLevel::Debug;
  return LogLevel::Warn;
}

struct LoggerState {
  std::shared_ptr<spdlog::logger> logger;
  LogLevel level;

  LoggerState()
      : logger(std::make_shared<spdlog::logger>(
            "fastface", std::make_shared<spdlog::sinks::stderr_sink_mt>())),
        level(level_from_env()) {
    logger->set_pattern("[fastface %l] %v");
    logger->set_level(to_spdlog(level));
  }
};

LoggerState& state() {
  static LoggerState s;
  return s;
}

}  // namespace

LogLevel log_level() { return state().level; }

void set_log_level(LogLevel level) {
  state().level = level;
  state().logger->set_level(to_spdlog(level));
}

void log_message(LogLevel level, std::string_view message) {
  state().logger->log(to_spdlog(level), message);
}

}  // namespace fastface
