#pragma once

#include <cstdlib>
#include <cstring>
#include <iostream>
#include <string_view>

namespace bup::log {

enum class Level { debug = 0, info = 1, warn = 2, quiet = 3 };

/// Threshold read once from BUP_LOG (debug|info|warn|quiet); defaults to warn.
inline Level threshold() {
  static const Level level = [] {
    const char* env = std::getenv("BUP_LOG");
    if (env == nullptr) return Level::warn;
    if (std::strcmp(env, "debug") == 0) return Level::debug;
    if (std::strcmp(env, "info") == 0) return Level::info;
    if (std::strcmp(env, "quiet") == 0) return Level::quiet;
    return Level::warn;
  }();
  return level;
}

inline void write(Level level, std::string_view tag, std::string_view msg) {
  if (level < threshold()) return;
  std::clog << '[' << tag << "] " << msg << '\n';
}

inline void debug(std::string_view msg) { write(Level::debug, "debug", msg); }
inline void info(std::string_view msg) { write(Level::info, "info", msg); }
inline void warn(std::string_view msg) { write(Level::warn, "warn", msg); }

}  // namespace bup::log
