#pragma once

#include <iostream>
#include <sstream>
#include <string_view>

namespace dpsr::log {

enum class Level { debug = 0, info = 1, warn = 2, error = 3, off = 4 };

// Messages below this level are dropped. Default: info.
Level threshold();
void set_threshold(Level level);

void write(Level level, std::string_view message);

template <typename... Args>
void emit(Level level, const Args&... args) {
  if (level < threshold()) return;
  std::ostringstream s;
  (s << ... << args);
  write(level, s.str());
}

template <typename... Args>
void info(const Args&... args) { emit(Level::info, args...); }
template <typename... Args>
void warn(const Args&... args) { emit(Level::warn, args...); }
template <typename... Args>
void error(const Args&... args) { emit(Level::error, args...); }

}  // namespace dpsr::log
