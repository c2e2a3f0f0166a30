#include "lrd/log.hpp"

#include <atomic>
#include <iostream>
#include <mutex>

namespace lrd::log {

namespace {
std::atomic<Level> g_level{Level::kWarn};
std::mutex g_mutex;
}  // namespace

void set_level(Level l) { g_level = l; }
Level level() { return g_level; }

void info(std::string_view msg) {
  if (g_level < Level::kInfo) return;
  std::lock_guard lock(g_mutex);
  std::cerr << "[lrd] " << msg << '\n';
}

void warn(std::string_view msg) {
  if (g_level < Level::kWarn) return;
  std::lock_guard lock(g_mutex);
  std::cerr << "[lrd] warning: " << msg << '\n';
}

}  // namespace lrd::log
