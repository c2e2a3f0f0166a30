#pragma once

#include <string_view>

namespace lrd::log {

enum class Level { kQuiet = 0, kWarn = 1, kInfo = 2 };

void set_level(Level level);
Level level();
void info(std::string_view msg);
void warn(std::string_view msg);

}  // namespace lrd::log
