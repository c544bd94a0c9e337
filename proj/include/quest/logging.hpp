#pragma once

#include <string_view>

#include <spdlog/spdlog.h>

namespace quest {

/// Shared stderr logger used by every module.
spdlog::logger & log();

/// Accepts spdlog level names ("trace" .. "off"); unknown names keep the current level.
void set_log_level(std::string_view level);

} // namespace quest
