#include "quest/logging.hpp"

#include <spdlog/sinks/stdout_color_sinks.h>

#include <memory>
#include <string>

namespace quest {

spdlog::logger & log()
{
    static std::shared_ptr<spdlog::logger> logger = [] {
        auto l = spdlog::stderr_color_mt("quest");
        l->set_pattern("[%H:%M:%S.%e] [%^%l%$] %v");
        l->set_level(spdlog::level::info);
        return l;
    }();
    return *logger;
}

void set_log_level(std::string_view level)
{
    auto const lvl = spdlog::level::from_str(std::string(level));
    if (lvl != spdlog::level::off || level == "off") {
        log().set_level(lvl);
    }
}

} // namespace quest
