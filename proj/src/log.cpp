#include "cmrplan/log.hpp"

#include <atomic>

#include "cmrplan/error.hpp"

namespace cmrplan::log {

namespace {
std::atomic<Level> current{Level::info};
}

Level level() { return current.load(std::memory_order_relaxed); }

void set_level(Level l) { current.store(l, std::memory_order_relaxed); }

Level parse_level(std::string_view name)
{
    if (name == "debug") return Level::debug;
    if (name == "info") return Level::info;
    if (name == "warn") return Level::warn;
    if (name == "error") return Level::error;
    if (name == "off") return Level::off;
    throw ParameterError("unknown log level: " + std::string(name));
}

} // namespace cmrplan::log
