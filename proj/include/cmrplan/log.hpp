#pragma once

#include <iostream>
#include <sstream>
#include <string_view>

namespace cmrplan::log {

enum class Level { debug = 0, info = 1, warn = 2, error = 3, off = 4 };

Level level();
void set_level(Level l);
Level parse_level(std::string_view name);

template <typename... Args>
void write(Level l, const Args&... args)
{
    if (l < level()) return;
    static constexpr const char* tags[] = {"debug", "info", "warn", "error"};
    std::ostringstream os;
    os << '[' << tags[static_cast<int>(l)] << "] ";
    (os << ... << args);
    os << '\n';
    std::cerr << os.str();
}

template <typename... Args> void debug(const Args&... a) { write(Level::debug, a...); }
template <typename... Args> void info(const Args&... a) { write(Level::info, a...); }
template <typename... Args> void warn(const Args&... a) { write(Level::warn, a...); }

} // namespace cmrplan::log
