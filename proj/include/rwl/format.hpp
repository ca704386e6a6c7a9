#pragma once

#include <charconv>
#include <string>

namespace rwl {

// Shortest round-trip decimal form; identical across runs and platforms.
inline std::string format_number(double value) {
    char buffer[32];
    const auto [end, ec] = std::to_chars(buffer, buffer + sizeof buffer, value);
    return ec == std::errc{} ? std::string(buffer, end) : std::string("nan");
}

}  // namespace rwl
