#pragma once

#include "splatctl/error.hpp"

#include <charconv>
#include <cstdint>
#include <string>
#include <string_view>
#include <system_error>

namespace splatctl::text {

/// Shortest round-trip representation; identical across runs and platforms
/// that share IEEE doubles.
inline std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

inline std::string_view trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

inline double parse_double(std::string_view s, std::string_view what) {
    s = trim(s);
    double v = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || res.ec != std::errc{} || res.ptr != s.data() + s.size()) {
        throw ConfigError(std::string(what) + ": expected a number, got '" + std::string(s) + "'");
    }
    return v;
}

inline std::int64_t parse_int(std::string_view s, std::string_view what) {
    s = trim(s);
    std::int64_t v = 0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || res.ec != std::errc{} || res.ptr != s.data() + s.size()) {
        throw ConfigError(std::string(what) + ": expected an integer, got '" + std::string(s) + "'");
    }
    return v;
}

inline std::uint64_t parse_uint(std::string_view s, std::string_view what) {
    s = trim(s);
    std::uint64_t v = 0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || res.ec != std::errc{} || res.ptr != s.data() + s.size()) {
        throw ConfigError(std::string(what) + ": expected a non-negative integer, got '" +
                          std::string(s) + "'");
    }
    return v;
}

inline bool parse_bool(std::string_view s, std::string_view what) {
    s = trim(s);
    if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
    if (s == "false" || s == "0" || s == "no" || s == "off") return false;
    throw ConfigError(std::string(what) + ": expected true or false, got '" + std::string(s) + "'");
}

} // namespace splatctl::text
