#pragma once

#include <charconv>
#include <cstdint>
#include <string>

#include "sor/errors.hpp"

namespace sor {

/// Shortest decimal form that round-trips to the same double. Keeps CSV
/// output byte-deterministic and lossless.
inline std::string fmt_double(double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    if (res.ec != std::errc())
        throw ValidationError("double formatting failed");
    return std::string(buf, res.ptr);
}

inline double parse_double(const std::string& s) {
    double v = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size())
        throw ParseError("not a number: '" + s + "'");
    return v;
}

}  // namespace sor
