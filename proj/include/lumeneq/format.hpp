// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdio>
#include <string>

namespace lumeneq {

/// Shortest round-trippable-to-9-digits text, printf "%.9g".
inline std::string format_g9(double value) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.9g", value);
    return buf;
}

/// "%.17g", enough to round-trip any double.
inline std::string format_g17(double value) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", value);
    return buf;
}

}  // namespace lumeneq
