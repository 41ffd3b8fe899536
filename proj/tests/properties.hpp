// SPDX-License-Identifier: Apache-2.0
//
// Seeded property checks. Each runs `cases` independently seeded cases and
// reports how many failed; both the unit tests and the acceptance runner
// call these.
#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "lumeneq/rng.hpp"

namespace lumeneq::props {

struct PropertyResult {
    std::string name;
    std::size_t cases = 0;
    std::size_t failures = 0;
    /// First failing case, empty when all pass.
    std::string detail;

    [[nodiscard]] bool passed() const { return cases > 0 && failures == 0; }
};

inline constexpr std::size_t kDefaultCases = 100;

PropertyResult dropout_expectation(Seed seed, std::size_t cases = kDefaultCases);
PropertyResult lstm_gate_bounds(Seed seed, std::size_t cases = kDefaultCases);
PropertyResult model_shape_trace(Seed seed, std::size_t cases = kDefaultCases);
PropertyResult split_has_no_leakage(Seed seed, std::size_t cases = kDefaultCases);
PropertyResult learning_rate_monotone(Seed seed, std::size_t cases = kDefaultCases);
PropertyResult restore_best(Seed seed, std::size_t cases = kDefaultCases);

/// The six above, in that order.
std::vector<PropertyResult> invariant_suite(Seed seed, std::size_t cases = kDefaultCases);

}  // namespace lumeneq::props
