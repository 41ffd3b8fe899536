// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include "properties.hpp"

using namespace lumeneq;

TEST_CASE("module invariants hold on 100 seeded cases each") {
    for (const auto& r : props::invariant_suite(2024)) {
        CAPTURE(r.name);
        CAPTURE(r.detail);
        CHECK(r.cases >= 100);
        CHECK(r.failures == 0);
    }
}
