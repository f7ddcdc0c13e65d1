// Copyright (c) 2026 mvdiff contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdlib>
#include <cstring>

namespace mvd {

// MV_TEST_DETERMINISTIC=1 pins every reduction to an order that does not
// depend on internal blocking choices.
inline bool deterministic_mode() {
    const char* v = std::getenv("MV_TEST_DETERMINISTIC");
    return v != nullptr && std::strcmp(v, "1") == 0;
}

}  // namespace mvd
