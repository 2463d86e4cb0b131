// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace fairmib {

// Bad user input: malformed files, invalid config values, schema violations.
struct ValidationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Shape disagreement between operands. Message names both shapes.
struct DimensionError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Non-finite values or domain violations inside a numeric kernel.
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// API misuse, e.g. running backward twice on one tape.
struct StateError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// A metric that is undefined on the requested group/mask.
struct UndefinedMetricError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Filesystem failures.
struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace fairmib
