#pragma once

#include <stdexcept>
#include <string>

namespace mmcs {

// Shape or contract violation on a tensor operation.
struct DimError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Bad caller-supplied data: ids out of range, malformed records, empty input.
struct InputError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Invalid configuration or parameter-registry inconsistency.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Non-finite value detected where finite math was required.
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace mmcs
