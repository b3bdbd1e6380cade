#pragma once

#include <stdexcept>
#include <string>

namespace stag {

// Base of the project exception hierarchy. Subtypes let callers and tests
// discriminate failure classes; messages carry the specifics.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Shape mismatch between operands.
struct DimensionError : Error {
    using Error::Error;
};

// NaN/Inf encountered where finite values are required.
struct NumericError : Error {
    using Error::Error;
};

// Violated API precondition (non-scalar loss, no tunable parameters,
// k > n-1, sample count too small, and similar).
struct ContractError : Error {
    using Error::Error;
};

// Index out of range (gather rows, class labels).
struct IndexError : Error {
    using Error::Error;
};

// Invalid or inconsistent configuration (sharing maps, unknown strategies,
// unknown config keys).
struct ConfigError : Error {
    using Error::Error;
};

// Dataset-level problems: degenerate clouds, empty datasets, label mismatches.
struct DataError : Error {
    using Error::Error;
};

// Malformed file contents; message includes file and line.
struct ParseError : Error {
    using Error::Error;
};

// Filesystem failures.
struct IoError : Error {
    using Error::Error;
};

// A verification oracle detected it cannot be trusted (e.g. the function
// under finite differencing is not deterministic).
struct OracleError : Error {
    using Error::Error;
};

// Optimizer misuse, e.g. a tunable parameter without a gradient entry.
struct OptimizerError : Error {
    using Error::Error;
};

}  // namespace stag
