#pragma once

#include <stdexcept>
#include <string>

namespace diffkpt {

// Error taxonomy shared by every module. The CLI maps these onto stable
// exit codes (config/validation/format -> 2, io -> 1, numeric -> 3).
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Bad sizes or extents passed between operations.
struct ShapeError : Error {
    explicit ShapeError(const std::string& msg) : Error(msg) {}
};

// Invalid configuration values (bounds, divisibility, missing keys).
struct ConfigError : Error {
    explicit ConfigError(const std::string& msg) : Error(msg) {}
};

// Caller broke an API contract (e.g. backward on a non-scalar).
struct ContractError : Error {
    explicit ContractError(const std::string& msg) : Error(msg) {}
};

// Malformed file content (magic, truncation, schema).
struct FormatError : Error {
    explicit FormatError(const std::string& msg) : Error(msg) {}
};

// Inputs that parse but violate domain invariants.
struct ValidationError : Error {
    explicit ValidationError(const std::string& msg) : Error(msg) {}
};

// Non-finite values or singular arithmetic.
struct NumericError : Error {
    explicit NumericError(const std::string& msg) : Error(msg) {}
};

// Filesystem failures.
struct IoError : Error {
    explicit IoError(const std::string& msg) : Error(msg) {}
};

} // namespace diffkpt
