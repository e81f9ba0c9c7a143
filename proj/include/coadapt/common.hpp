#pragma once

#include <stdexcept>
#include <string>

namespace coadapt {

// Base class for everything this library throws on purpose.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Mismatched dimensions between operands.
struct ShapeError : Error {
    using Error::Error;
};

// Arguments outside an operation's domain (negative counts, gamma >= 1, ...).
struct DomainError : Error {
    using Error::Error;
};

// Bad run configuration (unknown keys, invalid combinations). CLI exit code 2.
struct ConfigError : Error {
    using Error::Error;
};

// Malformed input file content; carries the offending line when known.
struct ParseError : ConfigError {
    using ConfigError::ConfigError;
};

// Numerical failure: non-finite values, divergence, no stationary solution.
// CLI exit code 3.
struct NumericError : Error {
    using Error::Error;
};

// Filesystem failure (missing file, unwritable directory). CLI exit code 4.
struct IoError : Error {
    using Error::Error;
};

}  // namespace coadapt
