#pragma once

#include <stdexcept>
#include <string>

namespace cupi {

// Base class for all toolkit failures. Subclasses map onto exit codes in the
// CLI: configuration/format/bounds problems are validation errors (exit 1),
// everything else is a runtime failure (exit 2).
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Invalid or inconsistent configuration values.
class ConfigError : public Error {
public:
    using Error::Error;
};

// Malformed file payloads (bad magic, truncation, count mismatches).
class FormatError : public Error {
public:
    using Error::Error;
};

// Tensor or matrix shape mismatches.
class ShapeError : public Error {
public:
    using Error::Error;
};

// Index or label out of range.
class BoundsError : public Error {
public:
    using Error::Error;
};

// Operation attempted on an object in the wrong state (e.g. uninitialized banks).
class StateError : public Error {
public:
    using Error::Error;
};

// Non-finite values where finite ones are required.
class NumericError : public Error {
public:
    using Error::Error;
};

// Filesystem and I/O failures.
class IoError : public Error {
public:
    using Error::Error;
};

}  // namespace cupi
