#pragma once

#include <stdexcept>
#include <string>

namespace wdmatch {

// Error taxonomy. Each class maps to one CLI exit code, see tools/wdmatch.cpp.

// Invalid configuration value (bad hyperparameter, bad spec field).
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed input data: dataset lines, embedding files, labels out of range.
class DataError : public std::runtime_error {
public:
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

// Tensor shape mismatch between graph nodes or parameter sets.
class ShapeError : public std::runtime_error {
public:
    explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

// Non-finite value produced during tensor or graph computation.
class NumericError : public std::runtime_error {
public:
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

// Operation invoked in the wrong order (e.g. gradients before evaluation).
class StateError : public std::runtime_error {
public:
    explicit StateError(const std::string& msg) : std::runtime_error(msg) {}
};

// File I/O failures, checkpoint corruption, version mismatches.
class IoError : public std::runtime_error {
public:
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

} // namespace wdmatch
