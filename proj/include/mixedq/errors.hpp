#pragma once

#include <stdexcept>
#include <string>

namespace mixedq {

// Validation failures: bad arguments, shape mismatches, broken preconditions.
struct InvalidInputError : std::runtime_error {
    explicit InvalidInputError(const std::string &msg) : std::runtime_error(msg) {}
};

// Operation requested before required state exists (e.g. missing calibration).
struct InvalidStateError : std::runtime_error {
    explicit InvalidStateError(const std::string &msg) : std::runtime_error(msg) {}
};

// Integer accumulator or result range exceeded.
struct OverflowError : std::runtime_error {
    explicit OverflowError(const std::string &msg) : std::runtime_error(msg) {}
};

// Filesystem-level failures. CLI maps these to exit code 2.
struct IoError : std::runtime_error {
    explicit IoError(const std::string &msg) : std::runtime_error(msg) {}
};

// Malformed file contents (bad magic, truncated payload, bad manifest).
struct FileParseError : IoError {
    explicit FileParseError(const std::string &msg) : IoError(msg) {}
};

} // namespace mixedq
