#pragma once

#include <stdexcept>
#include <string>

namespace uierl {

// Bad arguments, bad shapes, bad CLI usage. CLI exit code 1.
struct UsageError : std::invalid_argument {
    explicit UsageError(const std::string& msg) : std::invalid_argument(msg) {}
};

// Unreadable/inconsistent data on disk (missing references, corrupt files). CLI exit code 2.
struct DataError : std::runtime_error {
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

// NaN/Inf or other numerical failure. CLI exit code 3.
struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

} // namespace uierl
