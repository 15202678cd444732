#pragma once

#include <stdexcept>
#include <string>

namespace flowcot {

// Malformed inputs: bad config fields, corrupt files, version mismatches.
struct DataError : std::runtime_error {
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

// Non-finite values where finiteness is a contract (losses, gradients).
struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

// Enumeration would exceed the configured size budget.
struct EnumerationCapError : std::runtime_error {
    explicit EnumerationCapError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace flowcot
