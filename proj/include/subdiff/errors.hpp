#pragma once

#include <stdexcept>
#include <string>

namespace subdiff {

// Invalid specification, configuration or argument domain. CLI maps this to exit code 2.
class SpecError : public std::runtime_error {
public:
    explicit SpecError(const std::string& msg) : std::runtime_error(msg) {}
};

// Numerical failure (non-convergence, unattainable tolerance, exhausted budget).
// Carries human-readable diagnostics. CLI maps this to exit code 3.
class NumericError : public std::runtime_error {
public:
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

} // namespace subdiff
