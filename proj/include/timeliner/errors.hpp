#pragma once

#include <stdexcept>
#include <string>

namespace timeliner {

/// Bad command-line usage or malformed configuration. CLI exit code 1.
class UsageError : public std::runtime_error {
public:
    explicit UsageError(const std::string& what) : std::runtime_error(what) {}
};

/// Invalid or inconsistent input data (missing files, bad values,
/// violated invariants). CLI exit code 2.
class DataError : public std::runtime_error {
public:
    explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

/// A numerical routine failed to converge within its iteration budget.
/// CLI exit code 3.
class ConvergenceError : public std::runtime_error {
public:
    explicit ConvergenceError(const std::string& what) : std::runtime_error(what) {}
};

} // namespace timeliner
