#pragma once

#include <stdexcept>
#include <string>

namespace shmfcn {

/// Precondition violated by the caller (bad label, bad shape, bad rate...).
class DomainError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// A numerical routine failed (non-SPD matrix, NaN in a layer, no convergence).
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// On-disk artifact is unreadable, truncated, or inconsistent.
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Run configuration failed schema validation.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace shmfcn
