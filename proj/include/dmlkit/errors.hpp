#pragma once

#include <stdexcept>
#include <string>

namespace dmlkit {

/// Invalid configuration: bad keys, out-of-range parameters, contradictory flags.
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

/// Defective input data: missing files, malformed rows, domain violations.
class DataError : public std::runtime_error {
public:
    explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

/// Numeric failure during estimation: rank deficiency, degenerate variance, empty folds.
class NumericError : public std::runtime_error {
public:
    explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace dmlkit
