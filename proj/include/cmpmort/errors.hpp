#ifndef CMPMORT_ERRORS_HPP
#define CMPMORT_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace cmpmort {

// Error taxonomy mirrored by the CLI exit codes:
//   ConfigError -> 2, DataError -> 3, NumericError -> 4, ConvergenceError -> 5.

class ConfigError : public std::runtime_error {
public:
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

class DataError : public std::runtime_error {
public:
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

class NumericError : public std::runtime_error {
public:
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

class ConvergenceError : public std::runtime_error {
public:
  explicit ConvergenceError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace cmpmort

#endif
