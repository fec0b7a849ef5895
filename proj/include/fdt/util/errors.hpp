#ifndef FDT_UTIL_ERRORS_HPP_
#define FDT_UTIL_ERRORS_HPP_

#include <stdexcept>
#include <string>

namespace fdt {

// Bad flags or flag combinations; CLI exit code 1.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Broken configs, missing/unknown keys, integrity mismatches; CLI exit code 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed or inconsistent data files; CLI exit code 2.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace fdt

#endif  // FDT_UTIL_ERRORS_HPP_
