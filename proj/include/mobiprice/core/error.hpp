#pragma once

#include <stdexcept>
#include <string>

namespace mobiprice {

// Bad configuration or command-line usage. The CLI maps this to exit code 1.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Unusable input data (missing files, too many malformed rows, ...). Exit code 2.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace mobiprice
