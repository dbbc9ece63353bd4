#pragma once

#include <stdexcept>
#include <string>

namespace mlpref {

// Bad input data or I/O failure. The CLI maps this to exit status 1.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid arguments or configuration. The CLI maps this to exit status 2.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace mlpref
