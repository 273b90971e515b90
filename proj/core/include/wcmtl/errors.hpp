#pragma once

#include <stdexcept>
#include <string>

namespace wcmtl {

// Each class maps to one CLI exit code (1, 2, 3 respectively).

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A non-finite loss, gradient or weight. Usually a mis-scaled learning rate.
class NumericFault : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace wcmtl
