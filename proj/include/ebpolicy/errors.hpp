#pragma once

#include <stdexcept>
#include <string>

namespace ebpolicy {

/// Malformed or inconsistent input data (CLI exit code 2).
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A numerical stage could not produce a valid result (CLI exit code 3).
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace ebpolicy
