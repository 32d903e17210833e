#pragma once

#include <stdexcept>
#include <string>

namespace gprinv {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid input, configuration or file contents. The CLI maps this to exit code 2.
class InputError : public Error {
 public:
  using Error::Error;
};

/// Numerical failure inside a solver (non-finite fields, singular matrices).
/// The CLI maps this to exit code 3.
class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace gprinv
