#pragma once

#include <stdexcept>
#include <string>

namespace llhom {

/// Base exception for all failures raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A linear system (saddle point, scheme step, Gram) could not be solved.
class SolveError : public Error {
 public:
  using Error::Error;
};

}  // namespace llhom
