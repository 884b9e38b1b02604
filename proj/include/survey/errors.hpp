#pragma once

#include <stdexcept>
#include <string>

namespace survey {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or out-of-domain user input (files, flags, weight vectors).
class InputError : public Error {
 public:
  using Error::Error;
};

/// The design cannot produce the requested sample size (e.g. P{size = n} = 0).
class DegenerateDesign : public Error {
 public:
  using Error::Error;
};

/// An iterative solver stopped before reaching its tolerance.
class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, double residual)
      : Error(what), residual_(residual) {}
  double residual() const { return residual_; }

 private:
  double residual_;
};

/// A hard cap (rejection rounds, enumeration size) was exceeded.
class CapExceeded : public Error {
 public:
  using Error::Error;
};

}  // namespace survey
