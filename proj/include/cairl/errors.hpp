#pragma once

#include <stdexcept>
#include <string>

namespace cairl {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration or violated input invariant (CLI exit code 2).
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Non-finite loss or parameters during training (CLI exit code 3).
class DivergenceError : public Error {
 public:
  using Error::Error;
};

class DomainError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class EmptyInputError : public Error {
 public:
  using Error::Error;
};

class UnsupportedModelError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// Malformed text input; `line` is 1-based, 0 when unknown.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, long line = 0)
      : Error(line > 0 ? what + " (line " + std::to_string(line) + ")" : what), line_(line) {}
  long line() const noexcept { return line_; }

 private:
  long line_;
};

/// A planner ran out of sweeps before reaching its tolerance.
class IterationLimitError : public Error {
 public:
  IterationLimitError(const std::string& what, double residual)
      : Error(what + " (final residual " + std::to_string(residual) + ")"), residual_(residual) {}
  double residual() const noexcept { return residual_; }

 private:
  double residual_;
};

/// Some behavior-policy probability is zero on an observed (state, action) pair.
class OverlapError : public Error {
 public:
  OverlapError(long state, long action)
      : Error("overlap violation: behavior probability is zero at state " + std::to_string(state) +
              ", action " + std::to_string(action)),
        state_(state),
        action_(action) {}
  long state() const noexcept { return state_; }
  long action() const noexcept { return action_; }

 private:
  long state_;
  long action_;
};

}  // namespace cairl
