#pragma once

#include <stdexcept>
#include <string>

namespace lrd {

/// Failure categories surfaced to the command line as distinct exit codes.
enum class ExitCode : int {
  kSuccess = 0,
  kConfigError = 2,
  kMissingInput = 3,
  kNumericFailure = 4,
};

class Error : public std::runtime_error {
 public:
  Error(ExitCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  ExitCode code() const noexcept { return code_; }

 private:
  ExitCode code_;
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(ExitCode::kConfigError, what) {}
};

class MissingInputError : public Error {
 public:
  explicit MissingInputError(const std::string& what)
      : Error(ExitCode::kMissingInput, "missing input: " + what) {}
};

class NumericError : public Error {
 public:
  explicit NumericError(const std::string& what) : Error(ExitCode::kNumericFailure, what) {}
};

/// Raised by the teacher integrator when a non-finite value appears.
class InstabilityError : public NumericError {
 public:
  InstabilityError(double t, const std::string& what) : NumericError(what), time_(t) {}
  double time() const noexcept { return time_; }

 private:
  double time_;
};

}  // namespace lrd
