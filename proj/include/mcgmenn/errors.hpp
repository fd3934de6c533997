#pragma once

#include <stdexcept>
#include <string>

namespace mcgmenn {

/// Process exit codes used by the command-line tool.
enum class ExitCode : int {
  success = 0,
  configuration = 2,
  data = 3,
  numerical = 4,
};

/// Base of every error raised by the library. Each error carries the exit
/// code the CLI reports for it.
class Error : public std::runtime_error {
 public:
  Error(const std::string& what, ExitCode code) : std::runtime_error(what), code_(code) {}
  ExitCode code() const noexcept { return code_; }

 private:
  ExitCode code_;
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(what, ExitCode::configuration) {}
};

class DataError : public Error {
 public:
  explicit DataError(const std::string& what) : Error(what, ExitCode::data) {}
};

/// Matrix or table dimensions do not line up.
class ShapeError : public DataError {
 public:
  explicit ShapeError(const std::string& what) : DataError("shape error: " + what) {}
};

/// Non-finite loss, gradient, or energy; divergent sampler.
class NumericalError : public Error {
 public:
  explicit NumericalError(const std::string& what) : Error(what, ExitCode::numerical) {}
};

/// A documented precondition was violated by the caller.
class ContractError : public Error {
 public:
  explicit ContractError(const std::string& what)
      : Error("contract violation: " + what, ExitCode::configuration) {}
};

namespace detail {

inline void require(bool ok, const char* what) {
  if (!ok) throw ContractError(what);
}

inline void require_shape(bool ok, const std::string& what) {
  if (!ok) throw ShapeError(what);
}

}  // namespace detail
}  // namespace mcgmenn
