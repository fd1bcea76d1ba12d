#pragma once

#include <stdexcept>
#include <string>

namespace flm {

/// Failure category. The CLI maps these onto process exit codes.
enum class ErrorKind {
  Usage,      ///< bad arguments or configuration
  Data,       ///< malformed files, shape or task mismatches, IO
  Numerical,  ///< non-finite values, solver failure, resource caps
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) {
  throw Error(kind, what);
}

}  // namespace flm
