#pragma once

#include <stdexcept>
#include <string>

namespace nvmag {

// Numeric values double as CLI exit codes and C API status codes.
enum class ErrorCode : int {
  InvalidArgument = 2,
  Numerical = 3,
  Io = 4,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void throw_invalid(const std::string& what) {
  throw Error(ErrorCode::InvalidArgument, what);
}

[[noreturn]] inline void throw_numerical(const std::string& what) {
  throw Error(ErrorCode::Numerical, what);
}

[[noreturn]] inline void throw_io(const std::string& what) {
  throw Error(ErrorCode::Io, what);
}

}  // namespace nvmag
