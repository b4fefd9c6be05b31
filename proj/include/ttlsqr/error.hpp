#pragma once

#include <stdexcept>
#include <string>

namespace ttlsqr {

enum class ErrorCode {
  invalid_argument,
  dimension_mismatch,
  limit_exceeded,
  numerical,
  io,
  parse,
};

/// Exception type for every failure raised by the library. The code lets the
/// C API and the CLI map failures onto stable status values.
class Error : public std::runtime_error {
public:
  Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) { throw Error(code, what); }

inline void require(bool condition, ErrorCode code, const std::string& what) {
  if (!condition)
    fail(code, what);
}

} // namespace ttlsqr
