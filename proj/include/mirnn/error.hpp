#pragma once

#include <stdexcept>
#include <string>

namespace mirnn {

enum class ErrorCode {
  binding,
  numeric_overflow,
  unsupported_order,
  shape,
  config,
  domain,
  partition,
  degenerate_overlap,
  degenerate_domain,
  degenerate_target,
  divergence,
  not_found,
  io,
};

const char* to_string(ErrorCode code) noexcept;

/// Every failure raised by the library carries one of the codes above so the
/// C API and the CLI can map it onto a status without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace mirnn
