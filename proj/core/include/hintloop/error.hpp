#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace hintloop {

enum class ErrorCode {
  kParse,
  kValidation,
  kNotFound,
  kDuplicate,
  kOutOfRange,
  kDimensionMismatch,
  kContract,
  kReference,
  kLeaseExpired,
  kAlreadySubmitted,
  kNoPositives,
  kIo,
};

std::string_view to_string(ErrorCode code);

/// Every failure raised by the library carries a machine-readable code so the
/// HTTP layer and the CLI can map it onto status codes / exit codes.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace hintloop
