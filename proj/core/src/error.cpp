#include "hintloop/error.hpp"

namespace hintloop {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kParse: return "parse_error";
    case ErrorCode::kValidation: return "validation_error";
    case ErrorCode::kNotFound: return "not_found";
    case ErrorCode::kDuplicate: return "duplicate";
    case ErrorCode::kOutOfRange: return "out_of_range";
    case ErrorCode::kDimensionMismatch: return "dimension_mismatch";
    case ErrorCode::kContract: return "contract_violation";
    case ErrorCode::kReference: return "reference_error";
    case ErrorCode::kLeaseExpired: return "lease_expired";
    case ErrorCode::kAlreadySubmitted: return "already_submitted";
    case ErrorCode::kNoPositives: return "no_positives";
    case ErrorCode::kIo: return "io_error";
  }
  return "unknown";
}

}  // namespace hintloop
