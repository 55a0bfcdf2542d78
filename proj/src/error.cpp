#include "hybridrag/error.hpp"

namespace hybridrag {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
    case ErrorCode::kUnsupportedFormat: return "UnsupportedFormat";
    case ErrorCode::kDecodeError: return "DecodeError";
    case ErrorCode::kParseError: return "ParseError";
    case ErrorCode::kIoError: return "IoError";
    case ErrorCode::kNotFound: return "NotFound";
    case ErrorCode::kDuplicateDocument: return "DuplicateDocument";
    case ErrorCode::kDuplicateChunk: return "DuplicateChunk";
    case ErrorCode::kIndexWriteError: return "IndexWriteError";
    case ErrorCode::kEmptyIndex: return "EmptyIndex";
    case ErrorCode::kEmptyStore: return "EmptyStore";
    case ErrorCode::kDimensionMismatch: return "DimensionMismatch";
    case ErrorCode::kProviderUnavailable: return "ProviderUnavailable";
    case ErrorCode::kEndpointUnavailable: return "EndpointUnavailable";
    case ErrorCode::kModelError: return "ModelError";
    case ErrorCode::kTimeout: return "Timeout";
    case ErrorCode::kBindError: return "BindError";
    case ErrorCode::kEmptyResults: return "EmptyResults";
    case ErrorCode::kEmptyInput: return "EmptyInput";
    case ErrorCode::kInsufficientQueries: return "InsufficientQueries";
    case ErrorCode::kMalformedVerdict: return "MalformedVerdict";
    case ErrorCode::kBudgetExhausted: return "BudgetExhausted";
  }
  return "Unknown";
}

}  // namespace hybridrag
