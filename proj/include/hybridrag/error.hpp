#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace hybridrag {

enum class ErrorCode {
  kInvalidArgument,
  kUnsupportedFormat,
  kDecodeError,
  kParseError,
  kIoError,
  kNotFound,
  kDuplicateDocument,
  kDuplicateChunk,
  kIndexWriteError,
  kEmptyIndex,
  kEmptyStore,
  kDimensionMismatch,
  kProviderUnavailable,
  kEndpointUnavailable,
  kModelError,
  kTimeout,
  kBindError,
  kEmptyResults,
  kEmptyInput,
  kInsufficientQueries,
  kMalformedVerdict,
  kBudgetExhausted,
};

std::string_view to_string(ErrorCode code) noexcept;

/// Base exception for every failure surfaced by the library. The code is
/// stable and meant for dispatch; the message is for humans.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace hybridrag
