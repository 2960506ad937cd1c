#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace mbtirank {

enum class ErrorCode {
  kInvalidType,
  kEmptyList,
  kDuplicateEntry,
  kWrongLength,
  kGroupTooSmall,
  kShapeMismatch,
  kConfigInvalid,
  kLengthMismatch,
  kEmptyInput,
  kEmptyPrediction,
  kFileNotFound,
  kSchemaError,
  kUnknownUserId,
  kJoinError,
  kParseError,
};

const char* to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

// Raised by line-oriented readers. `line` is 1-based.
class SchemaError : public Error {
 public:
  SchemaError(std::size_t line, const std::string& reason)
      : Error(ErrorCode::kSchemaError,
              "line " + std::to_string(line) + ": " + reason),
        line_(line),
        reason_(reason) {}

  std::size_t line() const noexcept { return line_; }
  const std::string& reason() const noexcept { return reason_; }

 private:
  std::size_t line_;
  std::string reason_;
};

}  // namespace mbtirank
