#pragma once

#include <string>
#include <string_view>
#include <variant>

#include "mbtirank/error.hpp"
#include "mbtirank/mbti.hpp"

namespace mbtirank {

// Completion grammar:
//
//   <think>REASONING</think><answer>[CODE, CODE, ..., CODE]</answer>
//
// The think block is optional. Only the first think block and the first
// answer block after it are read; anything after the answer closer is
// ignored. Tag names are matched byte-exactly (lowercase).

enum class ParseErrorKind {
  kMissingAnswerTag,
  kMalformedList,
  kWrongLength,
  kDuplicateEntry,
  kInvalidEntry,
};

const char* to_string(ParseErrorKind kind);

struct ParseFailure {
  ParseErrorKind kind;
  /// Offending token for kInvalidEntry, type code for kDuplicateEntry,
  /// actual length for kWrongLength; empty otherwise.
  std::string detail;

  /// e.g. "WrongLength(2)", "InvalidEntry(ABCD)".
  std::string describe() const;
};

struct ParsedCompletion {
  std::string think;
  RankedPrediction answers;
};

struct ParseOptions {
  /// Also accept a second "<answer>" as the closer of the answer block.
  bool lenient_closer = false;
};

using ParseOutcome = std::variant<ParsedCompletion, ParseFailure>;

/// Never throws on arbitrary input.
ParseOutcome try_parse_completion(std::string_view text, int expected_k,
                                  const ParseOptions& options = {});

class CompletionError : public Error {
 public:
  explicit CompletionError(ParseFailure failure)
      : Error(ErrorCode::kParseError, failure.describe()),
        failure_(std::move(failure)) {}

  const ParseFailure& failure() const noexcept { return failure_; }

 private:
  ParseFailure failure_;
};

/// Throws CompletionError.
ParsedCompletion parse_completion(std::string_view text, int expected_k,
                                  const ParseOptions& options = {});

/// Canonical training target: "<think>T</think><answer>[A, B, C]</answer>".
std::string format_sft_target(std::string_view think,
                              const RankedPrediction& answers);

}  // namespace mbtirank
