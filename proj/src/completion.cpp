#include "mbtirank/completion.hpp"

#include <array>
#include <vector>

#include "mbtirank/text.hpp"

namespace mbtirank {
namespace {

constexpr std::string_view kThinkOpen = "<think>";
constexpr std::string_view kThinkClose = "</think>";
constexpr std::string_view kAnswerOpen = "<answer>";
constexpr std::string_view kAnswerClose = "</answer>";

ParseFailure fail(ParseErrorKind kind, std::string detail = {}) {
  return ParseFailure{kind, std::move(detail)};
}

}  // namespace

const char* to_string(ParseErrorKind kind) {
  switch (kind) {
    case ParseErrorKind::kMissingAnswerTag: return "MissingAnswerTag";
    case ParseErrorKind::kMalformedList: return "MalformedList";
    case ParseErrorKind::kWrongLength: return "WrongLength";
    case ParseErrorKind::kDuplicateEntry: return "DuplicateEntry";
    case ParseErrorKind::kInvalidEntry: return "InvalidEntry";
  }
  return "Unknown";
}

std::string ParseFailure::describe() const {
  std::string s = to_string(kind);
  if (!detail.empty() || kind == ParseErrorKind::kInvalidEntry) {
    s += "(" + detail + ")";
  }
  return s;
}

ParseOutcome try_parse_completion(std::string_view text, int expected_k,
                                  const ParseOptions& options) {
  std::string think;
  std::size_t cursor = 0;
  if (auto open = text.find(kThinkOpen); open != std::string_view::npos) {
    const std::size_t body = open + kThinkOpen.size();
    if (auto close = text.find(kThinkClose, body);
        close != std::string_view::npos) {
      think.assign(text.substr(body, close - body));
      cursor = close + kThinkClose.size();
    }
  }

  const std::size_t open = text.find(kAnswerOpen, cursor);
  if (open == std::string_view::npos) {
    return fail(ParseErrorKind::kMissingAnswerTag);
  }
  const std::size_t body = open + kAnswerOpen.size();
  std::size_t close = text.find(kAnswerClose, body);
  if (close == std::string_view::npos && options.lenient_closer) {
    close = text.find(kAnswerOpen, body);
  }
  if (close == std::string_view::npos) {
    return fail(ParseErrorKind::kMissingAnswerTag);
  }

  const std::string_view list = text::trim(text.substr(body, close - body));
  if (list.size() < 2 || list.front() != '[' || list.back() != ']') {
    return fail(ParseErrorKind::kMalformedList);
  }
  const std::string_view inner = text::trim(list.substr(1, list.size() - 2));
  if (inner.empty()) return fail(ParseErrorKind::kMalformedList);

  std::vector<MbtiType> types;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = inner.find(',', start);
    const std::string_view token = text::trim(
        inner.substr(start, comma == std::string_view::npos
                                ? std::string_view::npos
                                : comma - start));
    auto t = MbtiType::try_parse(token);
    if (!t) return fail(ParseErrorKind::kInvalidEntry, std::string(token));
    types.push_back(*t);
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }

  std::array<bool, kTypeCount> seen{};
  for (MbtiType t : types) {
    if (seen[t.index()]) return fail(ParseErrorKind::kDuplicateEntry, t.code());
    seen[t.index()] = true;
  }
  if (static_cast<int>(types.size()) != expected_k) {
    return fail(ParseErrorKind::kWrongLength, std::to_string(types.size()));
  }
  return ParsedCompletion{std::move(think), RankedPrediction(std::move(types))};
}

ParsedCompletion parse_completion(std::string_view text, int expected_k,
                                  const ParseOptions& options) {
  auto outcome = try_parse_completion(text, expected_k, options);
  if (auto* failure = std::get_if<ParseFailure>(&outcome)) {
    throw CompletionError(std::move(*failure));
  }
  return std::get<ParsedCompletion>(std::move(outcome));
}

std::string format_sft_target(std::string_view think,
                              const RankedPrediction& answers) {
  std::string out;
  out.reserve(think.size() + 32 + answers.size() * 6);
  out += kThinkOpen;
  out += think;
  out += kThinkClose;
  out += kAnswerOpen;
  out += '[';
  for (std::size_t i = 0; i < answers.size(); ++i) {
    if (i) out += ", ";
    out += answers[i].code();
  }
  out += ']';
  out += kAnswerClose;
  return out;
}

}  // namespace mbtirank
