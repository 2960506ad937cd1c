#include "mbtirank/mbti.hpp"

#include <algorithm>
#include <cmath>

#include "mbtirank/error.hpp"
#include "mbtirank/text.hpp"

namespace mbtirank {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidType: return "InvalidType";
    case ErrorCode::kEmptyList: return "EmptyList";
    case ErrorCode::kDuplicateEntry: return "DuplicateEntry";
    case ErrorCode::kWrongLength: return "WrongLength";
    case ErrorCode::kGroupTooSmall: return "GroupTooSmall";
    case ErrorCode::kShapeMismatch: return "ShapeMismatch";
    case ErrorCode::kConfigInvalid: return "ConfigInvalid";
    case ErrorCode::kLengthMismatch: return "LengthMismatch";
    case ErrorCode::kEmptyInput: return "EmptyInput";
    case ErrorCode::kEmptyPrediction: return "EmptyPrediction";
    case ErrorCode::kFileNotFound: return "FileNotFound";
    case ErrorCode::kSchemaError: return "SchemaError";
    case ErrorCode::kUnknownUserId: return "UnknownUserId";
    case ErrorCode::kJoinError: return "JoinError";
    case ErrorCode::kParseError: return "ParseError";
  }
  return "Unknown";
}

std::optional<MbtiType> MbtiType::try_parse(std::string_view input) {
  const std::string_view s = text::trim(input);
  if (s.size() != kDimensions) return std::nullopt;
  int bits = 0;
  for (int p = 0; p < kDimensions; ++p) {
    const char c = text::to_upper(s[p]);
    int pole;
    if (c == kAlphabet[p][0]) {
      pole = 0;
    } else if (c == kAlphabet[p][1]) {
      pole = 1;
    } else {
      return std::nullopt;
    }
    bits = (bits << 1) | pole;
  }
  return from_index(bits);
}

MbtiType MbtiType::parse(std::string_view text) {
  if (auto t = try_parse(text)) return *t;
  throw Error(ErrorCode::kInvalidType,
              "invalid type code '" + std::string(text) + "'");
}

std::string MbtiType::code() const {
  std::string s(kDimensions, ' ');
  for (int p = 0; p < kDimensions; ++p) s[p] = letter(p);
  return s;
}

MbtiType parse_type(std::string_view text) { return MbtiType::parse(text); }

void DimWeightConfig::validate() const {
  if (!std::isfinite(epsilon) || epsilon < 0.0) {
    throw Error(ErrorCode::kConfigInvalid,
                "dimension weight epsilon must be finite and >= 0");
  }
}

double dimension_weight(int dimension, const DimWeightConfig& cfg) {
  return 1.0 + cfg.epsilon * dimension;
}

double dim_similarity(MbtiType pred, MbtiType truth,
                      const DimWeightConfig& cfg) {
  double s = 0.0;
  for (int p = 0; p < kDimensions; ++p) {
    s += dimension_weight(p + 1, cfg) * delta(pred.letter(p), truth.letter(p));
  }
  return s;
}

RankedPrediction::RankedPrediction(std::vector<MbtiType> types)
    : types_(std::move(types)) {
  std::array<bool, kTypeCount> seen{};
  for (MbtiType t : types_) {
    if (seen[t.index()]) {
      throw Error(ErrorCode::kDuplicateEntry,
                  "duplicate type " + t.code() + " in ranked prediction");
    }
    seen[t.index()] = true;
  }
}

bool RankedPrediction::contains(MbtiType t) const {
  return std::find(types_.begin(), types_.end(), t) != types_.end();
}

}  // namespace mbtirank
