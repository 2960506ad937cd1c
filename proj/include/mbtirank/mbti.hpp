#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace mbtirank {

/// Number of letter positions in a type code.
inline constexpr int kDimensions = 4;
/// Number of distinct type codes.
inline constexpr int kTypeCount = 16;

/// The two letters allowed at each position, in E/I, S/N, T/F, J/P order.
inline constexpr std::array<std::array<char, 2>, kDimensions> kAlphabet{{
    {'E', 'I'},
    {'S', 'N'},
    {'T', 'F'},
    {'J', 'P'},
}};

/// One of the 16 four-letter personality codes.
///
/// Stored as a 4-bit index: bit (3 - p) is set when position p holds the
/// second letter of its alphabet, so index 0 is ESTJ and index 15 is INFP.
class MbtiType {
 public:
  constexpr MbtiType() = default;

  /// Precondition: 0 <= index < 16.
  static constexpr MbtiType from_index(int index) {
    MbtiType t;
    t.bits_ = static_cast<std::uint8_t>(index & 0xF);
    return t;
  }

  /// Case-insensitive; surrounding ASCII whitespace is ignored.
  static std::optional<MbtiType> try_parse(std::string_view text);
  /// Throws Error(kInvalidType).
  static MbtiType parse(std::string_view text);

  constexpr int index() const { return bits_; }

  /// Letter at `position` in [0, 4).
  constexpr char letter(int position) const {
    return kAlphabet[position][(bits_ >> (kDimensions - 1 - position)) & 1];
  }

  /// 0 for the first letter of the position's alphabet, 1 for the second.
  constexpr int pole(int position) const {
    return (bits_ >> (kDimensions - 1 - position)) & 1;
  }

  constexpr MbtiType opposite() const { return from_index(bits_ ^ 0xF); }

  std::string code() const;

  static constexpr std::array<MbtiType, kTypeCount> all() {
    std::array<MbtiType, kTypeCount> out{};
    for (int i = 0; i < kTypeCount; ++i) out[i] = from_index(i);
    return out;
  }

  friend constexpr auto operator<=>(MbtiType, MbtiType) = default;

 private:
  std::uint8_t bits_ = 0;
};

MbtiType parse_type(std::string_view text);

/// Character matching: 1 when the letters are equal, else 0.
constexpr int delta(char a, char b) { return a == b ? 1 : 0; }

struct DimWeightConfig {
  double epsilon = 0.1;

  /// Throws Error(kConfigInvalid) unless epsilon is finite and >= 0.
  void validate() const;
};

/// Weight of the 1-based dimension `dimension`: 1 + epsilon * dimension.
double dimension_weight(int dimension, const DimWeightConfig& cfg);

/// Weighted count of matching letter positions; position p carries weight
/// 1 + epsilon * (p + 1).
double dim_similarity(MbtiType pred, MbtiType truth,
                      const DimWeightConfig& cfg = {});

/// Ordered list of distinct types, rank 1 first.
class RankedPrediction {
 public:
  RankedPrediction() = default;
  /// Throws Error(kDuplicateEntry) if a type repeats.
  explicit RankedPrediction(std::vector<MbtiType> types);

  const std::vector<MbtiType>& types() const { return types_; }
  std::size_t size() const { return types_.size(); }
  bool empty() const { return types_.empty(); }
  MbtiType operator[](std::size_t i) const { return types_[i]; }
  MbtiType front() const { return types_.front(); }
  auto begin() const { return types_.begin(); }
  auto end() const { return types_.end(); }
  bool contains(MbtiType t) const;

  friend bool operator==(const RankedPrediction&,
                         const RankedPrediction&) = default;

 private:
  std::vector<MbtiType> types_;
};

}  // namespace mbtirank
