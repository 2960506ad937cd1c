#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mbtirank/mbti.hpp"
#include "mbtirank/reward.hpp"

namespace mbtirank {

enum class F1Average {
  /// Unweighted mean over classes; classes with no support and no
  /// predictions are left out.
  kMacro,
  /// Global counts; equals accuracy when every prediction is present.
  kMicro,
  /// Per-class F1 weighted by support.
  kWeighted,
};

F1Average parse_f1_average(std::string_view name);

/// Rank-1 type. Throws Error(kEmptyPrediction).
MbtiType point_prediction(const RankedPrediction& pred);

struct BinaryF1 {
  double average = 0.0;
  std::array<double, kDimensions> per_dimension{};
};

/// Per-dimension two-class F1, averaged over the four dimensions.
/// A missing prediction (nullopt) counts as wrong for every class.
/// Throws Error(kLengthMismatch) or Error(kEmptyInput).
BinaryF1 binary_macro_f1(std::span<const std::optional<MbtiType>> preds,
                         std::span<const MbtiType> truths,
                         F1Average average = F1Average::kMacro);
BinaryF1 binary_macro_f1(std::span<const MbtiType> preds,
                         std::span<const MbtiType> truths,
                         F1Average average = F1Average::kMacro);

/// 16-class F1.
double multiclass_f1(std::span<const std::optional<MbtiType>> preds,
                     std::span<const MbtiType> truths,
                     F1Average average = F1Average::kMacro);
double multiclass_f1(std::span<const MbtiType> preds,
                     std::span<const MbtiType> truths,
                     F1Average average = F1Average::kMacro);

struct EvalReport {
  double binary_macro_f1 = 0.0;
  std::array<double, kDimensions> per_dimension_f1{};
  double multiclass_f1 = 0.0;
  double ndcg_at_k = 0.0;
  std::size_t n_samples = 0;
  std::size_t n_invalid = 0;
};

/// Metrics over aligned predictions and truths; a missing or invalid
/// prediction is wrong for F1 and scores 0 NDCG.
EvalReport evaluate(std::span<const std::optional<RankedPrediction>> preds,
                    std::span<const MbtiType> truths, const RewardConfig& cfg,
                    F1Average average = F1Average::kMacro);

struct EvalFileOptions {
  /// Missing or unknown users are a JoinError instead of invalid rows.
  bool strict = false;
  F1Average average = F1Average::kMacro;
  ParseOptions parse;
};

/// Prediction lines: {"user_id", "completion"} or {"user_id", "answers":
/// [codes]}. Truth lines: {"user_id", "label"} (posts are ignored).
/// Throws Error(kFileNotFound), SchemaError, or Error(kJoinError).
EvalReport evaluate_file(const std::filesystem::path& pred_path,
                         const std::filesystem::path& truth_path,
                         const RewardConfig& cfg,
                         const EvalFileOptions& options = {});

std::string format_report(const EvalReport& report);
std::string report_json(const EvalReport& report);

}  // namespace mbtirank
