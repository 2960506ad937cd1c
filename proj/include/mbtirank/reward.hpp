#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mbtirank/completion.hpp"
#include "mbtirank/mbti.hpp"

namespace mbtirank {

struct RewardConfig {
  /// Length of the ranked answer list.
  int k = 3;
  DimWeightConfig dim_weight;

  /// Throws Error(kConfigInvalid) unless 1 <= k <= 16 and the weight is valid.
  void validate() const;
};

/// Which terms contribute to `total`. Both components are still measured
/// when a term is switched off, so training logs can monitor them.
struct RewardTerms {
  bool ndcg = true;
  bool ds = true;
};

struct RewardBreakdown {
  double ndcg = 0.0;
  double ds = 0.0;
  double total = 0.0;
  bool valid = false;
  /// Set when the completion failed to parse.
  std::string parse_error;
};

/// Sum over the first k entries of (2^s_i - 1) / log2(i + 1), i 1-based.
/// Throws Error(kEmptyList) when k < 1 or scores is empty, and
/// Error(kWrongLength) when scores has fewer than k entries.
double dcg_at_k(std::span<const double> scores, int k);

/// dim_similarity of each predicted type against the truth, in list order.
std::vector<double> similarity_scores(const RankedPrediction& pred,
                                      MbtiType truth,
                                      const DimWeightConfig& cfg);

/// DCG of the predicted order over DCG of the same scores sorted
/// descending. Returns 0 when the ideal DCG is 0.
/// Throws Error(kWrongLength) when pred has fewer than cfg.k entries.
double ndcg_at_k(const RankedPrediction& pred, MbtiType truth,
                 const RewardConfig& cfg);

/// Similarity of the rank-1 answer. Throws Error(kEmptyPrediction).
double ds_reward(const RankedPrediction& pred, MbtiType truth,
                 const RewardConfig& cfg);

/// Reward of an already-parsed prediction of length cfg.k.
RewardBreakdown score_prediction(const RankedPrediction& pred, MbtiType truth,
                                 const RewardConfig& cfg,
                                 RewardTerms terms = {});

/// Parses and scores a raw completion. Malformed completions score zero
/// with valid = false; this never throws for any input text.
RewardBreakdown total_reward(std::string_view completion, MbtiType truth,
                             const RewardConfig& cfg, RewardTerms terms = {},
                             const ParseOptions& options = {});

}  // namespace mbtirank
