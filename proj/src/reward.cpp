#include "mbtirank/reward.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include "mbtirank/error.hpp"

namespace mbtirank {

void RewardConfig::validate() const {
  if (k < 1 || k > kTypeCount) {
    throw Error(ErrorCode::kConfigInvalid, "k must be in [1, 16]");
  }
  dim_weight.validate();
}

double dcg_at_k(std::span<const double> scores, int k) {
  if (k < 1 || scores.empty()) {
    throw Error(ErrorCode::kEmptyList, "dcg_at_k needs k >= 1 and scores");
  }
  if (scores.size() < static_cast<std::size_t>(k)) {
    throw Error(ErrorCode::kWrongLength, "fewer scores than k");
  }
  double dcg = 0.0;
  for (int i = 0; i < k; ++i) {
    dcg += (std::exp2(scores[i]) - 1.0) / std::log2(i + 2.0);
  }
  return dcg;
}

std::vector<double> similarity_scores(const RankedPrediction& pred,
                                      MbtiType truth,
                                      const DimWeightConfig& cfg) {
  std::vector<double> s;
  s.reserve(pred.size());
  for (MbtiType t : pred) s.push_back(dim_similarity(t, truth, cfg));
  return s;
}

double ndcg_at_k(const RankedPrediction& pred, MbtiType truth,
                 const RewardConfig& cfg) {
  if (pred.size() < static_cast<std::size_t>(cfg.k)) {
    throw Error(ErrorCode::kWrongLength, "prediction shorter than k");
  }
  std::vector<double> scores = similarity_scores(pred, truth, cfg.dim_weight);
  scores.resize(cfg.k);
  const double dcg = dcg_at_k(scores, cfg.k);
  std::sort(scores.begin(), scores.end(), std::greater<>());
  const double idcg = dcg_at_k(scores, cfg.k);
  if (idcg <= 0.0) return 0.0;
  return dcg / idcg;
}

double ds_reward(const RankedPrediction& pred, MbtiType truth,
                 const RewardConfig& cfg) {
  if (pred.empty()) {
    throw Error(ErrorCode::kEmptyPrediction, "empty ranked prediction");
  }
  return dim_similarity(pred.front(), truth, cfg.dim_weight);
}

RewardBreakdown score_prediction(const RankedPrediction& pred, MbtiType truth,
                                 const RewardConfig& cfg, RewardTerms terms) {
  RewardBreakdown r;
  r.valid = true;
  r.ndcg = ndcg_at_k(pred, truth, cfg);
  r.ds = ds_reward(pred, truth, cfg);
  r.total = (terms.ndcg ? r.ndcg : 0.0) + (terms.ds ? r.ds : 0.0);
  return r;
}

RewardBreakdown total_reward(std::string_view completion, MbtiType truth,
                             const RewardConfig& cfg, RewardTerms terms,
                             const ParseOptions& options) {
  auto outcome = try_parse_completion(completion, cfg.k, options);
  if (auto* failure = std::get_if<ParseFailure>(&outcome)) {
    RewardBreakdown r;
    r.parse_error = failure->describe();
    return r;
  }
  return score_prediction(std::get<ParsedCompletion>(outcome).answers, truth,
                          cfg, terms);
}

}  // namespace mbtirank
