#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "mbtirank/policy.hpp"
#include "mbtirank/reward.hpp"

namespace mbtirank {

inline constexpr double kDefaultStdFloor = 1e-8;

struct GrpoConfig {
  int group_size = 16;
  /// Clip range of the probability ratio; unrelated to the dimension weight.
  double clip_epsilon = 0.2;
  double kl_beta = 0.01;
  double learning_rate = 0.05;
  double std_floor = kDefaultStdFloor;
  int steps = 2000;
  /// Prompt groups sampled per step; their objectives are averaged.
  int groups_per_step = 1;
  std::uint64_t seed = 0;

  /// Throws Error(kConfigInvalid).
  void validate() const;
};

/// A group of G rollouts for one prompt.
struct RolloutGroup {
  Eigen::VectorXd features;
  std::vector<Sequence> completions;
  std::vector<double> rewards;
  std::vector<double> advantages;
  /// Per-token log-probabilities under the sampling (old) policy.
  std::vector<std::vector<double>> old_logprobs;
  /// Per-token log-probabilities under the frozen reference policy.
  std::vector<std::vector<double>> ref_logprobs;

  int size() const { return static_cast<int>(completions.size()); }
};

/// (r_i - mean) / max(std, std_floor) with the population std. All-equal
/// rewards give exact zeros. Throws Error(kGroupTooSmall) for fewer than 2.
std::vector<double> group_advantages(std::span<const double> rewards,
                                     double std_floor = kDefaultStdFloor);

/// pi_new / pi_old for one token, from log-probabilities.
double token_ratio(double new_logprob, double old_logprob);

/// Nonnegative per-token KL estimate r - log r - 1 with r = pi_ref / pi.
double kl_estimate(double logprob, double ref_logprob);

/// Draws G sequences from `policy` and records their per-token
/// log-probabilities as old_logprobs. Rewards and advantages are left empty.
RolloutGroup sample_rollouts(const ToyPolicy& policy,
                             const Eigen::VectorXd& features, int group_size,
                             std::uint64_t seed);

/// Fills ref_logprobs from the reference policy.
void attach_reference(RolloutGroup& group, const ToyPolicy& ref);

struct ObjectiveResult {
  double value = 0.0;
  /// d value / d theta, same shape as the policy weights.
  Eigen::MatrixXd gradient;
  /// Mean per-token KL estimate.
  double kl = 0.0;
  /// Fraction of tokens whose clipped term is the active minimum.
  double clip_fraction = 0.0;
};

/// Clipped group-relative surrogate minus the KL penalty, both averaged per
/// token then per sequence:
///
///   1/G sum_i 1/T_i sum_t [ min(p A_i, clip(p, 1-eps, 1+eps) A_i)
///                           - beta * KL_t ]
///
/// with p = pi_theta / pi_old per token. The gradient is exact.
/// Throws Error(kShapeMismatch) if the group is not fully populated.
ObjectiveResult grpo_objective(const RolloutGroup& group,
                               const ToyPolicy& policy, const GrpoConfig& cfg);

// ---------------------------------------------------------------------------
// Training

struct Example {
  Eigen::VectorXd features;
  MbtiType truth;
};

struct StepLog {
  int step = 0;
  double mean_reward = 0.0;
  double mean_ndcg = 0.0;
  double mean_ds = 0.0;
  double kl = 0.0;
  double clip_fraction = 0.0;
};

struct TrainOptions {
  RewardTerms terms;
  /// Starting weights; zero weights when absent. Also used as the frozen
  /// reference policy.
  std::optional<ToyPolicy> initial;
  /// Head layout of the zero-initialized policy when `initial` is absent.
  Heads heads = Heads::kShared;
  std::function<void(const StepLog&)> on_step;
};

struct TrainResult {
  ToyPolicy policy;
  std::vector<StepLog> log;
};

/// Per step: refresh the old policy; for each of groups_per_step prompts
/// sample G ranked completions, render and score them through the
/// completion parser and reward kernel, and normalize advantages within the
/// group; then take one gradient-ascent step on the averaged objective.
/// Throws Error(kConfigInvalid) for bad configs or an empty dataset.
TrainResult train(std::span<const Example> dataset, const GrpoConfig& cfg,
                  const RewardConfig& reward_cfg,
                  const TrainOptions& options = {});

/// Renders a sequence as a canonical completion with an empty think block.
std::string render_completion(std::span<const int> seq);

// ---------------------------------------------------------------------------
// Synthetic ranking task

struct SyntheticConfig {
  int feature_dim = 32;
  double noise_sigma = 0.1;
  /// Norm of each type prototype.
  double prototype_scale = 1.0;
  int train_per_type = 32;
  int test_per_type = 8;
  std::uint64_t seed = 0;
};

struct SyntheticTask {
  /// Row t is the prototype of type index t.
  Eigen::MatrixXd prototypes;
  std::vector<Example> train;
  std::vector<Example> test;
};

/// Each type owns a prototype (orthonormal directions when feature_dim >= 16,
/// scaled); users are prototype + isotropic Gaussian noise.
SyntheticTask make_synthetic_task(const SyntheticConfig& cfg);

enum class Decoding {
  /// Most probable type at each step.
  kGreedy,
  /// Exact expectation over the policy's sampling distribution.
  kExpected,
};

/// Mean NDCG@k of the policy's rankings over `examples`.
double mean_ndcg(const ToyPolicy& policy, std::span<const Example> examples,
                 const RewardConfig& reward_cfg,
                 Decoding decoding = Decoding::kGreedy);

}  // namespace mbtirank
