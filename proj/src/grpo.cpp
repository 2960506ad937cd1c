#include "mbtirank/grpo.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

#include "mbtirank/error.hpp"

namespace mbtirank {

void GrpoConfig::validate() const {
  auto bad = [](const char* what) {
    throw Error(ErrorCode::kConfigInvalid, what);
  };
  if (group_size < 2) bad("group_size must be >= 2");
  if (!(clip_epsilon > 0.0 && clip_epsilon < 1.0)) {
    bad("clip_epsilon must be in (0, 1)");
  }
  if (!(kl_beta >= 0.0) || !std::isfinite(kl_beta)) bad("kl_beta must be >= 0");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    bad("learning_rate must be > 0");
  }
  if (!(std_floor > 0.0)) bad("std_floor must be > 0");
  if (steps < 0) bad("steps must be >= 0");
  if (groups_per_step < 1) bad("groups_per_step must be >= 1");
}

std::vector<double> group_advantages(std::span<const double> rewards,
                                     double std_floor) {
  if (rewards.size() < 2) {
    throw Error(ErrorCode::kGroupTooSmall,
                "group advantages need at least 2 rewards");
  }
  const double n = static_cast<double>(rewards.size());
  std::vector<double> adv(rewards.size(), 0.0);
  if (std::all_of(rewards.begin(), rewards.end(),
                  [&](double r) { return r == rewards[0]; })) {
    return adv;
  }
  double mean = 0.0;
  for (double r : rewards) mean += r;
  mean /= n;
  // Second pass removes the rounding left in `mean`, so the advantages
  // stay centred even when the spread is tiny next to the mean.
  double shift = 0.0;
  for (std::size_t i = 0; i < rewards.size(); ++i) {
    adv[i] = rewards[i] - mean;
    shift += adv[i];
  }
  shift /= n;
  double var = 0.0;
  for (double& d : adv) {
    d -= shift;
    var += d * d;
  }
  const double denom = std::max(std::sqrt(var / n), std_floor);
  for (double& d : adv) d /= denom;
  return adv;
}

double token_ratio(double new_logprob, double old_logprob) {
  return std::exp(new_logprob - old_logprob);
}

double kl_estimate(double logprob, double ref_logprob) {
  const double log_r = ref_logprob - logprob;
  return std::exp(log_r) - log_r - 1.0;
}

RolloutGroup sample_rollouts(const ToyPolicy& policy,
                             const Eigen::VectorXd& features, int group_size,
                             std::uint64_t seed) {
  policy.check_features(features);
  RolloutGroup g;
  g.features = features;
  Rng rng(seed);
  g.completions.reserve(group_size);
  g.old_logprobs.reserve(group_size);
  const Eigen::MatrixXd z = policy.logits(features);
  for (int i = 0; i < group_size; ++i) {
    Sequence seq = policy.sample(features, rng);
    std::vector<double> lp;
    masked_logprobs(z, seq, lp, nullptr);
    g.completions.push_back(std::move(seq));
    g.old_logprobs.push_back(std::move(lp));
  }
  return g;
}

void attach_reference(RolloutGroup& group, const ToyPolicy& ref) {
  const Eigen::MatrixXd z = ref.logits(group.features);
  group.ref_logprobs.clear();
  for (const Sequence& seq : group.completions) {
    std::vector<double> lp;
    masked_logprobs(z, seq, lp, nullptr);
    group.ref_logprobs.push_back(std::move(lp));
  }
}

ObjectiveResult grpo_objective(const RolloutGroup& group,
                               const ToyPolicy& policy,
                               const GrpoConfig& cfg) {
  const std::size_t g = group.completions.size();
  if (g == 0 || group.advantages.size() != g || group.old_logprobs.size() != g ||
      group.ref_logprobs.size() != g) {
    throw Error(ErrorCode::kShapeMismatch,
                "rollout group is not fully populated");
  }
  for (std::size_t i = 0; i < g; ++i) {
    const std::size_t len = group.completions[i].size();
    if (len == 0 || group.old_logprobs[i].size() != len ||
        group.ref_logprobs[i].size() != len) {
      throw Error(ErrorCode::kShapeMismatch,
                  "per-token arrays disagree with sequence length");
    }
  }

  const Eigen::MatrixXd z = policy.logits(group.features);
  const double lo = 1.0 - cfg.clip_epsilon;
  const double hi = 1.0 + cfg.clip_epsilon;

  ObjectiveResult out;
  Eigen::MatrixXd dlogits = Eigen::MatrixXd::Zero(policy.k(), kTypeCount);
  std::vector<double> lp;
  Eigen::MatrixXd dz;
  std::size_t tokens = 0;
  std::size_t clipped_tokens = 0;
  double kl_sum = 0.0;

  for (std::size_t i = 0; i < g; ++i) {
    const Sequence& seq = group.completions[i];
    masked_logprobs(z, seq, lp, &dz);
    const double a = group.advantages[i];
    const double scale = 1.0 / (static_cast<double>(g) * seq.size());
    for (std::size_t t = 0; t < seq.size(); ++t) {
      const double p = token_ratio(lp[t], group.old_logprobs[i][t]);
      const double unclipped = p * a;
      const double clipped = std::clamp(p, lo, hi) * a;
      double surrogate;
      double d_surrogate;
      if (unclipped <= clipped) {
        surrogate = unclipped;
        d_surrogate = unclipped;  // d(p A)/d logprob = p A
      } else {
        surrogate = clipped;
        d_surrogate = 0.0;
        ++clipped_tokens;
      }
      const double kl = kl_estimate(lp[t], group.ref_logprobs[i][t]);
      // d/d logprob of (exp(ref - lp) - (ref - lp) - 1) = 1 - pi_ref/pi
      const double d_kl = 1.0 - std::exp(group.ref_logprobs[i][t] - lp[t]);

      out.value += scale * (surrogate - cfg.kl_beta * kl);
      const auto row = static_cast<Eigen::Index>(t);
      dlogits.row(row) +=
          (scale * (d_surrogate - cfg.kl_beta * d_kl)) * dz.row(row);
      kl_sum += kl;
      ++tokens;
    }
  }
  out.gradient = policy.weight_gradient(group.features, dlogits);
  out.kl = kl_sum / static_cast<double>(tokens);
  out.clip_fraction =
      static_cast<double>(clipped_tokens) / static_cast<double>(tokens);
  return out;
}

std::string render_completion(std::span<const int> seq) {
  return format_sft_target("", to_prediction(seq));
}

TrainResult train(std::span<const Example> dataset, const GrpoConfig& cfg,
                  const RewardConfig& reward_cfg,
                  const TrainOptions& options) {
  cfg.validate();
  reward_cfg.validate();
  if (dataset.empty()) {
    throw Error(ErrorCode::kConfigInvalid, "training dataset is empty");
  }
  const int dim = static_cast<int>(dataset.front().features.size());
  ToyPolicy policy = options.initial.value_or(ToyPolicy(dim, reward_cfg.k, options.heads));
  if (policy.k() != reward_cfg.k) {
    throw Error(ErrorCode::kConfigInvalid,
                "initial policy k differs from reward k");
  }
  for (const Example& ex : dataset) policy.check_features(ex.features);
  const ToyPolicy reference = policy;

  TrainResult result;
  result.log.reserve(cfg.steps);
  Rng picker(derive_seed(cfg.seed, 0));

  const double batch = static_cast<double>(cfg.groups_per_step);
  const double samples = batch * cfg.group_size;
  std::uint64_t stream = 1;

  for (int step = 0; step < cfg.steps; ++step) {
    StepLog entry;
    entry.step = step;
    Eigen::MatrixXd gradient = Eigen::MatrixXd::Zero(policy.theta().rows(),
                                                     policy.theta().cols());
    // The old policy is the current weights; the single update below is
    // the only inner step, so every ratio starts at exactly 1.
    for (int b = 0; b < cfg.groups_per_step; ++b) {
      const Example& ex = dataset[static_cast<std::size_t>(
          uniform01(picker) * static_cast<double>(dataset.size()))];
      RolloutGroup group = sample_rollouts(policy, ex.features, cfg.group_size,
                                           derive_seed(cfg.seed, stream++));
      attach_reference(group, reference);

      group.rewards.resize(cfg.group_size);
      for (int i = 0; i < cfg.group_size; ++i) {
        const RewardBreakdown r =
            total_reward(render_completion(group.completions[i]), ex.truth,
                         reward_cfg, options.terms);
        group.rewards[i] = r.total;
        entry.mean_reward += r.total / samples;
        entry.mean_ndcg += r.ndcg / samples;
        entry.mean_ds += r.ds / samples;
      }
      group.advantages = group_advantages(group.rewards, cfg.std_floor);

      const ObjectiveResult obj = grpo_objective(group, policy, cfg);
      gradient += obj.gradient / batch;
      entry.kl += obj.kl / batch;
      entry.clip_fraction += obj.clip_fraction / batch;
    }
    policy.theta() += cfg.learning_rate * gradient;

    if (options.on_step) options.on_step(entry);
    result.log.push_back(entry);
  }
  result.policy = std::move(policy);
  return result;
}

SyntheticTask make_synthetic_task(const SyntheticConfig& cfg) {
  if (cfg.feature_dim < 1 || cfg.train_per_type < 0 || cfg.test_per_type < 0 ||
      !(cfg.noise_sigma >= 0.0) || !(cfg.prototype_scale > 0.0)) {
    throw Error(ErrorCode::kConfigInvalid, "invalid synthetic task config");
  }
  Rng rng(derive_seed(cfg.seed, 0x5e7));
  SyntheticTask task;
  task.prototypes.resize(kTypeCount, cfg.feature_dim);
  for (int t = 0; t < kTypeCount; ++t) {
    Eigen::VectorXd v(cfg.feature_dim);
    for (int j = 0; j < cfg.feature_dim; ++j) v[j] = standard_normal(rng);
    // Gram-Schmidt against earlier prototypes while directions remain.
    if (t < cfg.feature_dim) {
      for (int s = 0; s < t; ++s) {
        const Eigen::VectorXd u = task.prototypes.row(s).transpose();
        v -= u.dot(v) * u;
      }
    }
    task.prototypes.row(t) = (v / v.norm()).transpose();
  }
  task.prototypes *= cfg.prototype_scale;

  auto draw = [&](int per_type, std::vector<Example>& out) {
    out.reserve(static_cast<std::size_t>(per_type) * kTypeCount);
    for (int n = 0; n < per_type; ++n) {
      for (int t = 0; t < kTypeCount; ++t) {
        Eigen::VectorXd x = task.prototypes.row(t).transpose();
        for (int j = 0; j < cfg.feature_dim; ++j) {
          x[j] += cfg.noise_sigma * standard_normal(rng);
        }
        out.push_back({std::move(x), MbtiType::from_index(t)});
      }
    }
  };
  draw(cfg.train_per_type, task.train);
  draw(cfg.test_per_type, task.test);
  return task;
}

namespace {

constexpr int kMaxExpectedK = 4;

// Sums P(prefix) * NDCG over every completion of the prefix.
double expected_ndcg(const Eigen::MatrixXd& z, MbtiType truth,
                     const RewardConfig& cfg, std::array<bool, kTypeCount>& taken,
                     Sequence& prefix, double prob) {
  if (static_cast<int>(prefix.size()) == cfg.k) {
    return prob * ndcg_at_k(to_prediction(prefix), truth, cfg);
  }
  const auto row = z.row(static_cast<Eigen::Index>(prefix.size()));
  double zmax = -std::numeric_limits<double>::infinity();
  for (int j = 0; j < kTypeCount; ++j) {
    if (!taken[j]) zmax = std::max(zmax, row[j]);
  }
  double sum = 0.0;
  for (int j = 0; j < kTypeCount; ++j) {
    if (!taken[j]) sum += std::exp(row[j] - zmax);
  }
  double total = 0.0;
  for (int j = 0; j < kTypeCount; ++j) {
    if (taken[j]) continue;
    const double pj = std::exp(row[j] - zmax) / sum;
    taken[j] = true;
    prefix.push_back(j);
    total += expected_ndcg(z, truth, cfg, taken, prefix, prob * pj);
    prefix.pop_back();
    taken[j] = false;
  }
  return total;
}

}  // namespace

double mean_ndcg(const ToyPolicy& policy, std::span<const Example> examples,
                 const RewardConfig& reward_cfg, Decoding decoding) {
  if (examples.empty()) return 0.0;
  if (decoding == Decoding::kExpected && reward_cfg.k > kMaxExpectedK) {
    throw Error(ErrorCode::kConfigInvalid,
                "exact expected NDCG is limited to k <= 4");
  }
  double sum = 0.0;
  for (const Example& ex : examples) {
    if (decoding == Decoding::kGreedy) {
      sum += ndcg_at_k(to_prediction(policy.greedy(ex.features)), ex.truth,
                       reward_cfg);
    } else {
      std::array<bool, kTypeCount> taken{};
      Sequence prefix;
      sum += expected_ndcg(policy.logits(ex.features), ex.truth, reward_cfg,
                           taken, prefix, 1.0);
    }
  }
  return sum / static_cast<double>(examples.size());
}

}  // namespace mbtirank
