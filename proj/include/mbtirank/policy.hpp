#pragma once

#include <span>
#include <vector>

#include <Eigen/Dense>

#include "mbtirank/mbti.hpp"
#include "mbtirank/random.hpp"

namespace mbtirank {

/// A ranked completion as type indices in [0, 16), all distinct.
using Sequence = std::vector<int>;

/// How the logits at rank t depend on t.
enum class Heads {
  /// One weight matrix for every rank: z_t = theta^T x.
  kShared,
  /// One block of weights per rank: z_t = theta_t^T x, theta stacked
  /// row-wise as k blocks of feature_dim rows.
  kPerPosition,
};

/// Autoregressive ranking policy over the 16 types.
///
/// Step t of a sequence draws from softmax(z_t) restricted to the types not
/// yet chosen, so a sequence of length k is an ordered k-subset without
/// repeats. z_t is linear in the user feature vector x.
class ToyPolicy {
 public:
  ToyPolicy() = default;
  /// Zero weights: every step is uniform over the remaining types.
  ToyPolicy(int feature_dim, int k, Heads heads = Heads::kShared);
  /// Throws Error(kShapeMismatch) unless theta has 16 columns and a row
  /// count that matches the head layout, and Error(kConfigInvalid) for
  /// non-finite entries or k outside [1, 16].
  ToyPolicy(Eigen::MatrixXd theta, int k, Heads heads = Heads::kShared);

  int feature_dim() const { return feature_dim_; }
  int k() const { return k_; }
  Heads heads() const { return heads_; }
  const Eigen::MatrixXd& theta() const { return theta_; }
  Eigen::MatrixXd& theta() { return theta_; }

  /// Row t holds the logits of rank t (all rows equal for shared heads).
  Eigen::MatrixXd logits(const Eigen::VectorXd& features) const;

  /// Gradient of the weights given d value / d logits per rank (k x 16).
  Eigen::MatrixXd weight_gradient(const Eigen::VectorXd& features,
                                  const Eigen::MatrixXd& dlogits) const;

  /// log pi(y_t | x, y_<t) for each position of `seq`.
  std::vector<double> token_logprobs(const Eigen::VectorXd& features,
                                     std::span<const int> seq) const;
  double sequence_logprob(const Eigen::VectorXd& features,
                          std::span<const int> seq) const;

  Sequence sample(const Eigen::VectorXd& features, Rng& rng) const;
  /// Most probable type at every step.
  Sequence greedy(const Eigen::VectorXd& features) const;

  /// Throws Error(kShapeMismatch) when the feature size is wrong.
  void check_features(const Eigen::VectorXd& features) const;

 private:
  Eigen::MatrixXd theta_;
  int feature_dim_ = 0;
  int k_ = 0;
  Heads heads_ = Heads::kShared;
};

/// Per-token log-probability of `seq` where token t is drawn with logits
/// row t of `z`, and the gradient of each token's log-probability with
/// respect to that row (row t of `dz`, 16 columns).
void masked_logprobs(const Eigen::MatrixXd& z, std::span<const int> seq,
                     std::vector<double>& logprobs, Eigen::MatrixXd* dz);

RankedPrediction to_prediction(std::span<const int> seq);

}  // namespace mbtirank
