#include "mbtirank/policy.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

#include "mbtirank/error.hpp"

namespace mbtirank {

double standard_normal(Rng& rng) {
  double u1 = uniform01(rng);
  while (u1 <= 0.0) u1 = uniform01(rng);
  const double u2 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

ToyPolicy::ToyPolicy(int feature_dim, int k, Heads heads)
    : ToyPolicy(Eigen::MatrixXd::Zero(
                    static_cast<Eigen::Index>(feature_dim) *
                        (heads == Heads::kPerPosition ? std::max(k, 1) : 1),
                    kTypeCount),
                k, heads) {}

ToyPolicy::ToyPolicy(Eigen::MatrixXd theta, int k, Heads heads)
    : theta_(std::move(theta)), k_(k), heads_(heads) {
  if (k_ < 1 || k_ > kTypeCount) {
    throw Error(ErrorCode::kConfigInvalid, "policy k must be in [1, 16]");
  }
  const Eigen::Index blocks = heads_ == Heads::kPerPosition ? k_ : 1;
  if (theta_.cols() != kTypeCount || theta_.rows() < 1 ||
      theta_.rows() % blocks != 0) {
    throw Error(ErrorCode::kShapeMismatch,
                "policy weights must be (blocks * feature_dim) x 16");
  }
  feature_dim_ = static_cast<int>(theta_.rows() / blocks);
  if (!theta_.allFinite()) {
    throw Error(ErrorCode::kConfigInvalid, "policy weights must be finite");
  }
}

void ToyPolicy::check_features(const Eigen::VectorXd& features) const {
  if (features.size() != feature_dim_) {
    throw Error(ErrorCode::kShapeMismatch,
                "feature vector has " + std::to_string(features.size()) +
                    " entries, policy expects " +
                    std::to_string(feature_dim_));
  }
}

Eigen::MatrixXd ToyPolicy::logits(const Eigen::VectorXd& features) const {
  check_features(features);
  Eigen::MatrixXd z(k_, kTypeCount);
  if (heads_ == Heads::kShared) {
    const Eigen::RowVectorXd row = features.transpose() * theta_;
    z.rowwise() = row;
  } else {
    for (int t = 0; t < k_; ++t) {
      z.row(t) = features.transpose() *
                 theta_.middleRows(static_cast<Eigen::Index>(t) * feature_dim_,
                                   feature_dim_);
    }
  }
  return z;
}

Eigen::MatrixXd ToyPolicy::weight_gradient(
    const Eigen::VectorXd& features, const Eigen::MatrixXd& dlogits) const {
  check_features(features);
  if (dlogits.rows() != k_ || dlogits.cols() != kTypeCount) {
    throw Error(ErrorCode::kShapeMismatch, "dlogits must be k x 16");
  }
  if (heads_ == Heads::kShared) {
    return features * dlogits.colwise().sum();
  }
  Eigen::MatrixXd grad(theta_.rows(), kTypeCount);
  for (int t = 0; t < k_; ++t) {
    grad.middleRows(static_cast<Eigen::Index>(t) * feature_dim_,
                    feature_dim_) = features * dlogits.row(t);
  }
  return grad;
}

void masked_logprobs(const Eigen::MatrixXd& z, std::span<const int> seq,
                     std::vector<double>& logprobs, Eigen::MatrixXd* dz) {
  if (seq.size() > static_cast<std::size_t>(z.rows())) {
    throw Error(ErrorCode::kShapeMismatch, "sequence longer than k");
  }
  std::array<bool, kTypeCount> taken{};
  logprobs.assign(seq.size(), 0.0);
  if (dz) dz->setZero(static_cast<Eigen::Index>(seq.size()), kTypeCount);
  for (std::size_t t = 0; t < seq.size(); ++t) {
    const int y = seq[t];
    if (y < 0 || y >= kTypeCount || taken[y]) {
      throw Error(ErrorCode::kShapeMismatch,
                  "sequence entries must be distinct indices in [0, 16)");
    }
    const auto row = z.row(static_cast<Eigen::Index>(t));
    double zmax = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < kTypeCount; ++j) {
      if (!taken[j]) zmax = std::max(zmax, row[j]);
    }
    double sum = 0.0;
    for (int j = 0; j < kTypeCount; ++j) {
      if (!taken[j]) sum += std::exp(row[j] - zmax);
    }
    const double lse = zmax + std::log(sum);
    logprobs[t] = row[y] - lse;
    if (dz) {
      for (int j = 0; j < kTypeCount; ++j) {
        if (!taken[j]) (*dz)(t, j) = -std::exp(row[j] - lse);
      }
      (*dz)(t, y) += 1.0;
    }
    taken[y] = true;
  }
}

std::vector<double> ToyPolicy::token_logprobs(const Eigen::VectorXd& features,
                                              std::span<const int> seq) const {
  std::vector<double> lp;
  masked_logprobs(logits(features), seq, lp, nullptr);
  return lp;
}

double ToyPolicy::sequence_logprob(const Eigen::VectorXd& features,
                                   std::span<const int> seq) const {
  double s = 0.0;
  for (double v : token_logprobs(features, seq)) s += v;
  return s;
}

Sequence ToyPolicy::sample(const Eigen::VectorXd& features, Rng& rng) const {
  const Eigen::MatrixXd z = logits(features);
  std::array<bool, kTypeCount> taken{};
  Sequence seq;
  seq.reserve(k_);
  std::array<double, kTypeCount> w{};
  for (int t = 0; t < k_; ++t) {
    const auto row = z.row(t);
    double zmax = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < kTypeCount; ++j) {
      if (!taken[j]) zmax = std::max(zmax, row[j]);
    }
    double sum = 0.0;
    for (int j = 0; j < kTypeCount; ++j) {
      w[j] = taken[j] ? 0.0 : std::exp(row[j] - zmax);
      sum += w[j];
    }
    const double u = uniform01(rng) * sum;
    int pick = -1;
    double acc = 0.0;
    for (int j = 0; j < kTypeCount; ++j) {
      if (taken[j]) continue;
      pick = j;
      acc += w[j];
      if (u < acc) break;
    }
    taken[pick] = true;
    seq.push_back(pick);
  }
  return seq;
}

Sequence ToyPolicy::greedy(const Eigen::VectorXd& features) const {
  const Eigen::MatrixXd z = logits(features);
  std::array<bool, kTypeCount> taken{};
  Sequence seq;
  seq.reserve(k_);
  for (int t = 0; t < k_; ++t) {
    int best = -1;
    for (int j = 0; j < kTypeCount; ++j) {
      if (!taken[j] && (best < 0 || z(t, j) > z(t, best))) best = j;
    }
    taken[best] = true;
    seq.push_back(best);
  }
  return seq;
}

RankedPrediction to_prediction(std::span<const int> seq) {
  std::vector<MbtiType> types;
  types.reserve(seq.size());
  for (int i : seq) types.push_back(MbtiType::from_index(i));
  return RankedPrediction(std::move(types));
}

}  // namespace mbtirank
