#include "mbtirank/io.hpp"

#include <istream>
#include <ostream>

#include <json.hpp>

#include "mbtirank/error.hpp"

namespace mbtirank {

using json = nlohmann::json;

void save_policy(std::ostream& out, const ToyPolicy& policy) {
  json j;
  j["feature_dim"] = policy.feature_dim();
  j["k"] = policy.k();
  j["heads"] = policy.heads() == Heads::kShared ? "shared" : "per-position";
  json rows = json::array();
  const Eigen::MatrixXd& theta = policy.theta();
  for (Eigen::Index r = 0; r < theta.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < theta.cols(); ++c) row.push_back(theta(r, c));
    rows.push_back(std::move(row));
  }
  j["theta"] = std::move(rows);
  out << j.dump() << '\n';
}

ToyPolicy load_policy(std::istream& in) {
  const json j = json::parse(in, nullptr, false);
  try {
    if (j.is_discarded()) throw std::runtime_error("not JSON");
    const auto& rows = j.at("theta");
    const Heads heads = j.value("heads", std::string("shared")) == "shared"
                            ? Heads::kShared
                            : Heads::kPerPosition;
    Eigen::MatrixXd theta(static_cast<Eigen::Index>(rows.size()),
                          static_cast<Eigen::Index>(kTypeCount));
    for (std::size_t r = 0; r < rows.size(); ++r) {
      if (rows[r].size() != static_cast<std::size_t>(kTypeCount)) {
        throw std::runtime_error("each theta row needs 16 values");
      }
      for (int c = 0; c < kTypeCount; ++c) {
        theta(static_cast<Eigen::Index>(r), c) = rows[r][c].get<double>();
      }
    }
    ToyPolicy policy(std::move(theta), j.at("k").get<int>(), heads);
    if (policy.feature_dim() != j.at("feature_dim").get<int>()) {
      throw std::runtime_error("feature_dim disagrees with theta");
    }
    return policy;
  } catch (const Error&) {
    throw;
  } catch (const std::exception& e) {
    throw Error(ErrorCode::kParseError,
                std::string("malformed policy file: ") + e.what());
  }
}

void write_step_log(std::ostream& out, const StepLog& e) {
  json j;
  j["step"] = e.step;
  j["mean_reward"] = e.mean_reward;
  j["mean_ndcg"] = e.mean_ndcg;
  j["mean_ds"] = e.mean_ds;
  j["kl"] = e.kl;
  j["clip_fraction"] = e.clip_fraction;
  out << j.dump() << '\n';
}

}  // namespace mbtirank
