#include "mbtirank/service.hpp"

#include <cmath>

#include "mbtirank/grpo.hpp"
#include "mbtirank/reward.hpp"

// After Eigen: httplib pulls in system headers whose macros clash with it.
#include <httplib.h>
#include <json.hpp>

#ifndef MBTIRANK_VERSION
#define MBTIRANK_VERSION "0.0.0"
#endif

namespace mbtirank {

using json = nlohmann::json;

const char* version() { return MBTIRANK_VERSION; }

namespace {

HttpReply bad_request(const std::string& field, const std::string& message) {
  json j;
  j["error"] = message;
  j["field"] = field;
  return {400, j.dump()};
}

}  // namespace

HttpReply handle_score(std::string_view body, const ServiceConfig& cfg) {
  const json req = json::parse(body, nullptr, false);
  if (req.is_discarded() || !req.is_object()) {
    return bad_request("body", "request body must be a JSON object");
  }

  if (!req.contains("completions") || !req["completions"].is_array() ||
      req["completions"].empty()) {
    return bad_request("completions",
                       "completions must be a non-empty array of strings");
  }
  std::vector<std::string> completions;
  for (const json& c : req["completions"]) {
    if (!c.is_string()) {
      return bad_request("completions",
                         "completions must be a non-empty array of strings");
    }
    completions.push_back(c.get<std::string>());
  }

  if (!req.contains("ground_truth") || !req["ground_truth"].is_string()) {
    return bad_request("ground_truth", "ground_truth must be a type code");
  }
  const auto truth = MbtiType::try_parse(req["ground_truth"].get<std::string>());
  if (!truth) {
    return bad_request("ground_truth", "ground_truth is not a valid type code");
  }

  RewardConfig rc;
  rc.k = cfg.k;
  rc.dim_weight.epsilon = cfg.epsilon;
  if (req.contains("k") && !req["k"].is_null()) {
    const json& k = req["k"];
    if (!k.is_number_integer() || k.get<long long>() < 1 ||
        k.get<long long>() > kTypeCount) {
      return bad_request("k", "k must be an integer in [1, 16]");
    }
    rc.k = static_cast<int>(k.get<long long>());
  }
  if (req.contains("dim_weight_epsilon") &&
      !req["dim_weight_epsilon"].is_null()) {
    const json& e = req["dim_weight_epsilon"];
    if (!e.is_number() || !std::isfinite(e.get<double>()) ||
        e.get<double>() < 0.0) {
      return bad_request("dim_weight_epsilon",
                         "dim_weight_epsilon must be a number >= 0");
    }
    rc.dim_weight.epsilon = e.get<double>();
  }

  json results = json::array();
  std::vector<double> totals;
  totals.reserve(completions.size());
  for (const std::string& c : completions) {
    const RewardBreakdown r = total_reward(c, *truth, rc);
    json item;
    item["valid"] = r.valid;
    item["ndcg"] = r.ndcg;
    item["ds"] = r.ds;
    item["total"] = r.total;
    if (!r.valid) item["parse_error"] = r.parse_error;
    results.push_back(std::move(item));
    totals.push_back(r.total);
  }

  double mean = 0.0;
  for (double t : totals) mean += t;
  mean /= static_cast<double>(totals.size());
  double var = 0.0;
  for (double t : totals) var += (t - mean) * (t - mean);

  json group;
  group["mean"] = mean;
  group["std"] = std::sqrt(var / static_cast<double>(totals.size()));
  if (totals.size() >= 2) group["advantages"] = group_advantages(totals);

  json resp;
  resp["results"] = std::move(results);
  resp["group"] = std::move(group);
  return {200, resp.dump()};
}

std::string health_body(const ServiceConfig& cfg, double uptime_seconds) {
  json j;
  j["status"] = "ok";
  j["version"] = version();
  j["k"] = cfg.k;
  j["epsilon"] = cfg.epsilon;
  j["uptime_seconds"] = uptime_seconds;
  return j.dump();
}

struct RewardServer::Impl {
  httplib::Server server;
  std::chrono::steady_clock::time_point started =
      std::chrono::steady_clock::now();
};

RewardServer::RewardServer(ServiceConfig cfg)
    : cfg_(std::move(cfg)), impl_(std::make_unique<Impl>()) {
  auto& srv = impl_->server;
  srv.set_payload_max_length(cfg_.max_body_bytes);
  // No SO_REUSEPORT: a second server must not share an occupied port.
  srv.set_socket_options([](socket_t sock) {
    int yes = 1;
    setsockopt(sock, SOL_SOCKET, SO_REUSEADDR,
               reinterpret_cast<const void*>(&yes), sizeof(yes));
  });
  srv.Post("/v1/score", [this](const httplib::Request& req,
                               httplib::Response& res) {
    const HttpReply reply = handle_score(req.body, cfg_);
    res.status = reply.status;
    res.set_content(reply.body, "application/json");
  });
  srv.Get("/v1/health", [this](const httplib::Request&, httplib::Response& res) {
    const std::chrono::duration<double> up =
        std::chrono::steady_clock::now() - impl_->started;
    res.set_content(health_body(cfg_, up.count()), "application/json");
  });
}

RewardServer::~RewardServer() { stop(); }

bool RewardServer::bind() {
  if (cfg_.port == 0) {
    port_ = impl_->server.bind_to_any_port(cfg_.host);
    return port_ > 0;
  }
  if (!impl_->server.bind_to_port(cfg_.host, cfg_.port)) return false;
  port_ = cfg_.port;
  return true;
}

bool RewardServer::serve() { return impl_->server.listen_after_bind(); }

void RewardServer::stop() {
  if (impl_ && impl_->server.is_running()) impl_->server.stop();
}

}  // namespace mbtirank
