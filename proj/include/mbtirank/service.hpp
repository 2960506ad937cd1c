#pragma once

#include <chrono>
#include <cstddef>
#include <memory>
#include <string>
#include <string_view>

namespace mbtirank {

const char* version();

struct ServiceConfig {
  std::string host = "127.0.0.1";
  int port = 8077;
  /// Defaults applied when a request omits k / dim_weight_epsilon.
  int k = 3;
  double epsilon = 0.1;
  std::size_t max_body_bytes = 1 << 20;
};

struct HttpReply {
  int status = 200;
  std::string body;
};

/// POST /v1/score. Request:
///   {"completions": [str, ...], "ground_truth": "INTJ",
///    "k": 3 (optional), "dim_weight_epsilon": 0.1 (optional)}
/// Response:
///   {"results": [{"valid", "ndcg", "ds", "total", "parse_error"?}, ...],
///    "group": {"mean", "std", "advantages"?}}
/// advantages appear only for two or more completions. Schema violations
/// return 400 with {"error", "field"}.
HttpReply handle_score(std::string_view body, const ServiceConfig& cfg);

/// GET /v1/health body.
std::string health_body(const ServiceConfig& cfg, double uptime_seconds);

/// Loopback HTTP front end for the handlers above. Handlers are pure, so
/// requests are served concurrently by the server's worker pool.
class RewardServer {
 public:
  explicit RewardServer(ServiceConfig cfg);
  ~RewardServer();
  RewardServer(const RewardServer&) = delete;
  RewardServer& operator=(const RewardServer&) = delete;

  /// Binds cfg.host:cfg.port, or an ephemeral port when cfg.port is 0.
  /// Returns false if the address cannot be bound.
  bool bind();
  int port() const { return port_; }
  /// Blocks until stop() is called.
  bool serve();
  void stop();

 private:
  struct Impl;
  ServiceConfig cfg_;
  std::unique_ptr<Impl> impl_;
  int port_ = 0;
};

}  // namespace mbtirank
