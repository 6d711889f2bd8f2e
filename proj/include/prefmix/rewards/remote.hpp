#pragma once

#include <atomic>
#include <chrono>
#include <functional>
#include <mutex>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "httplib.h"
#include "json.hpp"
#include "prefmix/rewards/oracle.hpp"

namespace prefmix::rewards {

/// Client settings for an external reward-scoring service speaking
/// POST /score {"prompt", "responses"} -> {"rewards"}.
struct RewardServiceConfig {
  std::string endpoint = "http://127.0.0.1:8080/score";
  int timeout_ms = 5000;
  int max_in_flight = 4;
  int retries = 3;
  int backoff_ms = 50;

  void validate() const {
    require(max_in_flight >= 1, Errc::invalid_argument, "max_in_flight must be >= 1");
    require(retries >= 0 && timeout_ms > 0 && backoff_ms >= 0, Errc::invalid_argument, "bad retry policy");
  }
};

struct RemoteScores {
  std::vector<double> rewards;
  int retries = 0;
};

struct RemoteRequest {
  std::string prompt;
  std::vector<std::string> responses;
};

namespace detail {

struct Endpoint {
  std::string base;  // scheme://host:port
  std::string path;
};

inline Endpoint split_endpoint(const std::string& url) {
  const auto scheme = url.find("://");
  require(scheme != std::string::npos, Errc::invalid_argument, "endpoint needs a scheme: " + url);
  const auto slash = url.find('/', scheme + 3);
  if (slash == std::string::npos) return {url, "/score"};
  return {url.substr(0, slash), url.substr(slash)};
}

inline bool retryable(Errc c) {
  return c == Errc::service_timeout || c == Errc::service_http_status || c == Errc::service_connection;
}

inline std::vector<double> post_once(const Endpoint& ep, const RewardServiceConfig& cfg, const std::string& body,
                                     std::size_t expected) {
  httplib::Client cli(ep.base);
  const auto timeout = std::chrono::milliseconds(cfg.timeout_ms);
  cli.set_connection_timeout(timeout);
  cli.set_read_timeout(timeout);
  cli.set_write_timeout(timeout);
  auto res = cli.Post(ep.path, body, "application/json");
  if (!res) {
    const auto err = res.error();
    if (err == httplib::Error::Read || err == httplib::Error::Write || err == httplib::Error::ConnectionTimeout)
      fail(Errc::service_timeout, "no reply from " + ep.base + ep.path + " (" + httplib::to_string(err) + ")");
    fail(Errc::service_connection, "cannot reach " + ep.base + " (" + httplib::to_string(err) + ")");
  }
  if (res->status != 200) fail(Errc::service_http_status, "HTTP " + std::to_string(res->status));
  std::vector<double> rewards;
  try {
    const auto j = nlohmann::json::parse(res->body);
    rewards = j.at("rewards").get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::service_malformed_reply, e.what());
  }
  require(rewards.size() == expected, Errc::service_arity_mismatch,
          "sent " + std::to_string(expected) + " responses, got " + std::to_string(rewards.size()) + " rewards");
  return rewards;
}

}  // namespace detail

/// One scoring call with retries. Timeouts, connection failures and non-200
/// replies are retried with exponential backoff; malformed replies and arity
/// mismatches are raised immediately.
inline RemoteScores score_remote(const RewardServiceConfig& cfg, const std::string& prompt,
                                 const std::vector<std::string>& responses) {
  cfg.validate();
  const auto ep = detail::split_endpoint(cfg.endpoint);
  const std::string body = nlohmann::json{{"prompt", prompt}, {"responses", responses}}.dump();
  RemoteScores out;
  for (int attempt = 0;; ++attempt) {
    try {
      out.rewards = detail::post_once(ep, cfg, body, responses.size());
      out.retries = attempt;
      return out;
    } catch (const Error& e) {
      if (!detail::retryable(e.code()) || attempt >= cfg.retries) throw;
      std::this_thread::sleep_for(std::chrono::milliseconds(cfg.backoff_ms << attempt));
    }
  }
}

/// Scores many prompts with at most `max_in_flight` concurrent requests.
/// Results come back in request order.
inline std::vector<RemoteScores> score_remote_batch(const RewardServiceConfig& cfg,
                                                    const std::vector<RemoteRequest>& requests) {
  cfg.validate();
  std::vector<RemoteScores> out(requests.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex mu;
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= requests.size()) return;
      try {
        out[i] = score_remote(cfg, requests[i].prompt, requests[i].responses);
      } catch (...) {
        std::lock_guard lock(mu);
        if (!error) error = std::current_exception();
        return;
      }
    }
  };
  const auto n = std::min<std::size_t>(static_cast<std::size_t>(cfg.max_in_flight), requests.size());
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < n; ++w) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
  return out;
}

/// Oracle backed by a reward service; text is rendered with the vocabulary.
class RemoteOracle final : public RewardOracle {
 public:
  RemoteOracle(RewardServiceConfig cfg, Vocabulary vocab) : cfg_(std::move(cfg)), vocab_(std::move(vocab)) {}

  std::string family() const override { return "external"; }

  double score(const Prompt& p, std::span<const TokenId> r) const override {
    const Tokens one(r.begin(), r.end());
    return score_all(p, std::span<const Tokens>(&one, 1)).at(0);
  }

  std::vector<double> score_all(const Prompt& p, std::span<const Tokens> responses) const override {
    std::vector<std::string> texts;
    for (const auto& r : responses) texts.push_back(vocab_.decode(strip_eos(r)));
    return score_remote(cfg_, vocab_.decode(p.ids), texts).rewards;
  }

 private:
  RewardServiceConfig cfg_;
  Vocabulary vocab_;
};

/// Scripted behaviour for the local stub service.
struct StubScript {
  /// Rewards returned verbatim when non-empty; otherwise each response gets
  /// minus 0.01 per whitespace-separated token.
  std::vector<double> fixed_rewards;
  int fail_first = 0;     // first N requests answer HTTP 500
  int drop_rewards = 0;   // return this many fewer rewards than responses
  bool malformed = false; // reply with a non-JSON body
  int delay_ms = 0;
};

/// In-process HTTP stub implementing the reward-service wire protocol.
class StubRewardServer {
 public:
  explicit StubRewardServer(StubScript script, const std::string& host = "127.0.0.1", int port = 0)
      : script_(std::move(script)) {
    server_.Post("/score", [this](const httplib::Request& req, httplib::Response& res) { handle(req, res); });
    port_ = port == 0 ? server_.bind_to_any_port(host) : (server_.bind_to_port(host, port) ? port : -1);
    require(port_ > 0, Errc::io_error, "stub server cannot bind " + host);
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }

  StubRewardServer(const StubRewardServer&) = delete;
  StubRewardServer& operator=(const StubRewardServer&) = delete;

  ~StubRewardServer() { stop(); }

  void stop() {
    server_.stop();
    if (thread_.joinable()) thread_.join();
  }

  /// Blocks until the server is stopped from another thread or a signal.
  void wait() {
    if (thread_.joinable()) thread_.join();
  }

  int port() const { return port_; }
  std::string endpoint() const { return "http://127.0.0.1:" + std::to_string(port_) + "/score"; }
  int requests_seen() const { return requests_.load(); }
  int max_concurrent() const { return max_concurrent_.load(); }

 private:
  void handle(const httplib::Request& req, httplib::Response& res) {
    const int n = requests_.fetch_add(1);
    const int now = ++in_flight_;
    int prev = max_concurrent_.load();
    while (now > prev && !max_concurrent_.compare_exchange_weak(prev, now)) {
    }
    if (script_.delay_ms > 0) std::this_thread::sleep_for(std::chrono::milliseconds(script_.delay_ms));
    respond(n, req, res);
    --in_flight_;
  }

  void respond(int n, const httplib::Request& req, httplib::Response& res) const {
    if (n < script_.fail_first) {
      res.status = 500;
      res.set_content("{\"error\":\"scripted failure\"}", "application/json");
      return;
    }
    if (script_.malformed) {
      res.set_content("not json", "text/plain");
      return;
    }
    nlohmann::json body;
    try {
      body = nlohmann::json::parse(req.body);
    } catch (const nlohmann::json::exception&) {
      res.status = 400;
      return;
    }
    const auto responses = body.value("responses", std::vector<std::string>{});
    std::vector<double> rewards;
    if (!script_.fixed_rewards.empty()) {
      rewards = script_.fixed_rewards;
    } else {
      for (const auto& r : responses) {
        int tokens = 0;
        bool in_word = false;
        for (char c : r) {
          const bool space = c == ' ';
          if (!space && !in_word) ++tokens;
          in_word = !space;
        }
        rewards.push_back(-0.01 * tokens);
      }
    }
    for (int i = 0; i < script_.drop_rewards && !rewards.empty(); ++i) rewards.pop_back();
    res.set_content(nlohmann::json{{"rewards", rewards}}.dump(), "application/json");
  }

  StubScript script_;
  httplib::Server server_;
  std::thread thread_;
  int port_ = -1;
  std::atomic<int> requests_{0};
  std::atomic<int> in_flight_{0};
  std::atomic<int> max_concurrent_{0};
};

}  // namespace prefmix::rewards
