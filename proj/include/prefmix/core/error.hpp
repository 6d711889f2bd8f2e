#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace prefmix {

enum class Errc {
  invalid_argument,
  sequence_too_long,
  token_out_of_range,
  frozen_model,
  empty_response,
  empty_batch,
  empty_rollouts,
  divergence,
  degenerate_responses,
  insufficient_source,
  missing_rewards,
  missing_reference,
  malformed_line,
  unknown_token,
  malformed_prompt,
  empty_stratum,
  non_convergence,
  context_overflow,
  vocabulary_mismatch,
  config_error,
  io_error,
  service_timeout,
  service_http_status,
  service_connection,
  service_malformed_reply,
  service_arity_mismatch,
};

constexpr std::string_view to_string(Errc code) {
  switch (code) {
    case Errc::invalid_argument: return "invalid-argument";
    case Errc::sequence_too_long: return "sequence-too-long";
    case Errc::token_out_of_range: return "token-out-of-range";
    case Errc::frozen_model: return "frozen-model";
    case Errc::empty_response: return "empty-response";
    case Errc::empty_batch: return "empty-batch";
    case Errc::empty_rollouts: return "empty-rollouts";
    case Errc::divergence: return "divergence";
    case Errc::degenerate_responses: return "degenerate-responses";
    case Errc::insufficient_source: return "insufficient-source";
    case Errc::missing_rewards: return "missing-rewards";
    case Errc::missing_reference: return "missing-reference";
    case Errc::malformed_line: return "malformed-line";
    case Errc::unknown_token: return "unknown-token";
    case Errc::malformed_prompt: return "malformed-prompt";
    case Errc::empty_stratum: return "empty-stratum";
    case Errc::non_convergence: return "non-convergence";
    case Errc::context_overflow: return "context-overflow";
    case Errc::vocabulary_mismatch: return "vocabulary-mismatch";
    case Errc::config_error: return "config-error";
    case Errc::io_error: return "io-error";
    case Errc::service_timeout: return "service-timeout";
    case Errc::service_http_status: return "service-http-status";
    case Errc::service_connection: return "service-connection";
    case Errc::service_malformed_reply: return "service-malformed-reply";
    case Errc::service_arity_mismatch: return "service-arity-mismatch";
  }
  return "unknown";
}

/// Every failure raised by the library carries a machine-checkable code.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& what) { throw Error(code, what); }

inline void require(bool cond, Errc code, const std::string& what) {
  if (!cond) fail(code, what);
}

}  // namespace prefmix
