#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <utility>
#include <vector>

#include "prefmix/core/random.hpp"
#include "prefmix/tinylm/scoring.hpp"

namespace prefmix::tinylm {

struct SamplingConfig {
  double temperature = 0.7;
  double top_p = 0.9;
  int max_len = 8;
  std::uint64_t seed = 0;

  void validate() const {
    require(temperature > 0.0, Errc::invalid_argument, "temperature must be > 0");
    require(top_p > 0.0 && top_p <= 1.0, Errc::invalid_argument, "top_p must lie in (0, 1]");
    require(max_len > 0, Errc::invalid_argument, "max_len must be positive");
  }

  SamplingConfig with_seed(std::uint64_t s) const {
    SamplingConfig c = *this;
    c.seed = s;
    return c;
  }
};

/// Temperatures below this are decoded greedily.
inline constexpr double greedy_temperature = 1e-6;
/// Probability floor applied before raising to (possibly negative) exponents.
inline constexpr double interpolation_floor = 1e-12;

inline bool is_greedy(const SamplingConfig& cfg) { return cfg.temperature < greedy_temperature; }

inline std::vector<double> softmax(std::span<const double> logits, double temperature = 1.0) {
  std::vector<double> scaled(logits.begin(), logits.end());
  for (double& z : scaled) z /= temperature;
  auto p = log_softmax(scaled);
  for (double& x : p) x = std::exp(x);
  return p;
}

/// Order used by nucleus truncation: probability descending, then id ascending.
inline std::vector<std::size_t> nucleus_order(std::span<const double> probs) {
  std::vector<std::size_t> order(probs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return probs[a] > probs[b]; });
  return order;
}

/// Keeps the smallest probability-sorted prefix with cumulative mass >= top_p
/// and renormalizes it. Tokens outside the nucleus get probability 0.
inline std::vector<double> nucleus(std::span<const double> probs, double top_p) {
  std::vector<double> out(probs.size(), 0.0);
  if (top_p >= 1.0) {
    const double z = std::accumulate(probs.begin(), probs.end(), 0.0);
    for (std::size_t i = 0; i < probs.size(); ++i) out[i] = probs[i] / z;
    return out;
  }
  const auto order = nucleus_order(probs);
  double cum = 0.0;
  std::size_t keep = 0;
  while (keep < order.size()) {
    cum += probs[order[keep]];
    ++keep;
    if (cum >= top_p - 1e-12) break;
  }
  for (std::size_t i = 0; i < keep; ++i) out[order[i]] = probs[order[i]] / cum;
  return out;
}

/// Token-level geometric interpolation p_a^a * p_b^b, normalized.
inline std::vector<double> interpolate(std::span<const double> pa, std::span<const double> pb,
                                       std::pair<double, double> exponents) {
  std::vector<double> logw(pa.size());
  double mx = -1e300;
  for (std::size_t i = 0; i < pa.size(); ++i) {
    logw[i] = exponents.first * std::log(std::max(pa[i], interpolation_floor)) +
              exponents.second * std::log(std::max(pb[i], interpolation_floor));
    mx = std::max(mx, logw[i]);
  }
  double z = 0.0;
  for (double& w : logw) {
    w = std::exp(w - mx);
    z += w;
  }
  for (double& w : logw) w /= z;
  return logw;
}

inline TokenId argmax_token(std::span<const double> scores) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < scores.size(); ++i)
    if (scores[i] > scores[best]) best = i;
  return static_cast<TokenId>(best);
}

/// Inverse-CDF draw over token ids in ascending order.
inline TokenId draw_token(std::span<const double> dist, Rng& rng) {
  const double u = rng.uniform();
  double cum = 0.0;
  std::size_t last = 0;
  for (std::size_t i = 0; i < dist.size(); ++i) {
    if (dist[i] <= 0.0) continue;
    cum += dist[i];
    last = i;
    if (u < cum) return static_cast<TokenId>(i);
  }
  return static_cast<TokenId>(last);
}

/// The exact per-step distribution `sample` draws from.
inline std::vector<double> step_distribution(std::span<const double> logits, const SamplingConfig& cfg) {
  if (is_greedy(cfg)) {
    std::vector<double> d(logits.size(), 0.0);
    d[static_cast<std::size_t>(argmax_token(logits))] = 1.0;
    return d;
  }
  return nucleus(softmax(logits, cfg.temperature), cfg.top_p);
}

inline std::vector<double> interpolated_step_distribution(std::span<const double> logits_a,
                                                          std::span<const double> logits_b,
                                                          std::pair<double, double> exponents,
                                                          const SamplingConfig& cfg) {
  const double tau = is_greedy(cfg) ? 1.0 : cfg.temperature;
  auto w = interpolate(softmax(logits_a, tau), softmax(logits_b, tau), exponents);
  if (is_greedy(cfg)) {
    std::vector<double> d(w.size(), 0.0);
    d[static_cast<std::size_t>(argmax_token(w))] = 1.0;
    return d;
  }
  return nucleus(w, cfg.top_p);
}

namespace detail {

template <typename StepFn>
Tokens generate(std::span<const TokenId> prompt, int context, const SamplingConfig& cfg, StepFn&& step) {
  cfg.validate();
  Tokens ctx = model_input(prompt, {});
  require(ctx.size() <= static_cast<std::size_t>(context), Errc::sequence_too_long,
          "prompt does not fit the context window");
  const auto room = static_cast<std::size_t>(context) - ctx.size();
  const std::size_t limit = std::min(static_cast<std::size_t>(cfg.max_len), room);
  Rng rng(cfg.seed);
  Tokens out;
  while (out.size() < limit) {
    const auto dist = step(std::span<const TokenId>(ctx));
    const TokenId tok = is_greedy(cfg) ? argmax_token(dist) : draw_token(dist, rng);
    out.push_back(tok);
    ctx.push_back(tok);
    if (tok == Vocabulary::eos) break;
  }
  return out;
}

}  // namespace detail

/// Autoregressive temperature + nucleus sampling; stops at EOS or max_len.
inline Tokens sample(const PolicyModel& m, std::span<const TokenId> prompt, const SamplingConfig& cfg) {
  return detail::generate(prompt, m.arch().context, cfg, [&](std::span<const TokenId> ctx) {
    return step_distribution(next_token_logits(m, ctx), cfg);
  });
}

/// Samples from the per-step product p_a^a * p_b^b (each model tempered
/// first), normalized and nucleus-truncated at every step.
inline Tokens sample_interpolated(const PolicyModel& a, const PolicyModel& b, std::pair<double, double> exponents,
                                  std::span<const TokenId> prompt, const SamplingConfig& cfg) {
  require(a.vocab() == b.vocab(), Errc::vocabulary_mismatch, "interpolated models must share a vocabulary");
  const int context = std::min(a.arch().context, b.arch().context);
  return detail::generate(prompt, context, cfg, [&](std::span<const TokenId> ctx) {
    return interpolated_step_distribution(next_token_logits(a, ctx), next_token_logits(b, ctx), exponents, cfg);
  });
}

inline Tokens greedy(const PolicyModel& m, std::span<const TokenId> prompt, int max_len) {
  SamplingConfig cfg;
  cfg.temperature = greedy_temperature / 2;
  cfg.top_p = 1.0;
  cfg.max_len = max_len;
  return sample(m, prompt, cfg);
}

}  // namespace prefmix::tinylm
