#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "prefmix/core/parallel.hpp"
#include "prefmix/datakit/pair.hpp"
#include "prefmix/optim/config.hpp"
#include "prefmix/tinylm/scoring.hpp"

namespace prefmix::optim {

using datakit::PreferencePair;
using tinylm::PolicyModel;
using tinylm::Tokens;

struct Rollout {
  Tokens prompt;
  Tokens response;
};

struct LossResult {
  double loss = 0.0;
  std::vector<double> grad;
  double margin_mean = 0.0;  // mean of beta * (delta_w - delta_l)
};

inline double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

/// log(1 + e^x) without overflow.
inline double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

/// -log sigma(m) for one pair with margin m = beta * (delta_w - delta_l).
inline double dpo_pair_loss(double margin) { return softplus(-margin); }

namespace detail {

/// Log-prob of one sequence with its activations kept so the backward pass
/// can run later with a weight known only after the whole pair is scored.
struct Scored {
  double logprob = 0.0;
  tinylm::Activations act;
  std::vector<double> dlogits;
};

inline Scored score_for_grad(const PolicyModel& m, std::span<const tinylm::TokenId> prompt,
                             std::span<const tinylm::TokenId> response) {
  Scored s;
  s.logprob = tinylm::detail::response_logprob(m, prompt, response, s.act, &s.dlogits, 1.0);
  return s;
}

inline void backprop_scaled(const PolicyModel& m, Scored& s, double weight, std::span<double> grad) {
  if (s.dlogits.empty() || weight == 0.0) return;
  for (double& x : s.dlogits) x *= weight;
  tinylm::backward(m, s.act, s.dlogits, grad);
}

/// Sums per-item gradients in index order so results do not depend on the
/// thread count.
inline void reduce_in_order(const std::vector<std::vector<double>>& parts, std::vector<double>& out) {
  for (const auto& g : parts)
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += g[i];
}

inline void check_pair_inputs(const PolicyModel& policy, const PolicyModel& reference) {
  require(!policy.frozen(), Errc::frozen_model, "policy must be trainable");
  require(reference.frozen(), Errc::invalid_argument, "reference model must be frozen");
  require(policy.vocab() == reference.vocab(), Errc::vocabulary_mismatch, "policy and reference vocabularies differ");
}

}  // namespace detail

/// Batch mean of -log sigma(beta * (delta_w - delta_l)) where delta is the
/// policy-minus-reference log-probability of a response.
inline LossResult dpo_loss(const PolicyModel& policy, const PolicyModel& reference,
                           std::span<const PreferencePair> batch, const DpoConfig& cfg, unsigned threads = 1) {
  cfg.validate();
  require(!batch.empty(), Errc::empty_batch, "DPO loss needs a non-empty batch");
  detail::check_pair_inputs(policy, reference);
  const std::size_t n = policy.param_count();
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  std::vector<double> losses(batch.size()), margins(batch.size());
  std::vector<std::vector<double>> parts(batch.size());
  parallel_for(batch.size(), threads, [&](std::size_t i) {
    const auto& p = batch[i];
    auto w = detail::score_for_grad(policy, p.prompt, p.chosen);
    auto l = detail::score_for_grad(policy, p.prompt, p.rejected);
    const double dw = w.logprob - tinylm::logprob(reference, p.prompt, p.chosen);
    const double dl = l.logprob - tinylm::logprob(reference, p.prompt, p.rejected);
    const double m = cfg.beta * (dw - dl);
    margins[i] = m;
    losses[i] = dpo_pair_loss(m);
    // d/dm softplus(-m) = -sigma(-m)
    const double coef = -sigmoid(-m) * cfg.beta * inv_b;
    parts[i].assign(n, 0.0);
    detail::backprop_scaled(policy, w, coef, parts[i]);
    detail::backprop_scaled(policy, l, -coef, parts[i]);
  });
  LossResult out;
  out.grad.assign(n, 0.0);
  detail::reduce_in_order(parts, out.grad);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    out.loss += losses[i] * inv_b;
    out.margin_mean += margins[i] * inv_b;
  }
  return out;
}

/// DPO plus the stop-gradient regularizer. The ratio factor is evaluated and
/// then held constant, so the regularizer's gradient is
/// -lambda / R * sum_y ratio(y) * grad log pi(y|x).
inline LossResult hypo_loss(const PolicyModel& policy, const PolicyModel& reference,
                            std::span<const PreferencePair> batch, std::span<const Rollout> rollouts,
                            const HypoConfig& cfg, unsigned threads = 1) {
  cfg.validate();
  LossResult out = dpo_loss(policy, reference, batch, cfg.dpo, threads);
  if (cfg.lambda == 0.0) return out;
  require(!rollouts.empty(), Errc::empty_rollouts, "HyPO with lambda > 0 needs on-policy rollouts");
  const std::size_t n = policy.param_count();
  const double inv_r = 1.0 / static_cast<double>(rollouts.size());
  std::vector<double> terms(rollouts.size());
  std::vector<std::vector<double>> parts(rollouts.size());
  parallel_for(rollouts.size(), threads, [&](std::size_t i) {
    const auto& r = rollouts[i];
    auto s = detail::score_for_grad(policy, r.prompt, r.response);
    const double ratio = std::exp(s.logprob - tinylm::logprob(reference, r.prompt, r.response));  // sg(.)
    terms[i] = s.logprob * ratio;
    parts[i].assign(n, 0.0);
    detail::backprop_scaled(policy, s, -cfg.lambda * ratio * inv_r, parts[i]);
  });
  detail::reduce_in_order(parts, out.grad);
  for (double t : terms) out.loss -= cfg.lambda * t * inv_r;
  return out;
}

struct SftExample {
  Tokens prompt;
  Tokens response;
};

/// Token-averaged negative log-likelihood and its gradient.
inline LossResult sft_loss(const PolicyModel& model, std::span<const SftExample> batch, unsigned threads = 1) {
  require(!batch.empty(), Errc::empty_batch, "SFT loss needs a non-empty batch");
  std::size_t tokens = 0;
  for (const auto& e : batch) tokens += e.response.size();
  require(tokens > 0, Errc::empty_response, "SFT batch has no response tokens");
  const double inv_t = 1.0 / static_cast<double>(tokens);
  const std::size_t n = model.param_count();
  std::vector<double> nll(batch.size());
  std::vector<std::vector<double>> parts(batch.size());
  parallel_for(batch.size(), threads, [&](std::size_t i) {
    parts[i].assign(n, 0.0);
    nll[i] = -tinylm::accumulate_logprob_grad(model, batch[i].prompt, batch[i].response, -inv_t, parts[i]);
  });
  LossResult out;
  out.grad.assign(n, 0.0);
  detail::reduce_in_order(parts, out.grad);
  for (double x : nll) out.loss += x * inv_t;
  return out;
}

/// Corpus-level per-token NLL.
inline double corpus_nll(const PolicyModel& model, std::span<const SftExample> corpus) {
  double nll = 0.0;
  std::size_t tokens = 0;
  for (const auto& e : corpus) {
    nll -= tinylm::logprob(model, e.prompt, e.response);
    tokens += e.response.size();
  }
  return tokens == 0 ? 0.0 : nll / static_cast<double>(tokens);
}

}  // namespace prefmix::optim
