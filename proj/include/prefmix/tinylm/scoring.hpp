#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "prefmix/tinylm/model.hpp"

namespace prefmix::tinylm {

/// [BOS] prompt [SEP] response: the layout every scoring and sampling path uses.
inline Tokens model_input(std::span<const TokenId> prompt, std::span<const TokenId> response) {
  Tokens t;
  t.reserve(prompt.size() + response.size() + 2);
  t.push_back(Vocabulary::bos);
  t.insert(t.end(), prompt.begin(), prompt.end());
  t.push_back(Vocabulary::sep);
  t.insert(t.end(), response.begin(), response.end());
  return t;
}

namespace detail {

/// Forward pass + per-response-token log-probs; fills `dlogits` with
/// weight * d(sum log p)/dlogits when non-null.
inline double response_logprob(const PolicyModel& m, std::span<const TokenId> prompt,
                               std::span<const TokenId> response, Activations& act,
                               std::vector<double>* dlogits, double weight) {
  const Tokens input = model_input(prompt, response);
  check_tokens(m, input);
  if (response.empty()) return 0.0;
  const std::size_t first = prompt.size() + 1;  // row predicting response[0]
  forward(m, input, act, first);
  const auto V = static_cast<std::size_t>(m.arch().vocab_size);
  if (dlogits) dlogits->assign(act.T * V, 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < response.size(); ++i) {
    const std::size_t row = first + i;
    std::span<const double> z(act.logits.data() + row * V, V);
    const auto lp = log_softmax(z);
    const auto target = static_cast<std::size_t>(response[i]);
    total += lp[target];
    if (dlogits) {
      double* dr = dlogits->data() + row * V;
      for (std::size_t j = 0; j < V; ++j) dr[j] = -weight * std::exp(lp[j]);
      dr[target] += weight;
    }
  }
  return total;
}

}  // namespace detail

/// Sum over response positions of log P(y_t | x, y_<t).
inline double logprob(const PolicyModel& m, std::span<const TokenId> prompt, std::span<const TokenId> response) {
  Activations act;
  return detail::response_logprob(m, prompt, response, act, nullptr, 0.0);
}

/// Adds weight * d logprob / d params into `grad`; returns the logprob.
inline double accumulate_logprob_grad(const PolicyModel& m, std::span<const TokenId> prompt,
                                      std::span<const TokenId> response, double weight, std::span<double> grad) {
  require(grad.size() == m.param_count(), Errc::invalid_argument, "gradient buffer has wrong length");
  Activations act;
  std::vector<double> dlogits;
  const double lp = detail::response_logprob(m, prompt, response, act, &dlogits, weight);
  if (!response.empty() && weight != 0.0) backward(m, act, dlogits, grad);
  return lp;
}

struct LogProbGrad {
  double value = 0.0;
  std::vector<double> grad;
};

inline LogProbGrad logprob_grad(const PolicyModel& m, std::span<const TokenId> prompt,
                                std::span<const TokenId> response) {
  require(!m.frozen(), Errc::frozen_model, "gradient requested for a frozen model");
  LogProbGrad out;
  out.grad.assign(m.param_count(), 0.0);
  out.value = accumulate_logprob_grad(m, prompt, response, 1.0, out.grad);
  return out;
}

/// Mean of final-layer hidden states over response positions.
inline std::vector<double> embed_response(const PolicyModel& m, std::span<const TokenId> prompt,
                                          std::span<const TokenId> response) {
  require(!response.empty(), Errc::empty_response, "cannot embed an empty response");
  const Tokens input = model_input(prompt, response);
  Activations act;
  forward(m, input, act, input.size());
  const auto d = static_cast<std::size_t>(m.arch().d_model);
  std::vector<double> e(d, 0.0);
  const std::size_t first = prompt.size() + 2;
  for (std::size_t t = first; t < input.size(); ++t)
    for (std::size_t i = 0; i < d; ++i) e[i] += act.h2[t * d + i];
  for (double& x : e) x /= static_cast<double>(response.size());
  return e;
}

inline double cosine(std::span<const double> a, std::span<const double> b) {
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  if (aa == 0.0 || bb == 0.0) return 0.0;
  return ab / std::sqrt(aa * bb);
}

/// Logits for the token following `context` (context includes BOS/SEP).
inline std::vector<double> next_token_logits(const PolicyModel& m, std::span<const TokenId> context) {
  Activations act;
  forward(m, context, act, context.size() - 1);
  const auto V = static_cast<std::size_t>(m.arch().vocab_size);
  const double* row = act.logits.data() + (context.size() - 1) * V;
  return std::vector<double>(row, row + V);
}

inline std::vector<double> next_token_probs(const PolicyModel& m, std::span<const TokenId> context) {
  auto lp = log_softmax(next_token_logits(m, context));
  for (double& x : lp) x = std::exp(x);
  return lp;
}

}  // namespace prefmix::tinylm
