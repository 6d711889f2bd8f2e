#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "prefmix/core/parallel.hpp"
#include "prefmix/core/stats.hpp"
#include "prefmix/datakit/pair.hpp"
#include "prefmix/rewards/oracle.hpp"
#include "prefmix/tinylm/sampling.hpp"

namespace prefmix::datakit {

using rewards::Prompt;
using rewards::RewardOracle;
using tinylm::PolicyModel;
using tinylm::SamplingConfig;

/// Exponent pairs of the two interpolated samplers used for mix-p pairs.
inline constexpr std::pair<double, double> mixp_extrapolate{1.5, -0.5};
inline constexpr std::pair<double, double> mixp_geometric_mean{0.5, 0.5};

/// Bins used for the reward histograms stored in manifests.
inline constexpr std::size_t manifest_histogram_bins = 10;

struct Generator {
  std::string id;
  PolicyModel model;
};

inline nlohmann::json sampling_manifest(const SamplingConfig& cfg) {
  return {{"temperature", cfg.temperature}, {"top_p", cfg.top_p}, {"max_len", cfg.max_len}, {"seed", cfg.seed}};
}

namespace detail {

inline PreferencePair make_pair(const Prompt& prompt, const std::vector<Tokens>& responses,
                                const rewards::BestWorst& bw, Source source) {
  PreferencePair p;
  p.prompt = prompt.ids;
  p.chosen = responses[bw.chosen];
  p.rejected = responses[bw.rejected];
  p.source = source;
  p.chosen_reward = bw.scores[bw.chosen];
  p.rejected_reward = bw.scores[bw.rejected];
  p.task_family = prompt.family;
  p.meta["prompt_id"] = prompt.id;
  return p;
}

/// Collects per-prompt results in prompt order, counting skipped prompts.
inline PreferenceDataset collect(std::vector<std::optional<PreferencePair>>& slots, const std::vector<Prompt>& prompts,
                                 nlohmann::json manifest) {
  PreferenceDataset ds;
  nlohmann::json skipped = nlohmann::json::array();
  std::vector<double> all_rewards;
  for (std::size_t i = 0; i < slots.size(); ++i) {
    if (slots[i]) {
      all_rewards.push_back(*slots[i]->chosen_reward);
      all_rewards.push_back(*slots[i]->rejected_reward);
      ds.pairs.push_back(std::move(*slots[i]));
    } else {
      skipped.push_back(prompts[i].id);
    }
  }
  manifest["prompts"] = prompts.size();
  manifest["pairs"] = ds.pairs.size();
  manifest["skipped_degenerate"] = skipped.size();
  manifest["skipped_prompt_ids"] = std::move(skipped);
  manifest["reward_histogram"] = to_json(make_histogram(all_rewards, manifest_histogram_bins));
  ds.manifest = std::move(manifest);
  return ds;
}

}  // namespace detail

/// Draws N responses per prompt from `model`; the best becomes chosen and
/// the worst rejected. Prompts whose N responses are all identical are
/// skipped and listed in the manifest. Sample k of prompt i uses seed
/// derive_seed(cfg.seed, {i, k}).
inline PreferenceDataset generate_onpolicy_pairs(const PolicyModel& model, const std::vector<Prompt>& prompts,
                                                 int n_samples, const RewardOracle& oracle, const SamplingConfig& cfg,
                                                 unsigned threads = 1) {
  require(n_samples >= 2, Errc::invalid_argument, "on-policy pairs need n_samples >= 2");
  cfg.validate();
  std::vector<std::optional<PreferencePair>> slots(prompts.size());
  parallel_for(prompts.size(), threads, [&](std::size_t i) {
    std::vector<Tokens> responses;
    for (int k = 0; k < n_samples; ++k)
      responses.push_back(tinylm::sample(model, prompts[i].ids,
                                         cfg.with_seed(derive_seed(cfg.seed, {i, static_cast<std::uint64_t>(k)}))));
    try {
      const auto bw = rewards::label_best_worst(oracle, prompts[i], responses);
      auto pair = detail::make_pair(prompts[i], responses, bw, Source::on);
      pair.generator_id = "policy";
      slots[i] = std::move(pair);
    } catch (const Error& e) {
      if (e.code() != Errc::degenerate_responses) throw;
    }
  });
  nlohmann::json manifest = {{"kind", "onpolicy"}, {"n_samples", n_samples}, {"sampling", sampling_manifest(cfg)}};
  return detail::collect(slots, prompts, std::move(manifest));
}

/// Off-policy pool: per prompt two distinct generators are drawn, each
/// contributes one response, and the oracle labels best / worst.
inline PreferenceDataset build_offpolicy_pool(const std::vector<Generator>& generators,
                                              const std::vector<Prompt>& prompts, const RewardOracle& oracle,
                                              const SamplingConfig& cfg, unsigned threads = 1) {
  require(generators.size() >= 2, Errc::invalid_argument, "off-policy pool needs at least two generators");
  cfg.validate();
  std::vector<std::optional<PreferencePair>> slots(prompts.size());
  parallel_for(prompts.size(), threads, [&](std::size_t i) {
    Rng pick(derive_seed(cfg.seed, {i, 0xfeed}));
    const std::size_t g0 = pick.below(generators.size());
    std::size_t g1 = pick.below(generators.size() - 1);
    if (g1 >= g0) ++g1;
    const std::size_t gens[2] = {g0, g1};
    std::vector<Tokens> responses;
    for (std::uint64_t k = 0; k < 2; ++k)
      responses.push_back(tinylm::sample(generators[gens[k]].model, prompts[i].ids,
                                         cfg.with_seed(derive_seed(cfg.seed, {i, k}))));
    try {
      const auto bw = rewards::label_best_worst(oracle, prompts[i], responses);
      auto pair = detail::make_pair(prompts[i], responses, bw, Source::off);
      pair.generator_id = generators[gens[bw.chosen]].id;
      pair.meta["rejected_generator_id"] = generators[gens[bw.rejected]].id;
      slots[i] = std::move(pair);
    } catch (const Error& e) {
      if (e.code() != Errc::degenerate_responses) throw;
    }
  });
  nlohmann::json ids = nlohmann::json::array();
  for (const auto& g : generators) ids.push_back(g.id);
  nlohmann::json manifest = {{"kind", "offpolicy"}, {"generators", ids}, {"sampling", sampling_manifest(cfg)}};
  return detail::collect(slots, prompts, std::move(manifest));
}

/// Mix-p pairs: one response from each interpolated sampler
/// (policy^1.5 * reference^-0.5 and policy^0.5 * reference^0.5).
inline PreferenceDataset generate_mixp_pairs(const PolicyModel& policy, const PolicyModel& reference,
                                             const std::vector<Prompt>& prompts, const RewardOracle& oracle,
                                             const SamplingConfig& cfg, unsigned threads = 1) {
  require(policy.vocab() == reference.vocab(), Errc::vocabulary_mismatch, "policy and reference vocabularies differ");
  cfg.validate();
  const std::pair<double, double> exps[2] = {mixp_extrapolate, mixp_geometric_mean};
  std::vector<std::optional<PreferencePair>> slots(prompts.size());
  parallel_for(prompts.size(), threads, [&](std::size_t i) {
    std::vector<Tokens> responses;
    for (std::uint64_t k = 0; k < 2; ++k)
      responses.push_back(tinylm::sample_interpolated(policy, reference, exps[k], prompts[i].ids,
                                                      cfg.with_seed(derive_seed(cfg.seed, {i, k}))));
    try {
      const auto bw = rewards::label_best_worst(oracle, prompts[i], responses);
      auto pair = detail::make_pair(prompts[i], responses, bw, Source::on);
      pair.generator_id = "mixp";
      pair.meta["chosen_exponents"] = {exps[bw.chosen].first, exps[bw.chosen].second};
      pair.meta["rejected_exponents"] = {exps[bw.rejected].first, exps[bw.rejected].second};
      slots[i] = std::move(pair);
    } catch (const Error& e) {
      if (e.code() != Errc::degenerate_responses) throw;
    }
  });
  nlohmann::json manifest = {
      {"kind", "mixp"},
      {"exponents", {{mixp_extrapolate.first, mixp_extrapolate.second},
                     {mixp_geometric_mean.first, mixp_geometric_mean.second}}},
      {"sampling", sampling_manifest(cfg)}};
  return detail::collect(slots, prompts, std::move(manifest));
}

struct DiverseSamples {
  std::vector<Tokens> responses;
  std::size_t duplicates = 0;
};

/// Largest N for which iterative conditioning fits the context window when
/// every response runs to max_len.
inline int max_diverse_samples(std::size_t prompt_len, int max_len, int context) {
  const auto fits = [&](int n) {
    std::size_t cond = prompt_len;
    if (n > 1) cond += 1 + static_cast<std::size_t>(n - 1) * static_cast<std::size_t>(max_len);
    return cond + 2 + static_cast<std::size_t>(max_len) <= static_cast<std::size_t>(context);
  };
  int n = 0;
  while (fits(n + 1)) ++n;
  return n;
}

/// Response k is sampled conditioned on prompt, SEP, and responses 1..k-1.
/// The first draw uses cfg.seed and equals plain `sample`.
inline DiverseSamples sample_diverse_iterative(const PolicyModel& model, const Tokens& prompt, int n_samples,
                                               const SamplingConfig& cfg) {
  require(n_samples >= 1, Errc::invalid_argument, "n_samples must be >= 1");
  const int feasible = max_diverse_samples(prompt.size(), cfg.max_len, model.arch().context);
  require(n_samples <= feasible, Errc::context_overflow,
          "n_samples " + std::to_string(n_samples) + " overflows the context window; max feasible N is " +
              std::to_string(feasible));
  DiverseSamples out;
  Tokens cond = prompt;
  for (int k = 0; k < n_samples; ++k) {
    if (k == 1) cond.push_back(tinylm::Vocabulary::sep);
    const std::uint64_t seed = k == 0 ? cfg.seed : derive_seed(cfg.seed, {static_cast<std::uint64_t>(k)});
    Tokens r = tinylm::sample(model, cond, cfg.with_seed(seed));
    for (const auto& prev : out.responses)
      if (prev == r) {
        ++out.duplicates;
        break;
      }
    cond.insert(cond.end(), r.begin(), r.end());
    out.responses.push_back(std::move(r));
  }
  return out;
}

/// On-policy pairs labeled from iteratively diversified samples; prompt i
/// uses seed derive_seed(cfg.seed, {i}).
inline PreferenceDataset generate_diverse_pairs(const PolicyModel& model, const std::vector<Prompt>& prompts, int n_samples,
                                                const RewardOracle& oracle, const SamplingConfig& cfg,
                                                unsigned threads = 1) {
  require(n_samples >= 2, Errc::invalid_argument, "diverse pairs need n_samples >= 2");
  cfg.validate();
  std::vector<std::optional<PreferencePair>> slots(prompts.size());
  std::vector<std::size_t> dups(prompts.size(), 0);
  parallel_for(prompts.size(), threads, [&](std::size_t i) {
    auto d = sample_diverse_iterative(model, prompts[i].ids, n_samples, cfg.with_seed(derive_seed(cfg.seed, {i})));
    dups[i] = d.duplicates;
    try {
      const auto bw = rewards::label_best_worst(oracle, prompts[i], d.responses);
      auto pair = detail::make_pair(prompts[i], d.responses, bw, Source::on);
      pair.generator_id = "policy-diverse";
      slots[i] = std::move(pair);
    } catch (const Error& e) {
      if (e.code() != Errc::degenerate_responses) throw;
    }
  });
  std::size_t total_dups = 0;
  for (auto d : dups) total_dups += d;
  nlohmann::json manifest = {{"kind", "diverse"},
                             {"n_samples", n_samples},
                             {"duplicates", total_dups},
                             {"sampling", sampling_manifest(cfg)}};
  return detail::collect(slots, prompts, std::move(manifest));
}

}  // namespace prefmix::datakit
