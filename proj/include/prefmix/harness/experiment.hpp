#pragma once

#include <optional>
#include <string>

#include "prefmix/datakit/filter.hpp"
#include "prefmix/datakit/mix.hpp"
#include "prefmix/evalkit/report.hpp"
#include "prefmix/harness/world.hpp"

namespace prefmix::harness {

using optim::Method;

/// One preference-training condition on a built world.
struct Condition {
  Method method = Method::simplemix;
  double on_ratio = 0.5;  // simplemix only; on_dpo = 1, off_dpo = 0
  std::size_t budget = 200;
  std::optional<datakit::FilterConfig> filter;  // applied to the off-policy pool
  double corruption = 0.0;                      // reward-inverted share of the off-policy pool
  bool bernoulli = false;
  optim::TrainConfig train{1e-3, 0.03, 4, 8, {}, 0, 1};
  optim::DpoConfig dpo{1.0};
  optim::HypoConfig hypo;
  evalkit::ReportConfig report;
  std::size_t eval_arith = 0;  // leading prompts of each family to evaluate; 0 = all
  std::size_t eval_style = 0;
};

struct ConditionResult {
  PolicyModel policy;
  optim::TrainLog log;
  nlohmann::json data_manifest;
  evalkit::EvalReport report;
};

inline double effective_on_ratio(const Condition& c) {
  switch (c.method) {
    case Method::on_dpo: return 1.0;
    case Method::off_dpo:
    case Method::hypo: return 0.0;
    case Method::simplemix: return c.on_ratio;
    case Method::dpo_mix_p: return 1.0;
  }
  return c.on_ratio;
}

/// Off-policy pool after the condition's corruption and filter.
inline PreferenceDataset prepare_off_pool(const World& w, const Condition& c) {
  PreferenceDataset off = w.off_pool;
  if (c.corruption > 0.0) off = corrupt_rewards(std::move(off), c.corruption, derive_seed(w.seed, {40}));
  if (c.filter) {
    datakit::FilterContext ctx{&w.sft, w.config.threads};
    off = datakit::filter(off, *c.filter, ctx);
  }
  return off;
}

/// Dataset-backed methods all go through the same exact-count mixer, so
/// on_dpo and off_dpo are simplemix with ratio 1 and 0.
inline PreferenceDataset condition_dataset(const World& w, const Condition& c) {
  datakit::MixConfig mc;
  mc.on_ratio = effective_on_ratio(c);
  mc.total_pairs = c.budget;
  mc.seed = derive_seed(c.train.seed, {50});
  mc.bernoulli = c.bernoulli;
  return datakit::simplemix(w.on_pool, prepare_off_pool(w, c), mc);
}

/// The first `arith` arith prompts and `style` style prompts (0 = all).
inline std::vector<Prompt> eval_prompts(const std::vector<Prompt>& prompts, std::size_t arith, std::size_t style) {
  std::vector<Prompt> out;
  std::size_t na = 0, ns = 0;
  for (const auto& p : prompts) {
    auto& n = p.family == rewards::arith_family ? na : ns;
    const auto cap = p.family == rewards::arith_family ? arith : style;
    if (cap == 0 || n < cap) out.push_back(p);
    ++n;
  }
  return out;
}

inline evalkit::EvalReport evaluate_against_sft(const World& w, const PolicyModel& policy, const Condition& c,
                                                std::uint64_t seed) {
  auto matches = evalkit::head_to_head(policy, w.sft, eval_prompts(w.prompts, c.eval_arith, c.eval_style), *w.suite.oracle,
                                       w.config.sampling.max_len, w.config.threads);
  evalkit::ReportConfig rc = c.report;
  rc.seed = seed;
  return evalkit::make_report(std::move(matches), rc);
}

inline ConditionResult train_condition(const World& w, const Condition& c) {
  ConditionResult r{w.sft, {}, {}, {}};
  optim::PreferenceOptions opt;
  opt.method = c.method;
  opt.dpo = c.dpo;
  opt.hypo = c.hypo;
  opt.rollout_sampling = w.config.sampling.with_seed(derive_seed(c.train.seed, {60}));
  optim::TrainConfig train = c.train;
  train.threads = w.config.threads;
  if (c.budget == 0) {
    // Nothing to train on: the policy stays at the reference.
    r.data_manifest = {{"kind", "empty"}, {"method", optim::to_string(c.method)}, {"total_pairs", 0}};
  } else if (c.method == Method::dpo_mix_p) {
    optim::MixPSource src(w.sft, w.prompts, w.suite.oracle, w.config.sampling.with_seed(derive_seed(c.train.seed, {61})),
                          c.budget);
    r.policy = optim::train_preference(w.sft, w.sft, src, opt, train, &r.log);
    r.data_manifest = {{"kind", "mixp-online"},
                       {"total_pairs", c.budget},
                       {"skipped_degenerate", src.skipped()},
                       {"exponents", {{datakit::mixp_extrapolate.first, datakit::mixp_extrapolate.second},
                                      {datakit::mixp_geometric_mean.first, datakit::mixp_geometric_mean.second}}},
                       {"sampling", datakit::sampling_manifest(w.config.sampling)}};
  } else {
    auto data = condition_dataset(w, c);
    r.data_manifest = data.manifest;
    optim::DatasetSource src(std::move(data), derive_seed(c.train.seed, {62}));
    r.policy = optim::train_preference(w.sft, w.sft, src, opt, train, &r.log);
  }
  return r;
}

inline ConditionResult run_condition(const World& w, const Condition& c) {
  auto r = train_condition(w, c);
  r.report = evaluate_against_sft(w, r.policy, c, derive_seed(c.train.seed, {70}));
  return r;
}

}  // namespace prefmix::harness
