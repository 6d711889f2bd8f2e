#pragma once

#include <cmath>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "json.hpp"
#include "prefmix/core/random.hpp"
#include "prefmix/datakit/generate.hpp"
#include "prefmix/optim/losses.hpp"
#include "prefmix/tinylm/sampling.hpp"

namespace prefmix::optim {

using datakit::PreferenceDataset;
using datakit::Source;

enum class Method { off_dpo, on_dpo, simplemix, hypo, dpo_mix_p };

inline std::string to_string(Method m) {
  switch (m) {
    case Method::off_dpo: return "off_dpo";
    case Method::on_dpo: return "on_dpo";
    case Method::simplemix: return "simplemix";
    case Method::hypo: return "hypo";
    case Method::dpo_mix_p: return "dpo_mix_p";
  }
  return "?";
}

inline Method parse_method(const std::string& s) {
  for (auto m : {Method::off_dpo, Method::on_dpo, Method::simplemix, Method::hypo, Method::dpo_mix_p})
    if (to_string(m) == s) return m;
  fail(Errc::invalid_argument, "unknown method '" + s + "'");
}

struct StepMetrics {
  std::size_t step = 0;
  double loss = 0.0;
  double margin_mean = 0.0;
  double grad_norm = 0.0;
  double lr = 0.0;
  std::size_t pairs_seen = 0;
  std::size_t on_seen = 0;
  std::size_t off_seen = 0;
};

inline nlohmann::json to_json(const StepMetrics& m) {
  return {{"step", m.step},
          {"loss", m.loss},
          {"margin_mean", m.margin_mean},
          {"grad_norm", m.grad_norm},
          {"lr", m.lr},
          {"pairs_seen", m.pairs_seen},
          {"source_counts", {{"on", m.on_seen}, {"off", m.off_seen}}}};
}

namespace detail {

inline void check_finite(double loss, std::size_t step, const char* what) {
  require(std::isfinite(loss), Errc::divergence,
          std::string(what) + " loss became non-finite at step " + std::to_string(step));
}

}  // namespace detail

/// Maximum-likelihood fine-tuning. Each epoch visits the corpus in a
/// permutation derived from (seed, epoch).
inline PolicyModel sft_train(const PolicyModel& init, const std::vector<SftExample>& corpus, const TrainConfig& cfg,
                             std::vector<StepMetrics>* log = nullptr) {
  cfg.validate();
  require(!corpus.empty(), Errc::empty_batch, "SFT corpus is empty");
  PolicyModel model = init;
  model.set_frozen(false);
  const auto bs = static_cast<std::size_t>(cfg.batch_size);
  const std::size_t per_epoch = (corpus.size() + bs - 1) / bs;
  const std::size_t total = per_epoch * static_cast<std::size_t>(cfg.epochs);
  Adam adam(model.param_count(), cfg.adam);
  std::size_t step = 0;
  std::vector<SftExample> batch;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto order = seeded_permutation(corpus.size(), derive_seed(cfg.seed, {static_cast<std::uint64_t>(epoch)}));
    for (std::size_t start = 0; start < order.size(); start += bs, ++step) {
      batch.clear();
      for (std::size_t k = start; k < std::min(order.size(), start + bs); ++k) batch.push_back(corpus[order[k]]);
      const auto r = sft_loss(model, batch, cfg.threads);
      detail::check_finite(r.loss, step, "SFT");
      const double lr = learning_rate(cfg, step, total);
      adam.step(model.mutable_params(), r.grad, lr);
      if (log) log->push_back({step, r.loss, 0.0, l2_norm(r.grad), lr, step * bs + batch.size(), 0, 0});
    }
  }
  return model;
}

/// Supplies preference pairs to the trainer, one batch at a time.
class PairSource {
 public:
  virtual ~PairSource() = default;
  /// Pairs delivered over one epoch.
  virtual std::size_t size() const = 0;
  /// Next `n` pairs of epoch `epoch`; `current` is the policy being trained.
  virtual std::vector<PreferencePair> next(const PolicyModel& current, std::size_t n, int epoch) = 0;
};

/// A fixed dataset visited in a seeded order each epoch. Counts how often
/// each pair is handed out.
class DatasetSource final : public PairSource {
 public:
  DatasetSource(PreferenceDataset data, std::uint64_t seed) : data_(std::move(data)), seed_(seed) {
    touches_.assign(data_.size(), 0);
  }

  std::size_t size() const override { return data_.size(); }

  std::vector<PreferencePair> next(const PolicyModel&, std::size_t n, int epoch) override {
    if (epoch != epoch_) {
      epoch_ = epoch;
      order_ = seeded_permutation(data_.size(), derive_seed(seed_, {static_cast<std::uint64_t>(epoch)}));
      cursor_ = 0;
    }
    std::vector<PreferencePair> out;
    for (; out.size() < n && cursor_ < order_.size(); ++cursor_) {
      ++touches_[order_[cursor_]];
      out.push_back(data_.pairs[order_[cursor_]]);
    }
    return out;
  }

  const std::vector<std::size_t>& touch_counts() const { return touches_; }
  const PreferenceDataset& dataset() const { return data_; }

 private:
  PreferenceDataset data_;
  std::uint64_t seed_;
  std::vector<std::size_t> touches_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
  int epoch_ = -1;
};

/// Pairs drawn on the fly from the interpolated samplers of the current
/// policy and the reference. Prompts are cycled in a seeded order; prompts
/// whose two responses coincide are skipped and counted.
class MixPSource final : public PairSource {
 public:
  MixPSource(const PolicyModel& reference, std::vector<rewards::Prompt> prompts,
             std::shared_ptr<const rewards::RewardOracle> oracle, tinylm::SamplingConfig sampling,
             std::size_t budget)
      : reference_(reference), prompts_(std::move(prompts)), oracle_(std::move(oracle)), sampling_(sampling),
        budget_(budget) {
    require(!prompts_.empty(), Errc::insufficient_source, "mix-p source needs prompts");
  }

  std::size_t size() const override { return budget_; }

  std::vector<PreferencePair> next(const PolicyModel& current, std::size_t n, int epoch) override {
    if (epoch != epoch_) {
      epoch_ = epoch;
      delivered_ = 0;
    }
    n = std::min(n, budget_ - delivered_);
    std::vector<PreferencePair> out;
    std::size_t attempts = 0;
    while (out.size() < n) {
      require(attempts++ < 20 * n + 100, Errc::insufficient_source, "mix-p sampling keeps producing identical responses");
      const std::size_t round = draws_ / prompts_.size();
      if (draws_ % prompts_.size() == 0)
        order_ = seeded_permutation(prompts_.size(), derive_seed(sampling_.seed, {0x6d6978, round}));
      const auto& prompt = prompts_[order_[draws_ % prompts_.size()]];
      const auto cfg = sampling_.with_seed(derive_seed(sampling_.seed, {draws_}));
      ++draws_;
      auto ds = datakit::generate_mixp_pairs(current, reference_, {prompt}, *oracle_, cfg);
      if (ds.empty()) {
        ++skipped_;
        continue;
      }
      out.push_back(std::move(ds.pairs.front()));
    }
    delivered_ += out.size();
    return out;
  }

  std::size_t skipped() const { return skipped_; }

 private:
  const PolicyModel& reference_;
  std::vector<rewards::Prompt> prompts_;
  std::shared_ptr<const rewards::RewardOracle> oracle_;
  tinylm::SamplingConfig sampling_;
  std::size_t budget_;
  std::size_t delivered_ = 0;
  std::size_t draws_ = 0;
  std::size_t skipped_ = 0;
  std::vector<std::size_t> order_;
  int epoch_ = -1;
};

struct PreferenceOptions {
  Method method = Method::simplemix;
  DpoConfig dpo;
  HypoConfig hypo;
  /// Sampling for HyPO rollouts.
  tinylm::SamplingConfig rollout_sampling;
};

struct TrainLog {
  std::vector<StepMetrics> steps;
  std::size_t pairs_seen = 0;
};

/// Rollouts from the current policy on the batch prompts, one per slot.
inline std::vector<Rollout> draw_rollouts(const PolicyModel& policy, std::span<const PreferencePair> batch, int count,
                                          const tinylm::SamplingConfig& sampling, std::size_t step) {
  std::vector<Rollout> out;
  for (int k = 0; k < count; ++k) {
    const auto& prompt = batch[static_cast<std::size_t>(k) % batch.size()].prompt;
    const auto cfg = sampling.with_seed(derive_seed(sampling.seed, {step, static_cast<std::uint64_t>(k)}));
    out.push_back({prompt, tinylm::sample(policy, prompt, cfg)});
  }
  return out;
}

/// One pass (per epoch) over exactly `source.size()` pairs in batches of
/// cfg.batch_size, Adam with warmup + cosine decay.
inline PolicyModel train_preference(const PolicyModel& policy, const PolicyModel& reference, PairSource& source,
                                    const PreferenceOptions& opt, const TrainConfig& cfg, TrainLog* log = nullptr) {
  cfg.validate();
  PolicyModel model = policy;
  model.set_frozen(false);
  const auto bs = static_cast<std::size_t>(cfg.batch_size);
  const std::size_t per_epoch = (source.size() + bs - 1) / bs;
  const std::size_t total = per_epoch * static_cast<std::size_t>(cfg.epochs);
  Adam adam(model.param_count(), cfg.adam);
  TrainLog local;
  TrainLog& out = log ? *log : local;
  std::size_t on_seen = 0, off_seen = 0, step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t b = 0; b < per_epoch; ++b, ++step) {
      const auto batch = source.next(model, bs, epoch);
      require(!batch.empty(), Errc::insufficient_source, "pair source ran dry at step " + std::to_string(step));
      LossResult r;
      if (opt.method == Method::hypo) {
        const auto rollouts =
            draw_rollouts(model, batch, opt.hypo.onpolicy_samples_per_step, opt.rollout_sampling, step);
        r = hypo_loss(model, reference, batch, rollouts, opt.hypo, cfg.threads);
      } else {
        r = dpo_loss(model, reference, batch, opt.dpo, cfg.threads);
      }
      detail::check_finite(r.loss, step, "preference");
      const double lr = learning_rate(cfg, step, total);
      adam.step(model.mutable_params(), r.grad, lr);
      for (const auto& p : batch) (p.source == Source::on ? on_seen : off_seen) += 1;
      out.pairs_seen += batch.size();
      out.steps.push_back({step, r.loss, r.margin_mean, l2_norm(r.grad), lr, out.pairs_seen, on_seen, off_seen});
    }
  }
  return model;
}

}  // namespace prefmix::optim
