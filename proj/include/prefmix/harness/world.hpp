#pragma once

#include <algorithm>
#include <memory>
#include <string>
#include <vector>

#include "prefmix/datakit/generate.hpp"
#include "prefmix/optim/train.hpp"
#include "prefmix/rewards/oracle.hpp"

namespace prefmix::harness {

using datakit::Generator;
using datakit::PreferenceDataset;
using rewards::Prompt;
using tinylm::PolicyModel;
using tinylm::Tokens;

/// Synthetic suite plus the models and pools built from it.
struct WorldConfig {
  rewards::StyleTaskConfig style;
  int words = 24;
  tinylm::Architecture arch{0, 48, 64, 40};

  // SFT corpus. A seeded "hard" subset of arith prompts is answered
  // correctly in hard_correct of its examples, the rest in easy_correct; the
  // wrong examples repeat one fixed wrong answer per prompt.
  int arith_examples = 10;
  double hard_fraction = 0.5;
  double hard_correct = 0.25;
  double easy_correct = 1.0;
  // Each style prompt is answered with the topic's first prototype with one
  // middle word replaced, plus style_alternatives copies each of prototypes 1
  // and 2. Nucleus sampling at the default settings cuts the alternatives off.
  int style_examples = 10;
  int style_alternatives = 1;
  // Fixed low-reward word strings per topic, one copy each per prompt, so the
  // minority mass of the SFT distribution is on average worse than its mode.
  int style_junk = 3;
  optim::TrainConfig sft{3e-3, 0.03, 30, 16, {}, 0, 1};

  // Off-policy generators: a style specialist (prototype 1 of each topic), a
  // mediocre generator that imitates the SFT data and a noise generator. None
  // of them can add: they all echo the first operand.
  int generator_examples = 3;
  optim::TrainConfig generator_train{3e-3, 0.03, 20, 16, {}, 0, 1};

  tinylm::SamplingConfig sampling{0.7, 0.9, 8, 0};
  int onpolicy_samples = 4;
  int onpolicy_rounds = 10;
  int offpolicy_rounds = 8;
  unsigned threads = 1;
};

struct Suite {
  rewards::StyleTaskConfig style_cfg;
  tinylm::Vocabulary vocab;
  std::shared_ptr<const rewards::ArithOracle> arith;
  std::shared_ptr<const rewards::StyleOracle> style;
  std::shared_ptr<const rewards::SuiteOracle> oracle;

  std::vector<Prompt> prompts() const {
    auto out = arith->task().all_prompts();
    for (const auto& p : style->task().all_prompts()) out.push_back(p);
    return out;
  }
};

inline Suite make_suite(const rewards::StyleTaskConfig& cfg, int words = 24) {
  Suite s;
  s.style_cfg = cfg;
  s.vocab = rewards::suite_vocabulary(cfg, words);
  s.arith = std::make_shared<rewards::ArithOracle>(rewards::ArithTask(s.vocab));
  s.style = std::make_shared<rewards::StyleOracle>(std::make_shared<rewards::StyleTask>(s.vocab, cfg));
  s.oracle = std::make_shared<rewards::SuiteOracle>(s.arith, s.style);
  return s;
}

struct World {
  WorldConfig config;
  std::uint64_t seed = 0;
  Suite suite;
  std::vector<Prompt> prompts;
  std::vector<std::size_t> hard_arith;  // indices into the arith prompts
  PolicyModel sft;                      // frozen
  std::vector<Generator> generators;
  PreferenceDataset on_pool;
  PreferenceDataset off_pool;
};

namespace detail {

inline Tokens with_eos(Tokens t) {
  t.push_back(tinylm::Vocabulary::eos);
  return t;
}

inline Tokens number_tokens(const rewards::ArithTask& task, int n) {
  Tokens out;
  for (char c : std::to_string(n)) out.push_back(task.digit(c - '0'));
  return out;
}

inline int wrong_answer(Rng& rng, int correct) {
  int w = correct;
  while (w == correct) w = static_cast<int>(rng.below(19));
  return w;
}

}  // namespace detail

/// Per topic: the first prototype with one middle word replaced by a word it
/// does not contain.
inline std::vector<Tokens> mediocre_responses(const rewards::StyleTask& style, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Tokens> out;
  for (int t = 0; t < style.topics(); ++t) {
    Tokens y = style.prototype(t, 0);
    const std::size_t pos = 1 + rng.below(y.size() - 2);
    const auto& words = style.words();
    tinylm::TokenId w = y[pos];
    while (std::find(y.begin(), y.end(), w) != y.end()) w = words[rng.below(words.size())];
    y[pos] = w;
    out.push_back(std::move(y));
  }
  return out;
}

/// Per topic, `count` random word strings of prototype length.
inline std::vector<std::vector<Tokens>> junk_responses(const rewards::StyleTask& style, int count, std::uint64_t seed) {
  Rng rng(seed);
  const auto& words = style.words();
  std::vector<std::vector<Tokens>> out(static_cast<std::size_t>(style.topics()));
  for (auto& topic : out)
    for (int k = 0; k < count; ++k) {
      Tokens y;
      for (int i = 0; i < style.config().prototype_length; ++i) y.push_back(words[rng.below(words.size())]);
      topic.push_back(std::move(y));
    }
  return out;
}

/// SFT corpus and the hard-prompt set (sorted indices into arith prompts).
inline std::pair<std::vector<optim::SftExample>, std::vector<std::size_t>> sft_corpus(
    const Suite& s, const WorldConfig& cfg, const std::vector<Tokens>& mediocre, std::uint64_t seed) {
  const auto junk = junk_responses(s.style->task(), cfg.style_junk, derive_seed(seed, {3}));
  const auto& arith = s.arith->task();
  const auto& style = s.style->task();
  const auto aprompts = arith.all_prompts();
  auto order = seeded_permutation(aprompts.size(), derive_seed(seed, {1}));
  order.resize(static_cast<std::size_t>(std::llround(cfg.hard_fraction * static_cast<double>(aprompts.size()))));
  std::sort(order.begin(), order.end());
  std::vector<bool> hard(aprompts.size(), false);
  for (auto i : order) hard[i] = true;

  std::vector<optim::SftExample> corpus;
  Rng rng(derive_seed(seed, {2}));
  for (std::size_t i = 0; i < aprompts.size(); ++i) {
    const auto [a, b] = arith.operands(aprompts[i].ids);
    const int wrong = detail::wrong_answer(rng, a + b);
    const double frac = hard[i] ? cfg.hard_correct : cfg.easy_correct;
    const int n_correct = static_cast<int>(std::llround(frac * cfg.arith_examples));
    for (int k = 0; k < cfg.arith_examples; ++k) {
      const int value = k < n_correct ? a + b : wrong;
      corpus.push_back({aprompts[i].ids, detail::with_eos(detail::number_tokens(arith, value))});
    }
  }
  for (int t = 0; t < style.topics(); ++t) {
    for (int v = 0; v < style.config().variants; ++v) {
      for (int k = 0; k < cfg.style_examples; ++k) corpus.push_back({style.prompt(t, v).ids, detail::with_eos(mediocre[t])});
      for (int alt = 1; alt <= 2; ++alt)
        for (int k = 0; k < cfg.style_alternatives; ++k)
          corpus.push_back({style.prompt(t, v).ids, detail::with_eos(style.prototype(t, alt))});
      for (const auto& y : junk[static_cast<std::size_t>(t)]) corpus.push_back({style.prompt(t, v).ids, detail::with_eos(y)});
    }
  }
  return {corpus, order};
}

inline constexpr int generator_mediocre = -1;
inline constexpr int generator_noise = -2;

/// Corpus for an off-policy generator. On style prompts it answers with
/// prototype `style_index`, the SFT data's mediocre response
/// (generator_mediocre) or random words (generator_noise). Every generator
/// answers arith prompts by echoing the first operand.
inline std::vector<optim::SftExample> generator_corpus(const Suite& s, const WorldConfig& cfg, int style_index,
                                                       const std::vector<Tokens>& mediocre, std::uint64_t seed) {
  const auto& arith = s.arith->task();
  const auto& style = s.style->task();
  const auto len = static_cast<std::size_t>(style.config().prototype_length);
  Rng rng(seed);
  std::vector<optim::SftExample> corpus;
  for (const auto& p : arith.all_prompts()) {
    const auto y = detail::with_eos(detail::number_tokens(arith, arith.operands(p.ids).first));
    for (int k = 0; k < cfg.generator_examples; ++k) corpus.push_back({p.ids, y});
  }
  for (int t = 0; t < style.topics(); ++t)
    for (int v = 0; v < style.config().variants; ++v)
      for (int k = 0; k < cfg.generator_examples; ++k) {
        Tokens y;
        if (style_index >= 0) {
          y = style.prototype(t, style_index);
        } else if (style_index == generator_mediocre) {
          y = mediocre[t];
        } else {
          for (std::size_t i = 0; i < len; ++i) y.push_back(style.words()[rng.below(style.words().size())]);
        }
        corpus.push_back({style.prompt(t, v).ids, detail::with_eos(y)});
      }
  return corpus;
}

inline PolicyModel train_from_scratch(const Suite& s, const WorldConfig& cfg, const std::vector<optim::SftExample>& corpus,
                                      optim::TrainConfig train, std::uint64_t seed) {
  const auto init = PolicyModel::random_init(cfg.arch, s.vocab, derive_seed(seed, {0}));
  train.seed = derive_seed(seed, {1});
  train.threads = cfg.threads;
  return optim::sft_train(init, corpus, train);
}

/// Builds pools by running the generator `rounds` times with fresh seeds.
template <typename Fn>
PreferenceDataset pooled_rounds(int rounds, std::uint64_t seed, Fn&& one_round) {
  PreferenceDataset pool;
  nlohmann::json parts = nlohmann::json::array();
  for (int r = 0; r < rounds; ++r) {
    auto ds = one_round(derive_seed(seed, {static_cast<std::uint64_t>(r)}));
    for (auto& p : ds.pairs) {
      p.meta["round"] = r;
      pool.pairs.push_back(std::move(p));
    }
    parts.push_back(std::move(ds.manifest));
  }
  pool.manifest = {{"kind", "pooled"}, {"rounds", rounds}, {"seed", seed}, {"parts", std::move(parts)}};
  return pool;
}

/// Suite and reference policy only; pools and generators stay empty. A
/// non-null `sft` skips SFT training and uses that model instead.
inline World build_sft_world(const WorldConfig& cfg, std::uint64_t seed, const PolicyModel* sft = nullptr) {
  World w;
  w.config = cfg;
  w.seed = seed;
  w.suite = make_suite(cfg.style, cfg.words);
  w.prompts = w.suite.prompts();
  const auto mediocre = mediocre_responses(w.suite.style->task(), derive_seed(seed, {12}));
  auto [corpus, hard] = sft_corpus(w.suite, cfg, mediocre, derive_seed(seed, {10}));
  w.hard_arith = std::move(hard);
  if (sft) {
    require(sft->vocab() == w.suite.vocab, Errc::vocabulary_mismatch, "SFT checkpoint vocabulary does not match the suite");
    w.sft = sft->frozen_copy();
  } else {
    w.sft = train_from_scratch(w.suite, cfg, corpus, cfg.sft, derive_seed(seed, {11})).frozen_copy();
  }
  return w;
}

/// Trains the off-policy generators and fills both pools.
inline void add_pools(World& w) {
  const auto& cfg = w.config;
  const auto seed = w.seed;
  const auto mediocre = mediocre_responses(w.suite.style->task(), derive_seed(seed, {12}));

  const std::pair<const char*, int> specs[] = {
      {"style-b", 1}, {"mediocre", generator_mediocre}, {"noise", generator_noise}};
  std::uint64_t g = 0;
  for (const auto& [id, style_index] : specs) {
    const auto gc = generator_corpus(w.suite, cfg, style_index, mediocre, derive_seed(seed, {20, g}));
    w.generators.push_back({id, train_from_scratch(w.suite, cfg, gc, cfg.generator_train, derive_seed(seed, {21, g})).frozen_copy()});
    ++g;
  }

  const auto& oracle = *w.suite.oracle;
  w.on_pool = pooled_rounds(cfg.onpolicy_rounds, derive_seed(seed, {30}), [&](std::uint64_t s) {
    return datakit::generate_onpolicy_pairs(w.sft, w.prompts, cfg.onpolicy_samples, oracle, cfg.sampling.with_seed(s),
                                            cfg.threads);
  });
  w.off_pool = pooled_rounds(cfg.offpolicy_rounds, derive_seed(seed, {31}), [&](std::uint64_t s) {
    return datakit::build_offpolicy_pool(w.generators, w.prompts, oracle, cfg.sampling.with_seed(s), cfg.threads);
  });
}

inline World build_world(const WorldConfig& cfg, std::uint64_t seed, const PolicyModel* sft = nullptr) {
  World w = build_sft_world(cfg, seed, sft);
  add_pools(w);
  return w;
}

/// Reward inversion: exactly round(fraction * n) seeded pairs get their
/// responses swapped and their rewards negated, so the stored pair still
/// has chosen_reward >= rejected_reward but now prefers the worse response.
inline PreferenceDataset corrupt_rewards(PreferenceDataset ds, double fraction, std::uint64_t seed) {
  require(fraction >= 0.0 && fraction <= 1.0, Errc::invalid_argument, "corruption fraction must lie in [0, 1]");
  auto idx = seeded_permutation(ds.size(), seed);
  idx.resize(static_cast<std::size_t>(std::llround(fraction * static_cast<double>(ds.size()))));
  for (auto i : idx) {
    auto& p = ds.pairs[i];
    require(p.has_rewards(), Errc::missing_rewards, "corruption needs rewards");
    std::swap(p.chosen, p.rejected);
    const double c = *p.chosen_reward, r = *p.rejected_reward;
    p.chosen_reward = -r;
    p.rejected_reward = -c;
    p.meta["corrupted"] = true;
  }
  ds.manifest["corruption"] = {{"fraction", fraction}, {"seed", seed}, {"pairs", idx.size()}};
  return ds;
}

}  // namespace prefmix::harness
