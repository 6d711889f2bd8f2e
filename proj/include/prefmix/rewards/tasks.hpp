#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "prefmix/core/error.hpp"
#include "prefmix/core/random.hpp"
#include "prefmix/tinylm/vocabulary.hpp"

namespace prefmix::rewards {

using tinylm::TokenId;
using tinylm::Tokens;
using tinylm::Vocabulary;

inline const std::string arith_family = "arith";
inline const std::string style_family = "style";

/// A prompt with its task-family tag and a stable identifier.
struct Prompt {
  Tokens ids;
  std::string family;
  std::string id;

  bool operator==(const Prompt&) const = default;
};

/// Response content: everything before the first EOS.
inline std::span<const TokenId> strip_eos(std::span<const TokenId> response) {
  const auto it = std::find(response.begin(), response.end(), Vocabulary::eos);
  return response.first(static_cast<std::size_t>(it - response.begin()));
}

/// Single-digit addition rendered as "a + b =". The verifiable family.
class ArithTask {
 public:
  /// Per extra token beyond the canonical answer length.
  static constexpr double length_penalty = 0.01;

  explicit ArithTask(const Vocabulary& vocab) {
    for (int d = 0; d < 10; ++d) digits_[static_cast<std::size_t>(d)] = vocab.id(std::to_string(d));
    plus_ = vocab.id("+");
    equals_ = vocab.id("=");
  }

  Prompt prompt(int a, int b) const {
    require(a >= 0 && a <= 9 && b >= 0 && b <= 9, Errc::invalid_argument, "operands must be single digits");
    return Prompt{{digit(a), plus_, digit(b), equals_}, arith_family,
                  "arith/" + std::to_string(a) + "+" + std::to_string(b)};
  }

  std::vector<Prompt> all_prompts() const {
    std::vector<Prompt> out;
    for (int a = 0; a < 10; ++a)
      for (int b = 0; b < 10; ++b) out.push_back(prompt(a, b));
    return out;
  }

  /// Operands of a well-formed prompt; throws malformed-prompt otherwise.
  std::pair<int, int> operands(std::span<const TokenId> prompt) const {
    require(prompt.size() == 4 && prompt[1] == plus_ && prompt[3] == equals_, Errc::malformed_prompt,
            "expected 'a + b ='");
    const int a = digit_value(prompt[0]);
    const int b = digit_value(prompt[2]);
    require(a >= 0 && b >= 0, Errc::malformed_prompt, "operands must be digits");
    return {a, b};
  }

  Tokens canonical_answer(int a, int b) const {
    Tokens out;
    for (char c : std::to_string(a + b)) out.push_back(digit(c - '0'));
    return out;
  }

  /// 1 for the exact answer (the maximal leading digit run), else 0; minus
  /// 0.01 per content token beyond the canonical length.
  double score(std::span<const TokenId> prompt, std::span<const TokenId> response) const {
    const auto [a, b] = operands(prompt);
    const Tokens answer = canonical_answer(a, b);
    const auto content = strip_eos(response);
    std::size_t run = 0;
    while (run < content.size() && digit_value(content[run]) >= 0) ++run;
    const bool correct = run == answer.size() && std::equal(answer.begin(), answer.end(), content.begin());
    const auto extra = content.size() > answer.size() ? content.size() - answer.size() : 0;
    return (correct ? 1.0 : 0.0) - length_penalty * static_cast<double>(extra);
  }

  TokenId digit(int d) const { return digits_[static_cast<std::size_t>(d)]; }

  int digit_value(TokenId t) const {
    for (int d = 0; d < 10; ++d)
      if (digits_[static_cast<std::size_t>(d)] == t) return d;
    return -1;
  }

 private:
  std::array<TokenId, 10> digits_{};
  TokenId plus_ = 0;
  TokenId equals_ = 0;
};

/// Multiset bigram overlap F1 between two token strings.
inline double bigram_f1(std::span<const TokenId> response, std::span<const TokenId> reference) {
  if (response.size() < 2 || reference.size() < 2) return 0.0;
  std::map<std::pair<TokenId, TokenId>, int> ref;
  for (std::size_t i = 0; i + 1 < reference.size(); ++i) ++ref[{reference[i], reference[i + 1]}];
  int overlap = 0;
  for (std::size_t i = 0; i + 1 < response.size(); ++i) {
    auto it = ref.find({response[i], response[i + 1]});
    if (it != ref.end() && it->second > 0) {
      --it->second;
      ++overlap;
    }
  }
  if (overlap == 0) return 0.0;
  const double precision = overlap / static_cast<double>(response.size() - 1);
  const double recall = overlap / static_cast<double>(reference.size() - 1);
  return 2.0 * precision * recall / (precision + recall);
}

struct StyleTaskConfig {
  int topics = 8;
  int variants = 6;
  int styles = 3;  // K prototypes per topic
  int prototype_length = 6;
  std::uint64_t seed = 7;
};

/// Open-ended family: each topic has K mutually dissimilar prototype
/// responses, and the reward is the best bigram F1 against any of them.
class StyleTask {
 public:
  static constexpr double max_prototype_similarity = 0.3;

  StyleTask(const Vocabulary& vocab, const StyleTaskConfig& cfg) : cfg_(cfg) {
    require(cfg.styles >= 3, Errc::invalid_argument, "style family needs at least 3 prototypes per topic");
    for (int t = 0; t < cfg.topics; ++t) topic_ids_.push_back(vocab.id("T" + std::to_string(t)));
    for (int v = 0; v < cfg.variants; ++v) variant_ids_.push_back(vocab.id("v" + std::to_string(v)));
    for (std::size_t i = 4; i < vocab.size(); ++i)
      if (vocab.symbols()[i].size() > 1 && vocab.symbols()[i][0] == 'w') word_ids_.push_back(static_cast<TokenId>(i));
    require(word_ids_.size() >= static_cast<std::size_t>(cfg.prototype_length), Errc::invalid_argument,
            "not enough word tokens for prototypes");
    Rng rng(cfg.seed);
    prototypes_.resize(static_cast<std::size_t>(cfg.topics));
    for (auto& protos : prototypes_) {
      while (protos.size() < static_cast<std::size_t>(cfg.styles)) {
        Tokens cand = draw_prototype(rng);
        bool ok = true;
        for (const auto& p : protos)
          ok = ok && bigram_f1(cand, p) < max_prototype_similarity && bigram_f1(p, cand) < max_prototype_similarity;
        if (ok) protos.push_back(std::move(cand));
      }
    }
  }

  const StyleTaskConfig& config() const { return cfg_; }
  int topics() const { return cfg_.topics; }
  int styles() const { return cfg_.styles; }
  const std::vector<TokenId>& words() const { return word_ids_; }

  Prompt prompt(int topic, int variant) const {
    return Prompt{{topic_ids_.at(static_cast<std::size_t>(topic)), variant_ids_.at(static_cast<std::size_t>(variant))},
                  style_family, "style/T" + std::to_string(topic) + "/v" + std::to_string(variant)};
  }

  std::vector<Prompt> all_prompts() const {
    std::vector<Prompt> out;
    for (int t = 0; t < cfg_.topics; ++t)
      for (int v = 0; v < cfg_.variants; ++v) out.push_back(prompt(t, v));
    return out;
  }

  int topic_of(std::span<const TokenId> prompt) const {
    require(prompt.size() == 2, Errc::malformed_prompt, "expected 'topic variant'");
    const auto it = std::find(topic_ids_.begin(), topic_ids_.end(), prompt[0]);
    require(it != topic_ids_.end(), Errc::malformed_prompt, "unknown topic token");
    require(std::find(variant_ids_.begin(), variant_ids_.end(), prompt[1]) != variant_ids_.end(),
            Errc::malformed_prompt, "unknown variant token");
    return static_cast<int>(it - topic_ids_.begin());
  }

  const Tokens& prototype(int topic, int style) const {
    return prototypes_.at(static_cast<std::size_t>(topic)).at(static_cast<std::size_t>(style));
  }

  /// Index of the prototype the response is closest to, and that similarity.
  std::pair<int, double> nearest_prototype(int topic, std::span<const TokenId> response) const {
    const auto content = strip_eos(response);
    int best = 0;
    double best_f1 = -1.0;
    for (int k = 0; k < cfg_.styles; ++k) {
      const double f = bigram_f1(content, prototype(topic, k));
      if (f > best_f1) {
        best_f1 = f;
        best = k;
      }
    }
    return {best, best_f1};
  }

  double score(std::span<const TokenId> prompt, std::span<const TokenId> response) const {
    return nearest_prototype(topic_of(prompt), response).second;
  }

 private:
  Tokens draw_prototype(Rng& rng) const {
    std::vector<TokenId> pool = word_ids_;
    rng.shuffle(pool);
    return Tokens(pool.begin(), pool.begin() + cfg_.prototype_length);
  }

  StyleTaskConfig cfg_;
  std::vector<TokenId> topic_ids_;
  std::vector<TokenId> variant_ids_;
  std::vector<TokenId> word_ids_;
  std::vector<std::vector<Tokens>> prototypes_;
};

/// Vocabulary shared by both synthetic families.
inline Vocabulary suite_vocabulary(const StyleTaskConfig& cfg, int words = 24) {
  std::vector<std::string> s;
  for (int d = 0; d < 10; ++d) s.push_back(std::to_string(d));
  s.push_back("+");
  s.push_back("=");
  for (int t = 0; t < cfg.topics; ++t) s.push_back("T" + std::to_string(t));
  for (int v = 0; v < cfg.variants; ++v) s.push_back("v" + std::to_string(v));
  for (int w = 0; w < words; ++w) s.push_back("w" + std::to_string(w));
  return Vocabulary(s);
}

}  // namespace prefmix::rewards
