#pragma once

#include <memory>
#include <span>
#include <string>
#include <vector>

#include "prefmix/rewards/tasks.hpp"

namespace prefmix::rewards {

/// Deterministic scoring function standing in for a reward model.
class RewardOracle {
 public:
  virtual ~RewardOracle() = default;
  virtual std::string family() const = 0;
  virtual double score(const Prompt& prompt, std::span<const TokenId> response) const = 0;

  /// Scores a response set for one prompt. Overridden by oracles that can
  /// batch (the remote client sends one request per prompt).
  virtual std::vector<double> score_all(const Prompt& prompt, std::span<const Tokens> responses) const {
    std::vector<double> out;
    out.reserve(responses.size());
    for (const auto& r : responses) out.push_back(score(prompt, r));
    return out;
  }
};

class ArithOracle final : public RewardOracle {
 public:
  explicit ArithOracle(ArithTask task) : task_(std::move(task)) {}
  std::string family() const override { return arith_family; }
  double score(const Prompt& p, std::span<const TokenId> r) const override { return task_.score(p.ids, r); }
  const ArithTask& task() const { return task_; }

 private:
  ArithTask task_;
};

class StyleOracle final : public RewardOracle {
 public:
  explicit StyleOracle(std::shared_ptr<const StyleTask> task) : task_(std::move(task)) {}
  std::string family() const override { return style_family; }
  double score(const Prompt& p, std::span<const TokenId> r) const override { return task_->score(p.ids, r); }
  const StyleTask& task() const { return *task_; }

 private:
  std::shared_ptr<const StyleTask> task_;
};

/// Routes each prompt to the oracle of its task family.
class SuiteOracle final : public RewardOracle {
 public:
  SuiteOracle(std::shared_ptr<const ArithOracle> arith, std::shared_ptr<const StyleOracle> style)
      : arith_(std::move(arith)), style_(std::move(style)) {}

  std::string family() const override { return "suite"; }

  double score(const Prompt& p, std::span<const TokenId> r) const override {
    if (p.family == arith_family) return arith_->score(p, r);
    if (p.family == style_family) return style_->score(p, r);
    fail(Errc::malformed_prompt, "no oracle for task family '" + p.family + "'");
  }

  const ArithOracle& arith() const { return *arith_; }
  const StyleOracle& style() const { return *style_; }

 private:
  std::shared_ptr<const ArithOracle> arith_;
  std::shared_ptr<const StyleOracle> style_;
};

struct BestWorst {
  std::size_t chosen = 0;
  std::size_t rejected = 0;
  std::vector<double> scores;
};

/// Highest score -> chosen, lowest -> rejected; earlier index wins ties.
/// The rejected response must differ from the chosen one; a set where every
/// response is identical is degenerate.
inline BestWorst label_scores(std::span<const double> scores, std::span<const Tokens> responses) {
  require(scores.size() >= 2 && scores.size() == responses.size(), Errc::invalid_argument,
          "labeling needs at least two scored responses");
  BestWorst out;
  out.scores.assign(scores.begin(), scores.end());
  for (std::size_t i = 1; i < scores.size(); ++i)
    if (scores[i] > scores[out.chosen]) out.chosen = i;
  bool found = false;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (i == out.chosen || responses[i] == responses[out.chosen]) continue;
    if (!found || scores[i] < scores[out.rejected]) {
      out.rejected = i;
      found = true;
    }
  }
  require(found, Errc::degenerate_responses, "all responses are identical");
  return out;
}

inline BestWorst label_best_worst(const RewardOracle& oracle, const Prompt& prompt, std::span<const Tokens> responses) {
  require(responses.size() >= 2, Errc::invalid_argument, "labeling needs at least two responses");
  const auto scores = oracle.score_all(prompt, responses);
  return label_scores(scores, responses);
}

}  // namespace prefmix::rewards
