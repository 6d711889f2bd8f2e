#pragma once

#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "prefmix/core/parallel.hpp"
#include "prefmix/rewards/oracle.hpp"
#include "prefmix/tinylm/sampling.hpp"

namespace prefmix::evalkit {

using rewards::Prompt;
using rewards::RewardOracle;
using tinylm::PolicyModel;

enum class Outcome { a_wins, b_wins, tie };

inline std::string to_string(Outcome o) {
  switch (o) {
    case Outcome::a_wins: return "a_wins";
    case Outcome::b_wins: return "b_wins";
    case Outcome::tie: return "tie";
  }
  return "?";
}

inline Outcome parse_outcome(const std::string& s) {
  for (auto o : {Outcome::a_wins, Outcome::b_wins, Outcome::tie})
    if (to_string(o) == s) return o;
  fail(Errc::invalid_argument, "unknown outcome '" + s + "'");
}

inline Outcome judge(double reward_a, double reward_b) {
  if (reward_a > reward_b) return Outcome::a_wins;
  if (reward_b > reward_a) return Outcome::b_wins;
  return Outcome::tie;
}

struct MatchResult {
  std::string prompt_id;
  std::string task_family;
  double reward_a = 0.0;
  double reward_b = 0.0;
  int len_a = 0;
  int len_b = 0;
  Outcome outcome = Outcome::tie;

  bool operator==(const MatchResult&) const = default;
};

inline MatchResult make_match(std::string prompt_id, std::string family, double ra, double rb, int la, int lb) {
  return {std::move(prompt_id), std::move(family), ra, rb, la, lb, judge(ra, rb)};
}

inline nlohmann::json to_json(const MatchResult& m) {
  return {{"prompt_id", m.prompt_id}, {"task_family", m.task_family}, {"reward_a", m.reward_a},
          {"reward_b", m.reward_b},   {"len_a", m.len_a},             {"len_b", m.len_b},
          {"outcome", to_string(m.outcome)}};
}

inline MatchResult match_from_json(const nlohmann::json& j) {
  MatchResult m{j.at("prompt_id").get<std::string>(), j.at("task_family").get<std::string>(),
                j.at("reward_a").get<double>(),       j.at("reward_b").get<double>(),
                j.at("len_a").get<int>(),             j.at("len_b").get<int>(),
                parse_outcome(j.at("outcome").get<std::string>())};
  require(m.outcome == judge(m.reward_a, m.reward_b), Errc::invalid_argument,
          "outcome of " + m.prompt_id + " disagrees with its rewards");
  return m;
}

/// Greedy response of each policy per prompt, judged by the oracle. Length
/// counts content tokens (everything before EOS).
inline std::vector<MatchResult> head_to_head(const PolicyModel& a, const PolicyModel& b,
                                             const std::vector<Prompt>& prompts, const RewardOracle& oracle,
                                             int max_len, unsigned threads = 1) {
  require(a.vocab() == b.vocab(), Errc::vocabulary_mismatch, "compared policies use different vocabularies");
  std::vector<MatchResult> out(prompts.size());
  parallel_for(prompts.size(), threads, [&](std::size_t i) {
    const auto& p = prompts[i];
    const auto ya = tinylm::greedy(a, p.ids, max_len);
    const auto yb = tinylm::greedy(b, p.ids, max_len);
    out[i] = make_match(p.id, p.family, oracle.score(p, ya), oracle.score(p, yb),
                        static_cast<int>(rewards::strip_eos(ya).size()), static_cast<int>(rewards::strip_eos(yb).size()));
  });
  return out;
}

inline std::vector<MatchResult> head_to_head(const PolicyModel& a, const PolicyModel& b,
                                             const std::vector<Prompt>& prompts, const RewardOracle& oracle,
                                             const tinylm::SamplingConfig& cfg, unsigned threads = 1) {
  return head_to_head(a, b, prompts, oracle, cfg.max_len, threads);
}

}  // namespace prefmix::evalkit
