#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "prefmix/core/parallel.hpp"
#include "prefmix/datakit/pair.hpp"
#include "prefmix/tinylm/scoring.hpp"

namespace prefmix::datakit {

enum class FilterCriterion { quality, onpoliciness, contrastiveness, similarity };

inline std::string to_string(FilterCriterion c) {
  switch (c) {
    case FilterCriterion::quality: return "quality";
    case FilterCriterion::onpoliciness: return "onpoliciness";
    case FilterCriterion::contrastiveness: return "contrastiveness";
    case FilterCriterion::similarity: return "similarity";
  }
  return "?";
}

inline FilterCriterion parse_filter_criterion(const std::string& s) {
  for (auto c : {FilterCriterion::quality, FilterCriterion::onpoliciness, FilterCriterion::contrastiveness,
                 FilterCriterion::similarity})
    if (to_string(c) == s) return c;
  fail(Errc::invalid_argument, "unknown filter criterion '" + s + "'");
}

struct FilterConfig {
  FilterCriterion criterion = FilterCriterion::quality;
  double fraction = 1.0;
  // Quality variant: rank by the chosen reward alone instead of the sum.
  bool chosen_only = false;

  void validate() const {
    require(fraction > 0.0 && fraction <= 1.0, Errc::invalid_argument, "filter fraction must lie in (0, 1]");
  }
};

struct FilterContext {
  const tinylm::PolicyModel* reference = nullptr;
  unsigned threads = 1;
};

inline std::size_t filter_keep_count(std::size_t n, double fraction) {
  return static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(n) - 1e-9));
}

/// Higher is better for every criterion; similarity is negated cosine.
inline std::vector<double> filter_scores(const PreferenceDataset& ds, const FilterConfig& cfg,
                                         const FilterContext& ctx = {}) {
  const bool needs_rewards =
      cfg.criterion == FilterCriterion::quality || cfg.criterion == FilterCriterion::contrastiveness;
  if (needs_rewards) {
    for (std::size_t i = 0; i < ds.size(); ++i)
      require(ds.pairs[i].has_rewards(), Errc::missing_rewards,
              "pair " + std::to_string(i) + " lacks rewards needed by the " + to_string(cfg.criterion) + " filter");
  } else {
    require(ctx.reference != nullptr, Errc::missing_reference,
            "the " + to_string(cfg.criterion) + " filter needs a reference model");
  }
  std::vector<double> s(ds.size());
  parallel_for(ds.size(), ctx.threads, [&](std::size_t i) {
    const auto& p = ds.pairs[i];
    switch (cfg.criterion) {
      case FilterCriterion::quality:
        s[i] = cfg.chosen_only ? *p.chosen_reward : *p.chosen_reward + *p.rejected_reward;
        break;
      case FilterCriterion::contrastiveness:
        s[i] = *p.chosen_reward - *p.rejected_reward;
        break;
      case FilterCriterion::onpoliciness:
        s[i] = tinylm::logprob(*ctx.reference, p.prompt, p.chosen) + tinylm::logprob(*ctx.reference, p.prompt, p.rejected);
        break;
      case FilterCriterion::similarity: {
        const auto a = tinylm::embed_response(*ctx.reference, p.prompt, p.chosen);
        const auto b = tinylm::embed_response(*ctx.reference, p.prompt, p.rejected);
        s[i] = -tinylm::cosine(a, b);
        break;
      }
    }
  });
  return s;
}

/// Keeps the top ceil(p * n) pairs under the criterion. Ranking is a stable
/// sort so ties go to the earlier pair; kept pairs stay in input order.
inline PreferenceDataset filter(const PreferenceDataset& ds, const FilterConfig& cfg, const FilterContext& ctx = {}) {
  cfg.validate();
  const auto scores = filter_scores(ds, cfg, ctx);
  std::vector<std::size_t> rank(ds.size());
  std::iota(rank.begin(), rank.end(), 0);
  std::stable_sort(rank.begin(), rank.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  const std::size_t keep = filter_keep_count(ds.size(), cfg.fraction);
  rank.resize(keep);
  std::sort(rank.begin(), rank.end());

  PreferenceDataset out;
  for (auto i : rank) out.pairs.push_back(ds.pairs[i]);
  out.manifest = ds.manifest;
  if (!out.manifest.is_object()) out.manifest = nlohmann::json::object();
  nlohmann::json applied = {{"criterion", to_string(cfg.criterion)},
                            {"fraction", cfg.fraction},
                            {"input", ds.size()},
                            {"kept", keep},
                            {"kept_indices", rank}};
  if (cfg.criterion == FilterCriterion::quality) applied["chosen_only"] = cfg.chosen_only;
  out.manifest["filters"].push_back(std::move(applied));
  return out;
}

}  // namespace prefmix::datakit
