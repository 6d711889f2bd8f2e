#pragma once

#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "prefmix/evalkit/stats.hpp"

namespace prefmix::evalkit {

struct ReportConfig {
  int bootstrap_resamples = 2000;
  double level = 0.95;
  std::uint64_t seed = 0;
  std::size_t histogram_bins = 10;
  double tie_credit = default_tie_credit;
};

struct StratumSummary {
  std::string family;  // "all" for the overall row
  std::size_t n = 0;
  double win_rate = 0.0;
  double loss_rate = 0.0;
  double tie_rate = 0.0;
  LcWinRate lc;
  Interval ci;
};

struct EvalReport {
  StratumSummary overall;
  std::vector<StratumSummary> families;  // sorted by name
  Histogram rewards_a;
  Histogram rewards_b;
  Histogram lengths_a;
  Histogram lengths_b;
  std::vector<MatchResult> matches;
  ReportConfig config;
};

namespace detail {

inline StratumSummary summarize(const std::string& family, std::span<const MatchResult> rs, const ReportConfig& cfg) {
  StratumSummary s;
  s.family = family;
  s.n = rs.size();
  s.win_rate = win_rate(rs, std::nullopt, cfg.tie_credit).rate;
  const auto o = outcome_rates(rs);
  s.loss_rate = o.loss;
  s.tie_rate = o.tie;
  try {
    s.lc = lc_win_rate(rs);
  } catch (const NonConvergence& e) {
    // Reported as a raw-rate fallback with the last iterate kept.
    s.lc.value = s.win_rate;
    s.lc.fallback = true;
    s.lc.converged = false;
    s.lc.theta0 = e.theta0;
    s.lc.theta1 = e.theta1;
    s.lc.iterations = lc_max_iterations;
  }
  s.ci = bootstrap_win_rate_ci(rs, cfg.bootstrap_resamples, cfg.level, derive_seed(cfg.seed, {name_hash(family)}),
                               cfg.tie_credit);
  return s;
}

inline nlohmann::json to_json(const StratumSummary& s) {
  return {{"family", s.family},
          {"n", s.n},
          {"win_rate", s.win_rate},
          {"loss_rate", s.loss_rate},
          {"tie_rate", s.tie_rate},
          {"lc_win_rate", {{"value", s.lc.value},
                           {"method", "simplified LC (length-only logistic regression)"},
                           {"fallback_to_raw", s.lc.fallback},
                           {"converged", s.lc.converged},
                           {"theta0", s.lc.theta0},
                           {"theta1", s.lc.theta1},
                           {"iterations", s.lc.iterations}}},
          {"ci", {{"lo", s.ci.lo}, {"hi", s.ci.hi}}}};
}

}  // namespace detail

inline EvalReport make_report(std::vector<MatchResult> matches, const ReportConfig& cfg = {}) {
  require(!matches.empty(), Errc::empty_stratum, "cannot report on zero matches");
  EvalReport r;
  r.config = cfg;
  r.overall = detail::summarize("all", matches, cfg);
  std::map<std::string, std::vector<MatchResult>> by_family;
  for (const auto& m : matches) by_family[m.task_family].push_back(m);
  for (const auto& [fam, rs] : by_family) r.families.push_back(detail::summarize(fam, rs, cfg));
  std::vector<double> ra, rb, la, lb;
  for (const auto& m : matches) {
    ra.push_back(m.reward_a);
    rb.push_back(m.reward_b);
    la.push_back(m.len_a);
    lb.push_back(m.len_b);
  }
  // Shared ranges so the two conditions are comparable bin by bin.
  const auto range = [](const std::vector<double>& a, const std::vector<double>& b) {
    double lo = a.front(), hi = a.front();
    for (const auto* v : {&a, &b})
      for (double x : *v) {
        lo = std::min(lo, x);
        hi = std::max(hi, x);
      }
    return std::pair{lo, hi};
  };
  const auto [rlo, rhi] = range(ra, rb);
  const auto [llo, lhi] = range(la, lb);
  r.rewards_a = make_histogram(ra, cfg.histogram_bins, rlo, rhi);
  r.rewards_b = make_histogram(rb, cfg.histogram_bins, rlo, rhi);
  r.lengths_a = make_histogram(la, cfg.histogram_bins, llo, lhi);
  r.lengths_b = make_histogram(lb, cfg.histogram_bins, llo, lhi);
  r.matches = std::move(matches);
  return r;
}

inline const StratumSummary& family_summary(const EvalReport& r, const std::string& family) {
  for (const auto& f : r.families)
    if (f.family == family) return f;
  fail(Errc::empty_stratum, "report has no family '" + family + "'");
}

inline nlohmann::json to_json(const EvalReport& r) {
  nlohmann::json fams = nlohmann::json::array();
  for (const auto& f : r.families) fams.push_back(detail::to_json(f));
  nlohmann::json matches = nlohmann::json::array();
  for (const auto& m : r.matches) matches.push_back(to_json(m));
  return {{"format", "prefmix-eval-report"},
          {"judge", "reward oracle"},
          {"decoding", "greedy"},
          {"overall", detail::to_json(r.overall)},
          {"families", std::move(fams)},
          {"histograms",
           {{"reward_a", prefmix::to_json(r.rewards_a)},
            {"reward_b", prefmix::to_json(r.rewards_b)},
            {"length_a", prefmix::to_json(r.lengths_a)},
            {"length_b", prefmix::to_json(r.lengths_b)}}},
          {"bootstrap", {{"resamples", r.config.bootstrap_resamples}, {"level", r.config.level}, {"seed", r.config.seed}}},
          {"tie_credit", r.config.tie_credit},
          {"matches", std::move(matches)}};
}

/// Rebuilds a report from its persisted matches and settings.
inline EvalReport report_from_json(const nlohmann::json& j) {
  ReportConfig cfg;
  cfg.bootstrap_resamples = j.at("bootstrap").at("resamples").get<int>();
  cfg.level = j.at("bootstrap").at("level").get<double>();
  cfg.seed = j.at("bootstrap").at("seed").get<std::uint64_t>();
  cfg.tie_credit = j.at("tie_credit").get<double>();
  cfg.histogram_bins = j.at("histograms").at("reward_a").at("counts").size();
  std::vector<MatchResult> ms;
  for (const auto& m : j.at("matches")) ms.push_back(match_from_json(m));
  return make_report(std::move(ms), cfg);
}

/// family,n,win_rate,lc_win_rate,ci_lo,ci_hi with the overall row first.
inline std::string to_csv(const EvalReport& r) {
  std::ostringstream os;
  os.precision(17);
  os << "family,n,win_rate,lc_win_rate,ci_lo,ci_hi\n";
  const auto row = [&](const StratumSummary& s) {
    os << s.family << ',' << s.n << ',' << s.win_rate << ',' << s.lc.value << ',' << s.ci.lo << ',' << s.ci.hi << '\n';
  };
  row(r.overall);
  for (const auto& f : r.families) row(f);
  return os.str();
}

/// bin_lo,bin_hi,count for one histogram.
inline std::string histogram_csv(const Histogram& h) {
  std::ostringstream os;
  os.precision(17);
  os << "bin_lo,bin_hi,count\n";
  for (std::size_t i = 0; i < h.counts.size(); ++i) os << h.edges[i] << ',' << h.edges[i + 1] << ',' << h.counts[i] << '\n';
  return os.str();
}

}  // namespace prefmix::evalkit
