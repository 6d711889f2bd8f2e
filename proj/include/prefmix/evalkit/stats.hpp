#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "prefmix/core/random.hpp"
#include "prefmix/core/stats.hpp"
#include "prefmix/evalkit/match.hpp"

namespace prefmix::evalkit {

/// Credit a tie earns in win rates.
inline constexpr double default_tie_credit = 0.5;

struct WinRate {
  double rate = 0.0;
  std::size_t n = 0;
};

inline double credit(Outcome o, double tie_credit = default_tie_credit) {
  return o == Outcome::a_wins ? 1.0 : o == Outcome::tie ? tie_credit : 0.0;
}

/// (wins + tie_credit * ties) / n, optionally restricted to one family.
inline WinRate win_rate(std::span<const MatchResult> results, const std::optional<std::string>& family = std::nullopt,
                        double tie_credit = default_tie_credit) {
  WinRate w;
  double s = 0.0;
  for (const auto& r : results) {
    if (family && r.task_family != *family) continue;
    s += credit(r.outcome, tie_credit);
    ++w.n;
  }
  require(w.n > 0, Errc::empty_stratum, "no results" + (family ? " for family '" + *family + "'" : std::string()));
  w.rate = s / static_cast<double>(w.n);
  return w;
}

struct OutcomeRates {
  double win = 0.0, loss = 0.0, tie = 0.0;
};

inline OutcomeRates outcome_rates(std::span<const MatchResult> results) {
  OutcomeRates r;
  if (results.empty()) return r;
  for (const auto& m : results) (m.outcome == Outcome::a_wins ? r.win : m.outcome == Outcome::b_wins ? r.loss : r.tie) += 1;
  const double n = static_cast<double>(results.size());
  r.win /= n;
  r.loss /= n;
  r.tie /= n;
  return r;
}

/// Simplified length control: logistic regression of the outcome on the
/// length difference only.
struct LcWinRate {
  double value = 0.0;
  bool fallback = false;  // too few results or no length variation: raw rate
  double theta0 = 0.0;
  double theta1 = 0.0;
  int iterations = 0;
  bool converged = true;
};

class NonConvergence : public Error {
 public:
  NonConvergence(std::string msg, double theta0, double theta1)
      : Error(Errc::non_convergence, std::move(msg)), theta0(theta0), theta1(theta1) {}
  double theta0;
  double theta1;
};

inline constexpr std::size_t lc_min_results = 10;
inline constexpr int lc_max_iterations = 100;
inline constexpr double lc_gradient_tolerance = 1e-10;
/// Ridge on the length coefficient only. Keeps the fit finite when length
/// separates the outcomes perfectly; the intercept is not penalised.
inline constexpr double lc_length_ridge = 1e-2;

/// Fits y ~ sigma(theta0 + theta1 * z) by Newton's method, with
/// z = (len_a - len_b) / sd(len_a - len_b) (scaled but not centred, so z = 0
/// means equal lengths). Each tie enters once as a win and once as a loss.
/// The objective is the mean log-likelihood minus lc_length_ridge/2 *
/// theta1^2. The reported rate is sigma(theta0).
inline LcWinRate lc_win_rate(std::span<const MatchResult> results, double ridge = lc_length_ridge) {
  LcWinRate out;
  const double raw = results.empty() ? 0.0 : win_rate(results).rate;
  std::vector<double> diff;
  for (const auto& r : results) diff.push_back(static_cast<double>(r.len_a - r.len_b));
  double mu = 0.0, var = 0.0;
  for (double d : diff) mu += d;
  if (!diff.empty()) mu /= static_cast<double>(diff.size());
  for (double d : diff) var += (d - mu) * (d - mu);
  if (diff.size() > 1) var /= static_cast<double>(diff.size() - 1);
  if (results.size() < lc_min_results || !(var > 0.0)) {
    out.value = raw;
    out.fallback = true;
    return out;
  }
  const double sd = std::sqrt(var);
  std::vector<double> z, y;
  for (std::size_t i = 0; i < results.size(); ++i) {
    const double zi = diff[i] / sd;
    if (results[i].outcome == Outcome::tie) {
      z.insert(z.end(), {zi, zi});
      y.insert(y.end(), {1.0, 0.0});
    } else {
      z.push_back(zi);
      y.push_back(results[i].outcome == Outcome::a_wins ? 1.0 : 0.0);
    }
  }
  const double m = static_cast<double>(z.size());
  const auto loglik = [&](double t0, double t1) {
    double s = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) {
      const double eta = t0 + t1 * z[i];
      // log sigma(eta) = -softplus(-eta)
      const double sp_neg = eta > 0 ? std::log1p(std::exp(-eta)) : -eta + std::log1p(std::exp(eta));
      s += y[i] * -sp_neg + (1.0 - y[i]) * (-sp_neg - eta);
    }
    return s / m - 0.5 * ridge * t1 * t1;
  };
  double t0 = 0.0, t1 = 0.0;
  for (int it = 0; it <= lc_max_iterations; ++it) {
    double g0 = 0.0, g1 = 0.0, h00 = 0.0, h01 = 0.0, h11 = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) {
      const double eta = t0 + t1 * z[i];
      const double p = eta >= 0 ? 1.0 / (1.0 + std::exp(-eta)) : std::exp(eta) / (1.0 + std::exp(eta));
      const double r = y[i] - p;
      g0 += r;
      g1 += r * z[i];
      const double w = p * (1.0 - p);
      h00 += w;
      h01 += w * z[i];
      h11 += w * z[i] * z[i];
    }
    g0 /= m;
    g1 /= m;
    h00 /= m;
    h01 /= m;
    h11 /= m;
    g1 -= ridge * t1;
    h11 += ridge;
    if (std::hypot(g0, g1) < lc_gradient_tolerance) {
      out.theta0 = t0;
      out.theta1 = t1;
      out.iterations = it;
      out.value = 1.0 / (1.0 + std::exp(-t0));
      return out;
    }
    if (it == lc_max_iterations) break;
    // Newton direction on the concave log-likelihood, falling back to the
    // gradient when the Hessian is numerically singular.
    const double det = h00 * h11 - h01 * h01;
    double d0 = g0, d1 = g1;
    if (det > 1e-300 * std::max(1.0, h00 * h11)) {
      d0 = (h11 * g0 - h01 * g1) / det;
      d1 = (h00 * g1 - h01 * g0) / det;
    }
    // Step halving guards the early iterations; close to the optimum the
    // log-likelihood differences drown in round-off, so full steps are taken.
    double step = 1.0;
    if (std::hypot(g0, g1) > 1e-6) {
      const double base = loglik(t0, t1);
      while (step > 1e-10 && loglik(t0 + step * d0, t1 + step * d1) < base) step *= 0.5;
    }
    t0 += step * d0;
    t1 += step * d1;
  }
  throw NonConvergence("length-controlled fit did not converge in " + std::to_string(lc_max_iterations) +
                           " Newton iterations (theta0=" + std::to_string(t0) + ", theta1=" + std::to_string(t1) + ")",
                       t0, t1);
}

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};

/// Linear-interpolation quantile of sorted data.
inline double quantile_sorted(std::span<const double> sorted, double q) {
  if (sorted.empty()) return 0.0;
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto i = static_cast<std::size_t>(std::floor(pos));
  const auto j = std::min(i + 1, sorted.size() - 1);
  return sorted[i] + (pos - static_cast<double>(i)) * (sorted[j] - sorted[i]);
}

using Statistic = std::function<double(std::span<const MatchResult>)>;

/// Percentile bootstrap over prompt-level resamples.
inline Interval bootstrap_ci(std::span<const MatchResult> results, const Statistic& statistic,
                             int n_resamples = 2000, double level = 0.95, std::uint64_t seed = 0) {
  require(!results.empty(), Errc::empty_stratum, "bootstrap needs results");
  require(n_resamples >= 1 && level > 0.0 && level < 1.0, Errc::invalid_argument, "bad bootstrap settings");
  Rng rng(seed);
  std::vector<MatchResult> resample(results.size());
  std::vector<double> stats(static_cast<std::size_t>(n_resamples));
  for (auto& s : stats) {
    for (auto& r : resample) r = results[rng.below(results.size())];
    s = statistic(resample);
  }
  std::sort(stats.begin(), stats.end());
  const double alpha = 1.0 - level;
  return {quantile_sorted(stats, alpha / 2.0), quantile_sorted(stats, 1.0 - alpha / 2.0)};
}

/// Same resampling scheme specialised to the raw win rate, without copying
/// results.
inline Interval bootstrap_win_rate_ci(std::span<const MatchResult> results, int n_resamples = 2000,
                                      double level = 0.95, std::uint64_t seed = 0,
                                      double tie_credit = default_tie_credit) {
  require(!results.empty(), Errc::empty_stratum, "bootstrap needs results");
  require(n_resamples >= 1 && level > 0.0 && level < 1.0, Errc::invalid_argument, "bad bootstrap settings");
  std::vector<double> c;
  for (const auto& r : results) c.push_back(credit(r.outcome, tie_credit));
  Rng rng(seed);
  std::vector<double> stats(static_cast<std::size_t>(n_resamples));
  for (auto& s : stats) {
    double sum = 0.0;
    for (std::size_t i = 0; i < c.size(); ++i) sum += c[rng.below(c.size())];
    s = sum / static_cast<double>(c.size());
  }
  std::sort(stats.begin(), stats.end());
  const double alpha = 1.0 - level;
  return {quantile_sorted(stats, alpha / 2.0), quantile_sorted(stats, 1.0 - alpha / 2.0)};
}

inline Histogram reward_histogram(std::span<const double> rewards, std::size_t bins) {
  return make_histogram(rewards, bins);
}

}  // namespace prefmix::evalkit
