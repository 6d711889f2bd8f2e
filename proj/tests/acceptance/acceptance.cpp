// Acceptance run: one PASS/FAIL line per criterion. Tolerances and seed
// counts are pinned below; nothing is read from the environment.

#include <bit>
#include <chrono>
#include <cstdio>
#include <functional>
#include <iostream>
#include <numbers>
#include <set>

#include "../test_support.hpp"
#include "prefmix/harness/run.hpp"
#include "prefmix/tinylm/sampling.hpp"

using namespace prefmix;
using namespace prefmix::harness;
using prefmix::testing::central_differences;
using prefmix::testing::max_relative_error;
using prefmix::testing::random_model;
using prefmix::testing::random_tokens;
using prefmix::testing::vector_relative_error;
using tinylm::Tokens;

namespace {

constexpr double grad_tolerance = 1e-4;
constexpr int grad_instances = 20;
constexpr double ln2_tolerance = 1e-9;
constexpr int ln2_batches = 100;
constexpr double sg_unfrozen_gap = 1e-2;
constexpr double tv_tolerance = 0.01;
constexpr int sampler_draws = 100000;
constexpr double worked_tolerance = 1e-6;
constexpr int experiment_seeds = 10;
constexpr int complementarity_needed = 8;
constexpr int mix_needed = 7;
constexpr int filter_needed = 7;
constexpr double corruption = 0.3;
constexpr double filter_p = 0.4;
constexpr int temperature_samples = 8;  // per prompt and temperature
constexpr int diverse_n = 4;
constexpr double lc_independent_gap = 0.02;
constexpr double lc_determined_gap = 0.05;
constexpr double coverage_lo = 0.92, coverage_hi = 0.98;
constexpr int jsonl_pairs = 1000;

constexpr double minute = 60.0;

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

int failures = 0;

void verdict(int id, const std::string& name, bool pass, const std::string& detail) {
  std::printf("[%s] criterion %d: %s | %s\n", pass ? "PASS" : "FAIL", id, name.c_str(), detail.c_str());
  std::fflush(stdout);
  if (!pass) ++failures;
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

constexpr int kVocab = 8;

optim::PreferencePair random_pair(Rng& rng) {
  optim::PreferencePair p;
  p.prompt = random_tokens(rng, 1 + rng.below(3), kVocab);
  do {
    p.chosen = random_tokens(rng, 1 + rng.below(3), kVocab);
    p.rejected = random_tokens(rng, 1 + rng.below(3), kVocab);
  } while (p.chosen == p.rejected);
  return p;
}

std::vector<optim::PreferencePair> random_batch(Rng& rng, std::size_t n) {
  std::vector<optim::PreferencePair> b;
  for (std::size_t i = 0; i < n; ++i) b.push_back(random_pair(rng));
  return b;
}

std::vector<optim::Rollout> random_rollouts(Rng& rng, std::size_t n) {
  std::vector<optim::Rollout> r;
  for (std::size_t i = 0; i < n; ++i)
    r.push_back({random_tokens(rng, 1 + rng.below(3), kVocab), random_tokens(rng, 1 + rng.below(3), kVocab)});
  return r;
}

tinylm::PolicyModel with_params(const tinylm::PolicyModel& m, const std::vector<double>& x) {
  tinylm::PolicyModel c = m;
  std::copy(x.begin(), x.end(), c.mutable_params().begin());
  return c;
}

std::vector<double> params_of(const tinylm::PolicyModel& m) { return {m.params().begin(), m.params().end()}; }

// Scalar objectives written out directly; the finite differences only ever
// evaluate these.
double ref_dpo(const tinylm::PolicyModel& pol, const tinylm::PolicyModel& ref,
               const std::vector<optim::PreferencePair>& b, double beta) {
  double s = 0.0;
  for (const auto& p : b) {
    const double dw = tinylm::logprob(pol, p.prompt, p.chosen) - tinylm::logprob(ref, p.prompt, p.chosen);
    const double dl = tinylm::logprob(pol, p.prompt, p.rejected) - tinylm::logprob(ref, p.prompt, p.rejected);
    s += std::log1p(std::exp(-beta * (dw - dl)));
  }
  return s / static_cast<double>(b.size());
}

// HyPO regulariser with the ratio either held at `frozen` or recomputed.
double ref_reg(const tinylm::PolicyModel& m, const tinylm::PolicyModel& ref, const std::vector<optim::Rollout>& ro,
               double lambda, const std::vector<double>* frozen) {
  double s = 0.0;
  for (std::size_t i = 0; i < ro.size(); ++i) {
    const double lp = tinylm::logprob(m, ro[i].prompt, ro[i].response);
    const double w = frozen ? (*frozen)[i] : std::exp(lp - tinylm::logprob(ref, ro[i].prompt, ro[i].response));
    s += lp * w;
  }
  return -lambda * s / static_cast<double>(ro.size());
}

std::vector<double> ratios(const tinylm::PolicyModel& m, const tinylm::PolicyModel& ref,
                           const std::vector<optim::Rollout>& ro) {
  std::vector<double> r;
  for (const auto& x : ro)
    r.push_back(std::exp(tinylm::logprob(m, x.prompt, x.response) - tinylm::logprob(ref, x.prompt, x.response)));
  return r;
}

// ---------------------------------------------------------------- 1 to 4

void gradient_audits() {
  const auto t0 = Clock::now();
  Rng rng(101);
  double worst_dpo = 0, worst_hypo = 0, worst_sft = 0, worst_lp = 0;
  for (int i = 0; i < grad_instances; ++i) {
    const auto u = static_cast<std::uint64_t>(i);
    const auto pol = random_model(1000 + u, 4, 4, 6, 12);
    const auto ref = random_model(2000 + u, 4, 4, 6, 12).frozen_copy();
    const auto x0 = params_of(pol);

    const auto b = random_batch(rng, 3);
    optim::DpoConfig dc{0.5 + rng.uniform()};
    const auto d = optim::dpo_loss(pol, ref, b, dc);
    worst_dpo = std::max(worst_dpo, max_relative_error(d.grad, central_differences(x0, [&](const std::vector<double>& x) {
                                                         return ref_dpo(with_params(pol, x), ref, b, dc.beta);
                                                       })));

    const auto ro = random_rollouts(rng, 3);
    optim::HypoConfig hc;
    hc.dpo = dc;
    hc.lambda = 0.1 + rng.uniform();
    const auto h = optim::hypo_loss(pol, ref, b, ro, hc);
    const auto frozen = ratios(pol, ref, ro);
    worst_hypo = std::max(worst_hypo, max_relative_error(h.grad, central_differences(x0, [&](const std::vector<double>& x) {
                                                           const auto m = with_params(pol, x);
                                                           return ref_dpo(m, ref, b, dc.beta) + ref_reg(m, ref, ro, hc.lambda, &frozen);
                                                         })));

    std::vector<optim::SftExample> corpus;
    for (int k = 0; k < 3; ++k) corpus.push_back({random_tokens(rng, 1 + rng.below(3), kVocab), random_tokens(rng, 1 + rng.below(3), kVocab)});
    const auto s = optim::sft_loss(pol, corpus);
    worst_sft = std::max(worst_sft, max_relative_error(s.grad, central_differences(x0, [&](const std::vector<double>& x) {
                                                         double nll = 0.0;
                                                         std::size_t tokens = 0;
                                                         const auto m = with_params(pol, x);
                                                         for (const auto& e : corpus) {
                                                           nll -= tinylm::logprob(m, e.prompt, e.response);
                                                           tokens += e.response.size();
                                                         }
                                                         return nll / static_cast<double>(tokens);
                                                       })));

    const Tokens px = random_tokens(rng, 1 + rng.below(4), kVocab), py = random_tokens(rng, 1 + rng.below(5), kVocab);
    const auto g = tinylm::logprob_grad(pol, px, py);
    worst_lp = std::max(worst_lp, max_relative_error(g.grad, central_differences(x0, [&](const std::vector<double>& x) {
                                                       return tinylm::logprob(with_params(pol, x), px, py);
                                                     })));
  }
  const double secs = since(t0);
  const double worst = std::max({worst_dpo, worst_hypo, worst_sft, worst_lp});
  verdict(1, "gradient audits", worst < grad_tolerance && secs < minute,
          fmt("%d instances each; max rel err dpo %.2e hypo %.2e sft %.2e logprob %.2e (< %.0e); %.1fs (< 60s)",
              grad_instances, worst_dpo, worst_hypo, worst_sft, worst_lp, grad_tolerance, secs));
}

void dpo_identity() {
  Rng rng(202);
  double worst = 0.0;
  bool bit_identical = true;
  for (int i = 0; i < ln2_batches; ++i) {
    const auto pol = random_model(3000 + static_cast<std::uint64_t>(i));
    const auto ref = pol.frozen_copy();
    const auto b = random_batch(rng, 1 + rng.below(8));
    optim::HypoConfig hc;
    hc.dpo.beta = 0.01 + 2.0 * rng.uniform();
    hc.lambda = 0.0;
    const auto d = optim::dpo_loss(pol, ref, b, hc.dpo);
    worst = std::max(worst, std::abs(d.loss - std::numbers::ln2));
    const auto h = optim::hypo_loss(pol, ref, b, random_rollouts(rng, 2), hc);
    bit_identical = bit_identical && std::bit_cast<std::uint64_t>(h.loss) == std::bit_cast<std::uint64_t>(d.loss) &&
                    h.grad.size() == d.grad.size();
    for (std::size_t k = 0; bit_identical && k < d.grad.size(); ++k)
      bit_identical = std::bit_cast<std::uint64_t>(h.grad[k]) == std::bit_cast<std::uint64_t>(d.grad[k]);
  }
  verdict(2, "DPO identity", worst < ln2_tolerance && bit_identical,
          fmt("%d batches; max |loss - ln 2| = %.2e (< %.0e); hypo(lambda=0) bit-identical: %s", ln2_batches, worst,
              ln2_tolerance, bit_identical ? "yes" : "no"));
}

void stop_gradient_check() {
  const auto t0 = Clock::now();
  Rng rng(303);
  double worst_frozen = 0.0, smallest_gap = 1e300;
  for (int i = 0; i < grad_instances; ++i) {
    // Policy and reference drawn independently and lambda = 1, so the ratio
    // term carries real weight.
    const auto u = static_cast<std::uint64_t>(i);
    const auto pol = random_model(4000 + u, 4, 4, 6, 12);
    const auto ref = random_model(5000 + u, 4, 4, 6, 12).frozen_copy();
    const auto b = random_batch(rng, 2);
    const auto ro = random_rollouts(rng, 3);
    optim::HypoConfig hc;
    hc.dpo.beta = 0.5;
    hc.lambda = 1.0;
    const auto h = optim::hypo_loss(pol, ref, b, ro, hc);
    const auto frozen = ratios(pol, ref, ro);
    const auto x0 = params_of(pol);
    const auto sg = central_differences(x0, [&](const std::vector<double>& x) {
      const auto m = with_params(pol, x);
      return ref_dpo(m, ref, b, hc.dpo.beta) + ref_reg(m, ref, ro, hc.lambda, &frozen);
    });
    const auto full = central_differences(x0, [&](const std::vector<double>& x) {
      const auto m = with_params(pol, x);
      return ref_dpo(m, ref, b, hc.dpo.beta) + ref_reg(m, ref, ro, hc.lambda, nullptr);
    });
    worst_frozen = std::max(worst_frozen, max_relative_error(h.grad, sg));
    smallest_gap = std::min(smallest_gap, vector_relative_error(h.grad, full));
  }
  const double secs = since(t0);
  verdict(3, "stop-gradient check", worst_frozen < grad_tolerance && smallest_gap > sg_unfrozen_gap && secs < minute,
          fmt("%d instances; frozen-sg FD max rel err %.2e (< %.0e); unfrozen FD min rel gap %.3f (> %.0e); %.1fs",
              grad_instances, worst_frozen, grad_tolerance, smallest_gap, sg_unfrozen_gap, secs));
}

std::vector<double> first_token_frequencies(const std::function<Tokens(std::uint64_t)>& draw, std::size_t V) {
  std::vector<double> freq(V, 0.0);
  for (int i = 0; i < sampler_draws; ++i) freq[static_cast<std::size_t>(draw(derive_seed(77, {static_cast<std::uint64_t>(i)})).at(0))] += 1.0;
  for (double& f : freq) f /= sampler_draws;
  return freq;
}

void sampler_exactness() {
  using namespace prefmix::testing;
  const auto t0 = Clock::now();
  const auto a = random_model(600, 4, 6, 8, 12);
  const auto b = random_model(601, 4, 6, 8, 12);
  const std::size_t V = a.vocab().size();
  const Tokens x{5, 6};
  const auto ctx = tinylm::model_input(x, {});
  const auto la = tinylm::next_token_logits(a, ctx), lb = tinylm::next_token_logits(b, ctx);
  double worst = 0.0;
  std::string parts;
  const auto check = [&](const char* name, const std::vector<double>& exact, const std::function<Tokens(std::uint64_t)>& draw) {
    const double tv = total_variation(first_token_frequencies(draw, V), exact);
    worst = std::max(worst, tv);
    parts += fmt("%s %.4f ", name, tv);
  };
  const tinylm::SamplingConfig plain{1.3, 1.0, 1, 0}, nucleus{0.8, 0.85, 1, 0}, interp{0.9, 0.9, 1, 0};
  check("plain", ref_softmax(la, plain.temperature), [&](std::uint64_t s) { return tinylm::sample(a, x, plain.with_seed(s)); });
  check("nucleus", ref_nucleus(ref_softmax(la, nucleus.temperature), nucleus.top_p),
        [&](std::uint64_t s) { return tinylm::sample(a, x, nucleus.with_seed(s)); });
  for (auto ex : {datakit::mixp_extrapolate, datakit::mixp_geometric_mean})
    check(ex.first > 1.0 ? "interp(1.5,-0.5)" : "interp(0.5,0.5)",
          ref_nucleus(ref_geometric(ref_softmax(la, interp.temperature), ref_softmax(lb, interp.temperature), ex.first, ex.second),
                      interp.top_p),
          [&](std::uint64_t s) { return tinylm::sample_interpolated(a, b, ex, x, interp.with_seed(s)); });
  const auto w = tinylm::interpolate(std::vector<double>{0.8, 0.2}, std::vector<double>{0.5, 0.5}, {1.5, -0.5});
  const double werr = std::max(std::abs(w[0] - 0.888889), std::abs(w[1] - 0.111111));
  const double secs = since(t0);
  verdict(4, "sampler exactness", worst < tv_tolerance && werr < worked_tolerance && secs < 2 * minute,
          fmt("V=%zu, %d draws; TV %s(< %.2f); worked example (%.6f, %.6f) err %.1e; %.1fs", V, sampler_draws,
              parts.c_str(), tv_tolerance, w[0], w[1], werr, secs));
}

// ---------------------------------------------------------------- 5 to 8

struct SeedOutcome {
  double on_arith = 0, off_arith = 0, on_style = 0, off_style = 0;
  std::map<double, double> sweep;  // on_ratio -> combined win rate
  double unfiltered = 0, filtered = 0;
  bool filter_props = true;
  std::vector<double> tau_reward;
  double diverse_distinct = 0, plain_distinct = 0, diverse_reward = 0, plain_reward = 0;
};

struct Timings {
  double sft = 0, pools = 0, complementarity = 0, sweep = 0, filtering = 0, diversity = 0;
};

double family_rate(const evalkit::EvalReport& r, const char* f) { return evalkit::family_summary(r, f).win_rate; }

// Quality score recomputed from the stored rewards.
double quality(const datakit::PreferencePair& p) { return *p.chosen_reward + *p.rejected_reward; }

bool filter_properties(const datakit::PreferenceDataset& pool) {
  std::vector<std::set<std::string>> kept_sets;
  bool ok = true;
  std::vector<std::string> keys;
  for (std::size_t i = 0; i < pool.size(); ++i) keys.push_back(std::to_string(i));
  auto tagged = pool;
  for (std::size_t i = 0; i < tagged.size(); ++i) tagged.pairs[i].meta["acceptance_index"] = i;
  for (double p : default_filter_grid) {
    datakit::FilterConfig fc{datakit::FilterCriterion::quality, p, false};
    const auto kept = datakit::filter(tagged, fc);
    const auto want = static_cast<std::size_t>(std::ceil(p * static_cast<double>(pool.size()) - 1e-9));
    ok = ok && kept.size() == want;
    std::set<std::string> ids;
    double min_kept = 1e300;
    for (const auto& k : kept.pairs) {
      ids.insert(k.meta["acceptance_index"].dump());
      min_kept = std::min(min_kept, quality(k));
    }
    double max_dropped = -1e300;
    for (std::size_t i = 0; i < tagged.size(); ++i)
      if (!ids.count(std::to_string(i))) max_dropped = std::max(max_dropped, quality(tagged.pairs[i]));
    ok = ok && min_kept >= max_dropped;
    if (!kept_sets.empty())
      ok = ok && std::includes(ids.begin(), ids.end(), kept_sets.back().begin(), kept_sets.back().end());
    kept_sets.push_back(std::move(ids));
  }
  return ok;
}

void diversity(const World& w, SeedOutcome& out) {
  const auto& oracle = *w.suite.oracle;
  const auto base = w.config.sampling;
  for (double tau : default_temperature_grid) {
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < w.prompts.size(); ++i)
      for (int k = 0; k < temperature_samples; ++k) {
        auto cfg = base;
        cfg.temperature = tau;
        cfg.seed = derive_seed(w.seed, {900, i, static_cast<std::uint64_t>(k)});
        sum += oracle.score(w.prompts[i], tinylm::sample(w.sft, w.prompts[i].ids, cfg));
        ++n;
      }
    out.tau_reward.push_back(sum / static_cast<double>(n));
  }
  double dd = 0, pd = 0, dr = 0, pr = 0;
  for (std::size_t i = 0; i < w.prompts.size(); ++i) {
    const auto& p = w.prompts[i];
    const auto d = datakit::sample_diverse_iterative(w.sft, p.ids, diverse_n, base.with_seed(derive_seed(w.seed, {901, i})));
    std::set<Tokens> ds(d.responses.begin(), d.responses.end()), ps;
    for (const auto& r : d.responses) dr += oracle.score(p, r);
    for (int k = 0; k < diverse_n; ++k) {
      const auto r = tinylm::sample(w.sft, p.ids, base.with_seed(derive_seed(w.seed, {902, i, static_cast<std::uint64_t>(k)})));
      ps.insert(r);
      pr += oracle.score(p, r);
    }
    dd += static_cast<double>(ds.size());
    pd += static_cast<double>(ps.size());
  }
  const double np = static_cast<double>(w.prompts.size());
  out.diverse_distinct = dd / np;
  out.plain_distinct = pd / np;
  out.diverse_reward = dr / (np * diverse_n);
  out.plain_reward = pr / (np * diverse_n);
}

SeedOutcome run_seed(std::uint64_t seed, Timings& t) {
  SeedOutcome out;
  const WorldConfig wc;
  auto t0 = Clock::now();
  World w = build_sft_world(wc, seed);
  t.sft += since(t0);

  t0 = Clock::now();
  diversity(w, out);
  t.diversity += since(t0);

  t0 = Clock::now();
  add_pools(w);
  t.pools += since(t0);

  Condition base;  // experiment defaults: beta 1, 4 epochs, 200 pairs
  base.train.seed = derive_seed(seed, {80});

  t0 = Clock::now();
  for (auto m : {Method::on_dpo, Method::off_dpo}) {
    Condition c = base;
    c.method = m;
    const auto r = run_condition(w, c).report;
    (m == Method::on_dpo ? out.on_arith : out.off_arith) = family_rate(r, "arith");
    (m == Method::on_dpo ? out.on_style : out.off_style) = family_rate(r, "style");
  }
  t.complementarity += since(t0);

  t0 = Clock::now();
  for (double ratio : {0.0, 0.25, 0.5, 0.75, 1.0}) {
    Condition c = base;
    c.method = Method::simplemix;
    c.on_ratio = ratio;
    out.sweep[ratio] = run_condition(w, c).report.overall.win_rate;
  }
  t.sweep += since(t0);

  t0 = Clock::now();
  Condition c = base;
  c.method = Method::simplemix;
  c.corruption = corruption;
  out.unfiltered = run_condition(w, c).report.overall.win_rate;
  c.filter = datakit::FilterConfig{datakit::FilterCriterion::quality, filter_p, false};
  out.filtered = run_condition(w, c).report.overall.win_rate;
  Condition corrupted;
  corrupted.corruption = corruption;
  out.filter_props = filter_properties(prepare_off_pool(w, corrupted));
  t.filtering += since(t0);
  return out;
}

void experiments() {
  Timings t;
  std::vector<SeedOutcome> seeds;
  for (int s = 1; s <= experiment_seeds; ++s) {
    const auto t0 = Clock::now();
    seeds.push_back(run_seed(static_cast<std::uint64_t>(s), t));
    const auto& o = seeds.back();
    std::fprintf(stderr,
                 "  seed %d (%.0fs): on a%.3f s%.3f | off a%.3f s%.3f | sweep %.3f %.3f %.3f %.3f %.3f | corrupt %.3f -> "
                 "%.3f | tau %.3f %.3f %.3f %.3f | distinct %.2f/%.2f reward %.3f/%.3f\n",
                 s, since(t0), o.on_arith, o.on_style, o.off_arith, o.off_style, o.sweep.at(0.0), o.sweep.at(0.25),
                 o.sweep.at(0.5), o.sweep.at(0.75), o.sweep.at(1.0), o.unfiltered, o.filtered, o.tau_reward[0],
                 o.tau_reward[1], o.tau_reward[2], o.tau_reward[3], o.diverse_distinct, o.plain_distinct,
                 o.diverse_reward, o.plain_reward);
  }
  const double n = static_cast<double>(seeds.size());

  int arith_wins = 0, style_wins = 0;
  for (const auto& o : seeds) {
    arith_wins += o.on_arith > o.off_arith;
    style_wins += o.off_style > o.on_style;
  }
  const double t5 = t.sft + t.pools + t.complementarity;
  verdict(5, "complementarity",
          arith_wins >= complementarity_needed && style_wins >= complementarity_needed && t5 < 15 * minute,
          fmt("on > off on arith in %d/%d seeds, off > on on style in %d/%d (need %d each); %.0fs (< 900s)", arith_wins,
              experiment_seeds, style_wins, experiment_seeds, complementarity_needed, t5));

  int mix_wins = 0;
  std::map<double, double> mean_sweep;
  for (const auto& o : seeds) {
    mix_wins += o.sweep.at(0.5) >= o.sweep.at(0.0) && o.sweep.at(0.5) >= o.sweep.at(1.0);
    for (const auto& [r, v] : o.sweep) mean_sweep[r] += v / n;
  }
  double best_ratio = 0.0, best = -1.0;
  std::string curve;
  for (const auto& [r, v] : mean_sweep) {
    curve += fmt("%.2f:%.3f ", r, v);
    if (v > best) {
      best = v;
      best_ratio = r;
    }
  }
  const bool interior = best_ratio > 0.0 && best_ratio < 1.0;
  const double t6 = t.sft + t.pools + t.sweep;
  verdict(6, "SimpleMix dominance", mix_wins >= mix_needed && interior && t6 < 30 * minute,
          fmt("ratio 0.5 >= both pure conditions in %d/%d seeds (need %d); seed-mean sweep %sargmax %.2f (interior: %s); "
              "%.0fs (< 1800s)",
              mix_wins, experiment_seeds, mix_needed, curve.c_str(), best_ratio, interior ? "yes" : "no", t6));

  std::vector<double> tau_mean(default_temperature_grid.size(), 0.0);
  double dd = 0, pd = 0, dr = 0, pr = 0;
  for (const auto& o : seeds) {
    for (std::size_t i = 0; i < tau_mean.size(); ++i) tau_mean[i] += o.tau_reward[i] / n;
    dd += o.diverse_distinct / n;
    pd += o.plain_distinct / n;
    dr += o.diverse_reward / n;
    pr += o.plain_reward / n;
  }
  bool monotone = true;
  for (std::size_t i = 1; i < tau_mean.size(); ++i) monotone = monotone && tau_mean[i] <= tau_mean[i - 1];
  const double t7 = t.sft + t.diversity;
  verdict(7, "diversity-quality tradeoff", monotone && dd > pd && dr < pr && t7 < 5 * minute,
          fmt("seed-mean reward at tau 0.7/1/2/3: %.4f %.4f %.4f %.4f (non-increasing: %s); diverse vs tau=0.7: "
              "distinct %.2f vs %.2f, reward %.4f vs %.4f; %.0fs (< 300s)",
              tau_mean[0], tau_mean[1], tau_mean[2], tau_mean[3], monotone ? "yes" : "no", dd, pd, dr, pr, t7));

  int filter_wins = 0;
  bool props = true;
  for (const auto& o : seeds) {
    filter_wins += o.filtered > o.unfiltered;
    props = props && o.filter_props;
  }
  verdict(8, "filtering behavior", filter_wins >= filter_needed && props,
          fmt("quality p=%.1f + SimpleMix beats unfiltered on a %.0f%%-corrupted pool in %d/%d seeds (need %d); "
              "size/separation/nesting over p in {0.1..0.5}: %s",
              filter_p, 100 * corruption, filter_wins, experiment_seeds, filter_needed, props ? "exact" : "VIOLATED"));
}

// ---------------------------------------------------------------- 9, 10

evalkit::MatchResult with_lengths(evalkit::Outcome o, int la, int lb) {
  evalkit::MatchResult m;
  m.prompt_id = "p";
  m.task_family = "f";
  m.reward_a = o == evalkit::Outcome::a_wins ? 1.0 : 0.0;
  m.reward_b = o == evalkit::Outcome::b_wins ? 1.0 : 0.0;
  m.len_a = la;
  m.len_b = lb;
  m.outcome = o;
  return m;
}

void evaluation_statistics() {
  using evalkit::Outcome;
  const auto t0 = Clock::now();
  Rng rng(909);
  double worst_independent = 0.0, worst_determined = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<evalkit::MatchResult> ind, det;
    for (int i = 0; i < 2000; ++i) {
      const int la = static_cast<int>(rng.below(10)), lb = static_cast<int>(rng.below(10));
      const double u = rng.uniform();
      ind.push_back(with_lengths(u < 0.55 ? Outcome::a_wins : u < 0.65 ? Outcome::tie : Outcome::b_wins, la, lb));
      int da = static_cast<int>(rng.below(10)), db = static_cast<int>(rng.below(10));
      while (da == db) db = static_cast<int>(rng.below(10));
      det.push_back(with_lengths(da > db ? Outcome::a_wins : Outcome::b_wins, da, db));
    }
    worst_independent = std::max(worst_independent, std::abs(evalkit::lc_win_rate(ind).value - evalkit::win_rate(ind).rate));
    worst_determined = std::max(worst_determined, std::abs(evalkit::lc_win_rate(det).value - 0.5));
  }
  int covered = 0;
  const int trials = 500;
  for (int t = 0; t < trials; ++t) {
    std::vector<evalkit::MatchResult> rs;
    for (int i = 0; i < 200; ++i) rs.push_back(with_lengths(rng.bernoulli(0.6) ? Outcome::a_wins : Outcome::b_wins, 1, 1));
    const auto ci = evalkit::bootstrap_win_rate_ci(rs, 2000, 0.95, derive_seed(909, {static_cast<std::uint64_t>(t)}));
    covered += ci.lo <= 0.6 && 0.6 <= ci.hi;
  }
  const double coverage = covered / static_cast<double>(trials);
  const double secs = since(t0);
  verdict(9, "evaluation statistics",
          worst_independent < lc_independent_gap && worst_determined < lc_determined_gap && coverage >= coverage_lo &&
              coverage <= coverage_hi && secs < 3 * minute,
          fmt("length-independent max |LC-raw| %.4f (< %.2f); length-determined max |LC-0.5| %.4f (< %.2f); bootstrap "
              "coverage %.3f in [%.2f, %.2f]; %.1fs",
              worst_independent, lc_independent_gap, worst_determined, lc_determined_gap, coverage, coverage_lo,
              coverage_hi, secs));
}

json tiny_run(const std::string& name, const fs::path& out) {
  auto j = json::parse(R"({
    "suite": {"topics": 4, "variants": 2},
    "world": {"d_model": 16, "d_ff": 32, "arith_examples": 2, "style_examples": 2, "generator_examples": 1,
              "onpolicy_rounds": 2, "offpolicy_rounds": 1,
              "sft": {"max_lr": 0.01, "epochs": 2, "batch_size": 16},
              "generator_train": {"max_lr": 0.01, "epochs": 2, "batch_size": 16}},
    "mix": {"on_ratio": 0.5, "total_pairs": 24},
    "dpo": {"beta": 1.0},
    "hypo": {"lambda": 0.1},
    "train": {"max_lr": 0.01, "epochs": 1, "batch_size": 4},
    "eval": {"bootstrap_resamples": 200},
    "seeds": [5]
  })");
  j["name"] = name;
  j["out"] = out.string();
  return j;
}

void pipeline_integrity() {
  const auto t0 = Clock::now();
  const auto dir = fs::temp_directory_path() / "prefmix_acceptance";
  fs::remove_all(dir);

  // JSONL round trip on random pairs over the suite vocabulary.
  const auto suite = make_suite(rewards::StyleTaskConfig{});
  Rng rng(1010);
  datakit::PreferenceDataset ds;
  const auto V = suite.vocab.size();
  for (int i = 0; i < jsonl_pairs; ++i) {
    datakit::PreferencePair p;
    p.prompt = random_tokens(rng, 1 + rng.below(6), static_cast<int>(V));
    p.chosen = random_tokens(rng, 1 + rng.below(8), static_cast<int>(V));
    p.rejected = random_tokens(rng, 1 + rng.below(8), static_cast<int>(V));
    p.source = rng.bernoulli(0.5) ? datakit::Source::on : datakit::Source::off;
    if (rng.bernoulli(0.8)) {
      p.chosen_reward = rng.normal();
      p.rejected_reward = rng.normal();
    }
    p.generator_id = "g" + std::to_string(rng.below(5));
    p.task_family = rng.bernoulli(0.5) ? "arith" : "style";
    p.meta["k"] = i;
    ds.pairs.push_back(std::move(p));
  }
  fs::create_directories(dir);
  datakit::write_jsonl(ds, suite.vocab, dir / "a.jsonl");
  const auto back = datakit::read_jsonl(dir / "a.jsonl", suite.vocab);
  bool same = back.size() == ds.size();
  for (std::size_t i = 0; same && i < ds.size(); ++i) {
    const auto &x = ds.pairs[i], &y = back.pairs[i];
    same = x.prompt == y.prompt && x.chosen == y.chosen && x.rejected == y.rejected && x.source == y.source &&
           x.chosen_reward == y.chosen_reward && x.rejected_reward == y.rejected_reward &&
           x.generator_id == y.generator_id && x.task_family == y.task_family && x.meta == y.meta;
  }
  datakit::write_jsonl(back, suite.vocab, dir / "b.jsonl");
  same = same && read_file(dir / "a.jsonl") == read_file(dir / "b.jsonl");

  // Five methods in one comparison group.
  auto j = tiny_run("group", dir);
  j["sweep"] = {{"method", {"off_dpo", "on_dpo", "simplemix", "hypo", "dpo_mix_p"}}};
  const auto records = cmd_train(parse_run_config(j));
  std::set<std::size_t> budgets;
  for (const auto& r : records) {
    const auto manifest = json::parse(read_file(dir / "group" / r.point / "seed-5" / r.artifacts["data_manifest"].get<std::string>()));
    budgets.insert(manifest_pairs(manifest));
  }
  const bool equal_budget = records.size() == 5 && budgets.size() == 1 && *budgets.begin() == 24;

  // Two identical seeded runs.
  cmd_train(parse_run_config(tiny_run("twice", dir / "one")));
  cmd_train(parse_run_config(tiny_run("twice", dir / "two")));
  const bool identical = read_file(dir / "one" / "twice" / "seed-5" / "report.json") ==
                         read_file(dir / "two" / "twice" / "seed-5" / "report.json");
  const double secs = since(t0);
  verdict(10, "pipeline integrity", same && equal_budget && identical && secs < 5 * minute,
          fmt("JSONL round trip of %d pairs identical: %s; 5-method group budgets %s; repeated run EvalReport "
              "byte-identical: %s; %.1fs",
              jsonl_pairs, same ? "yes" : "no", equal_budget ? "all 24 pairs" : "UNEQUAL", identical ? "yes" : "no", secs));
}

}  // namespace

int main() {
  gradient_audits();
  dpo_identity();
  stop_gradient_check();
  sampler_exactness();
  experiments();
  evaluation_statistics();
  pipeline_integrity();
  std::printf("%d criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
