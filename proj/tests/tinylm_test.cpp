#include <gtest/gtest.h>

#include <bit>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numeric>
#include <vector>

#include "prefmix/tinylm/checkpoint.hpp"
#include "prefmix/tinylm/sampling.hpp"
#include "prefmix/tinylm/scoring.hpp"
#include "test_support.hpp"

namespace {

using namespace prefmix;
using namespace prefmix::tinylm;
using prefmix::testing::central_differences;
using prefmix::testing::constant_logit_model;
using prefmix::testing::max_relative_error;
using prefmix::testing::random_model;
using prefmix::testing::random_tokens;

TEST(Vocabulary, SpecialsAndLookup) {
  Vocabulary v({"a", "b"});
  EXPECT_EQ(v.size(), 6u);
  EXPECT_EQ(v.id("<eos>"), Vocabulary::eos);
  EXPECT_EQ(v.id("b"), 5);
  EXPECT_EQ(v.decode(v.encode("a b <eos>")), "a b <eos>");
  EXPECT_THROW(v.encode("a zz"), Error);
  EXPECT_THROW(Vocabulary({"a", "a"}), Error);
  std::vector<std::string> many(61, "");
  for (int i = 0; i < 61; ++i) many[static_cast<std::size_t>(i)] = "s" + std::to_string(i);
  EXPECT_THROW(Vocabulary{many}, Error);
}

TEST(Vocabulary, ByteProfileRoundTrip) {
  const auto v = Vocabulary::byte_level();
  const std::string text = "h\xc3\xa9llo <eos>";
  const auto ids = v.encode(text);
  EXPECT_EQ(ids.back(), Vocabulary::eos);
  EXPECT_EQ(v.decode(ids), text);
}

TEST(Logprob, EmptyResponseIsZero) {
  const auto m = random_model(1);
  EXPECT_EQ(logprob(m, Tokens{4, 5}, Tokens{}), 0.0);
}

TEST(Logprob, ConstantLogitModelIsUniform) {
  const Vocabulary v4(std::vector<std::string>{});
  ASSERT_EQ(v4.size(), 4u);
  const auto m = constant_logit_model(v4, {0.0, 0.0, 0.0, 0.0});
  EXPECT_NEAR(logprob(m, Tokens{0}, Tokens{1, 3, 2}), -4.158883, 1e-6);
  EXPECT_NEAR(logprob(m, Tokens{0}, Tokens{1, 3, 2}), 3.0 * std::log(0.25), 1e-12);
}

TEST(Logprob, HandModelWithFixedStepProbabilities) {
  // Specials get logit -1000 (probability exactly 0 in double); t0/t1 get 0.8/0.2.
  const Vocabulary v({"t0", "t1"});
  const auto m = constant_logit_model(v, {-1000, -1000, -1000, -1000, std::log(0.8), std::log(0.2)});
  const double lp = logprob(m, Tokens{4}, Tokens{4, 5});
  EXPECT_NEAR(lp, -1.832581, 1e-6);
  EXPECT_NEAR(lp, std::log(0.8) + std::log(0.2), 1e-12);
}

TEST(Logprob, RejectsOverlongAndOutOfRange) {
  const auto m = random_model(2, 4, 8, 12, 8);
  try {
    logprob(m, Tokens{4, 4, 4}, Tokens{5, 5, 5, 5});
    FAIL() << "expected sequence-too-long";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::sequence_too_long);
  }
  try {
    logprob(m, Tokens{4}, Tokens{99});
    FAIL() << "expected token-out-of-range";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::token_out_of_range);
  }
}

TEST(Logprob, NextTokenDistributionsNormalize) {
  Rng rng(7);
  for (int trial = 0; trial < 1000; ++trial) {
    const auto m = random_model(1000 + static_cast<std::uint64_t>(trial), 6, 6, 8, 12);
    Tokens ctx = random_tokens(rng, 1 + rng.below(10), static_cast<int>(m.vocab().size()));
    const auto p = next_token_probs(m, ctx);
    double s = 0.0;
    for (double x : p) {
      ASSERT_GE(x, 0.0);
      s += x;
    }
    ASSERT_NEAR(s, 1.0, 1e-9);
  }
}

TEST(LogprobGrad, MatchesCentralDifferences) {
  Rng rng(11);
  for (int inst = 0; inst < 20; ++inst) {
    const auto m = random_model(200 + static_cast<std::uint64_t>(inst));
    const int V = static_cast<int>(m.vocab().size());
    const Tokens x = random_tokens(rng, 1 + rng.below(4), V);
    const Tokens y = random_tokens(rng, 1 + rng.below(5), V);
    const auto g = logprob_grad(m, x, y);
    const auto fd = central_differences(std::vector<double>(m.params().begin(), m.params().end()),
                                        [&](const std::vector<double>& p) {
                                          PolicyModel probe(m.arch(), m.vocab(), p);
                                          return logprob(probe, x, y);
                                        });
    EXPECT_LT(max_relative_error(g.grad, fd), 1e-4) << "instance " << inst;
  }
}

TEST(LogprobGrad, FrozenModelRejected) {
  const auto m = random_model(3).frozen_copy();
  try {
    logprob_grad(m, Tokens{4}, Tokens{5});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::frozen_model);
  }
}

TEST(LogprobGrad, ConstantLogitModelHasZeroGradientOffTheBias) {
  const auto m = constant_logit_model(prefmix::testing::letters(3), std::vector<double>(7, 0.0));
  const auto g = logprob_grad(m, Tokens{4, 5}, Tokens{6, 4, 2});
  const auto L = m.layout();
  for (std::size_t i = 0; i < L.bout; ++i) ASSERT_EQ(g.grad[i], 0.0) << "param " << i;
  double bias_norm = 0.0;
  for (std::size_t i = L.bout; i < L.total; ++i) bias_norm += std::abs(g.grad[i]);
  EXPECT_GT(bias_norm, 0.0);
}

TEST(LogprobGrad, SumOfPerTokenGradients) {
  const auto m = random_model(5);
  const Tokens x{4, 6};
  const Tokens y{5, 7, 4, 2};
  const auto full = logprob_grad(m, x, y);
  std::vector<double> summed(m.param_count(), 0.0);
  for (std::size_t t = 0; t < y.size(); ++t) {
    const Tokens upto(y.begin(), y.begin() + static_cast<std::ptrdiff_t>(t + 1));
    const Tokens before(y.begin(), y.begin() + static_cast<std::ptrdiff_t>(t));
    const auto a = logprob_grad(m, x, upto);
    const auto b = logprob_grad(m, x, before);
    for (std::size_t i = 0; i < summed.size(); ++i) summed[i] += a.grad[i] - b.grad[i];
  }
  for (std::size_t i = 0; i < summed.size(); ++i) ASSERT_NEAR(summed[i], full.grad[i], 1e-10);
}

TEST(Sampling, NucleusWorkedExample) {
  const std::vector<double> p{0.5, 0.3, 0.2};
  const auto q = nucleus(p, 0.7);
  EXPECT_NEAR(q[0], 0.625, 1e-12);
  EXPECT_NEAR(q[1], 0.375, 1e-12);
  EXPECT_EQ(q[2], 0.0);
}

TEST(Sampling, NucleusTiesBreakByTokenId) {
  const std::vector<double> p{0.25, 0.25, 0.25, 0.25};
  const auto q = nucleus(p, 0.5);
  EXPECT_NEAR(q[0], 0.5, 1e-12);
  EXPECT_NEAR(q[1], 0.5, 1e-12);
  EXPECT_EQ(q[2], 0.0);
  EXPECT_EQ(q[3], 0.0);
}

TEST(Sampling, SmallTemperatureIsGreedy) {
  const auto m = random_model(9);
  SamplingConfig cfg;
  cfg.temperature = 1e-7;
  cfg.top_p = 1.0;
  cfg.max_len = 6;
  cfg.seed = 1;
  const Tokens x{4, 5};
  const auto y = sample(m, x, cfg);
  Tokens ctx = model_input(x, {});
  Tokens expect;
  for (int i = 0; i < 6; ++i) {
    const auto p = next_token_probs(m, ctx);
    const auto best = static_cast<TokenId>(std::max_element(p.begin(), p.end()) - p.begin());
    expect.push_back(best);
    ctx.push_back(best);
    if (best == Vocabulary::eos) break;
  }
  EXPECT_EQ(y, expect);
  cfg.seed = 999;
  EXPECT_EQ(sample(m, x, cfg), y);
}

TEST(Sampling, SeedsReproduceBitForBit) {
  const auto m = random_model(10);
  SamplingConfig cfg{1.0, 0.9, 8, 1234};
  const auto a = sample(m, Tokens{4}, cfg);
  const auto b = sample(m, Tokens{4}, cfg);
  EXPECT_EQ(a, b);
  bool any_diff = false;
  for (std::uint64_t s = 0; s < 20 && !any_diff; ++s) any_diff = sample(m, Tokens{4}, cfg.with_seed(s)) != a;
  EXPECT_TRUE(any_diff);
}

TEST(Sampling, StopsAtContextWindow) {
  const auto m = random_model(12, 4, 8, 12, 6);
  SamplingConfig cfg{1.0, 1.0, 50, 3};
  const auto y = sample(m, Tokens{4, 5}, cfg);
  EXPECT_LE(y.size(), 2u);
}

std::vector<double> empirical_first_token(const std::function<Tokens(std::uint64_t)>& draw, std::size_t V,
                                          int n) {
  std::vector<double> freq(V, 0.0);
  for (int i = 0; i < n; ++i) {
    const auto y = draw(derive_seed(42, {static_cast<std::uint64_t>(i)}));
    freq[static_cast<std::size_t>(y.at(0))] += 1.0;
  }
  for (double& f : freq) f /= n;
  return freq;
}

TEST(Sampling, EmpiricalFrequenciesMatchTruncatedDistribution) {
  const auto m = random_model(21, 4, 6, 8, 12);
  const Tokens x{5, 6};
  SamplingConfig cfg{0.8, 0.85, 1, 0};
  const auto logits = next_token_logits(m, model_input(x, {}));
  const auto exact = prefmix::testing::ref_nucleus(prefmix::testing::ref_softmax(logits, cfg.temperature), cfg.top_p);
  const auto freq = empirical_first_token([&](std::uint64_t s) { return sample(m, x, cfg.with_seed(s)); },
                                          m.vocab().size(), 100000);
  EXPECT_LT(prefmix::testing::total_variation(freq, exact), 0.01);
}

TEST(Interpolated, WorkedExample) {
  const auto w = interpolate(std::vector<double>{0.8, 0.2}, std::vector<double>{0.5, 0.5}, {1.5, -0.5});
  EXPECT_NEAR(w[0], 0.888889, 1e-6);
  EXPECT_NEAR(w[1], 0.111111, 1e-6);
  const double a0 = std::pow(0.8, 1.5) * std::pow(0.5, -0.5);
  const double a1 = std::pow(0.2, 1.5) * std::pow(0.5, -0.5);
  EXPECT_NEAR(a0, 1.011928, 1e-6);
  EXPECT_NEAR(a1, 0.126491, 1e-6);
}

TEST(Interpolated, DegenerateExponents) {
  const auto a = random_model(30);
  const auto b = random_model(31);
  const Tokens ctx = model_input(Tokens{4, 5}, {});
  SamplingConfig cfg{0.9, 1.0, 4, 0};
  const auto la = next_token_logits(a, ctx);
  const auto lb = next_token_logits(b, ctx);
  const auto only_a = interpolated_step_distribution(la, lb, {1.0, 0.0}, cfg);
  const auto pa = step_distribution(la, cfg);
  for (std::size_t i = 0; i < pa.size(); ++i) EXPECT_NEAR(only_a[i], pa[i], 1e-12);
  const auto same = interpolated_step_distribution(la, la, {0.5, 0.5}, cfg);
  for (std::size_t i = 0; i < pa.size(); ++i) EXPECT_NEAR(same[i], pa[i], 1e-12);
  for (std::uint64_t s = 0; s < 10; ++s)
    EXPECT_EQ(sample_interpolated(a, b, {1.0, 0.0}, Tokens{4, 5}, cfg.with_seed(s)),
              sample(a, Tokens{4, 5}, cfg.with_seed(s)));
}

TEST(Interpolated, NegativeExponentOnZeroProbabilityStaysFinite) {
  const auto w = interpolate(std::vector<double>{0.5, 0.5}, std::vector<double>{1.0, 0.0}, {1.5, -0.5});
  for (double x : w) EXPECT_TRUE(std::isfinite(x));
  EXPECT_GT(w[1], w[0]);
}

TEST(Interpolated, EmpiricalFrequenciesMatchGeometricMean) {
  const auto a = random_model(40, 4, 6, 8, 12);
  const auto b = random_model(41, 4, 6, 8, 12);
  const Tokens x{6};
  SamplingConfig cfg{0.9, 0.9, 1, 0};
  const auto ctx = model_input(x, {});
  for (auto ex : {std::pair{1.5, -0.5}, std::pair{0.5, 0.5}}) {
    using namespace prefmix::testing;
    const auto exact = ref_nucleus(ref_geometric(ref_softmax(next_token_logits(a, ctx), cfg.temperature),
                                                 ref_softmax(next_token_logits(b, ctx), cfg.temperature), ex.first,
                                                 ex.second),
                                   cfg.top_p);
    const auto freq = empirical_first_token(
        [&](std::uint64_t s) { return sample_interpolated(a, b, ex, x, cfg.with_seed(s)); }, a.vocab().size(),
        100000);
    EXPECT_LT(total_variation(freq, exact), 0.01);
  }
}

TEST(Embedding, SingleTokenResponseIsThatHiddenState) {
  const auto m = random_model(50);
  const Tokens x{4, 5};
  const Tokens y{6};
  const auto e = embed_response(m, x, y);
  Activations act;
  const auto input = model_input(x, y);
  forward(m, input, act);
  const auto d = static_cast<std::size_t>(m.arch().d_model);
  for (std::size_t i = 0; i < d; ++i) EXPECT_EQ(e[i], act.h2[(input.size() - 1) * d + i]);
}

TEST(Embedding, CosineAndOrderSensitivity) {
  const auto m = random_model(51);
  const Tokens x{4};
  const auto e1 = embed_response(m, x, Tokens{5, 6, 7});
  EXPECT_NEAR(cosine(e1, e1), 1.0, 1e-9);
  const auto e2 = embed_response(m, x, Tokens{6, 5, 7});
  double diff = 0.0;
  for (std::size_t i = 0; i < e1.size(); ++i) diff += std::abs(e1[i] - e2[i]);
  EXPECT_GT(diff, 1e-6);
  try {
    embed_response(m, x, Tokens{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::empty_response);
  }
}

TEST(Checkpoint, RoundTripIsBitExact) {
  auto m = random_model(60);
  const auto path = (std::filesystem::temp_directory_path() / "prefmix_ckpt_test.json").string();
  save_checkpoint(m, path);
  const auto back = load_checkpoint(path);
  EXPECT_TRUE(back == m);
  for (std::size_t i = 0; i < m.param_count(); ++i)
    ASSERT_EQ(std::bit_cast<std::uint64_t>(back.params()[i]), std::bit_cast<std::uint64_t>(m.params()[i]));
  std::filesystem::remove(path);
}

TEST(Model, ParameterBudget) {
  Architecture a;
  a.d_model = 24;
  a.d_ff = 48;
  a.context = 40;
  const auto m = PolicyModel::random_init(a, prefmix::testing::letters(48), 1);
  EXPECT_LE(m.param_count(), max_param_count);
  Architecture big = a;
  big.d_model = 128;
  big.d_ff = 512;
  EXPECT_THROW(PolicyModel::random_init(big, prefmix::testing::letters(48), 1), Error);
}

}  // namespace
