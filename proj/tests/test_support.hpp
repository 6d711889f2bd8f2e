#pragma once

// Test-only oracles. Nothing here calls into the code paths it is used to
// check: finite differences only evaluate scalar functions, and the
// distribution helpers reimplement softmax / nucleus truncation directly.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "prefmix/core/random.hpp"
#include "prefmix/tinylm/model.hpp"

namespace prefmix::testing {

/// Central differences of a scalar function of the parameter vector.
inline std::vector<double> central_differences(std::vector<double> x,
                                               const std::function<double(const std::vector<double>&)>& f,
                                               double h = 1e-4) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = x[i];
    x[i] = orig + h;
    const double fp = f(x);
    x[i] = orig - h;
    const double fm = f(x);
    x[i] = orig;
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

/// Per-coordinate relative error |a - n| / max(|a|, |n|, floor). The floor
/// keeps coordinates whose true gradient is ~0 from dividing by round-off.
inline double max_relative_error(std::span<const double> analytic, std::span<const double> numeric,
                                 double floor = 1e-4) {
  double worst = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double denom = std::max({std::abs(analytic[i]), std::abs(numeric[i]), floor});
    worst = std::max(worst, std::abs(analytic[i] - numeric[i]) / denom);
  }
  return worst;
}

/// ||a - n||_2 / max(||a||_2, ||n||_2).
inline double vector_relative_error(std::span<const double> a, std::span<const double> n) {
  double diff = 0.0, na = 0.0, nn = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - n[i]) * (a[i] - n[i]);
    na += a[i] * a[i];
    nn += n[i] * n[i];
  }
  const double denom = std::max(std::sqrt(na), std::sqrt(nn));
  return denom == 0.0 ? 0.0 : std::sqrt(diff) / denom;
}

inline std::vector<double> ref_softmax(std::span<const double> z, double tau) {
  const double mx = *std::max_element(z.begin(), z.end());
  std::vector<double> p(z.size());
  double s = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    p[i] = std::exp((z[i] - mx) / tau);
    s += p[i];
  }
  for (double& x : p) x /= s;
  return p;
}

/// Brute force: try every candidate set size k, keep the smallest k whose
/// top-k mass (ties by id) reaches top_p.
inline std::vector<double> ref_nucleus(std::span<const double> p, double top_p) {
  const std::size_t n = p.size();
  std::vector<std::size_t> ids(n);
  std::iota(ids.begin(), ids.end(), std::size_t{0});
  std::sort(ids.begin(), ids.end(), [&](std::size_t a, std::size_t b) { return p[a] != p[b] ? p[a] > p[b] : a < b; });
  for (std::size_t k = 1; k <= n; ++k) {
    double mass = 0.0;
    for (std::size_t i = 0; i < k; ++i) mass += p[ids[i]];
    if (mass + 1e-12 >= top_p || k == n) {
      std::vector<double> out(n, 0.0);
      for (std::size_t i = 0; i < k; ++i) out[ids[i]] = p[ids[i]] / mass;
      return out;
    }
  }
  return {};
}

/// Geometric mean weights by direct per-token evaluation.
inline std::vector<double> ref_geometric(std::span<const double> pa, std::span<const double> pb, double a, double b) {
  std::vector<double> w(pa.size());
  double s = 0.0;
  for (std::size_t i = 0; i < pa.size(); ++i) {
    w[i] = std::pow(std::max(pa[i], 1e-12), a) * std::pow(std::max(pb[i], 1e-12), b);
    s += w[i];
  }
  for (double& x : w) x /= s;
  return w;
}

inline double total_variation(std::span<const double> p, std::span<const double> q) {
  double tv = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) tv += std::abs(p[i] - q[i]);
  return 0.5 * tv;
}

inline tinylm::Vocabulary letters(int n) {
  std::vector<std::string> s;
  for (int i = 0; i < n; ++i) s.push_back("t" + std::to_string(i));
  return tinylm::Vocabulary(s);
}

inline tinylm::PolicyModel random_model(std::uint64_t seed, int extra_tokens = 4, int d = 8, int f = 12,
                                        int context = 16) {
  tinylm::Architecture a;
  a.d_model = d;
  a.d_ff = f;
  a.context = context;
  return tinylm::PolicyModel::random_init(a, letters(extra_tokens), seed);
}

inline tinylm::Tokens random_tokens(Rng& rng, std::size_t len, int vocab) {
  tinylm::Tokens t(len);
  for (auto& x : t) x = static_cast<tinylm::TokenId>(rng.below(static_cast<std::uint64_t>(vocab)));
  return t;
}

/// Model whose logits equal `bias` at every position: everything but the
/// output bias is zero.
inline tinylm::PolicyModel constant_logit_model(const tinylm::Vocabulary& vocab, const std::vector<double>& bias,
                                                int d = 4, int f = 4, int context = 16) {
  tinylm::Architecture a;
  a.d_model = d;
  a.d_ff = f;
  a.context = context;
  auto m = tinylm::PolicyModel::zeros(a, vocab);
  const auto L = m.layout();
  auto p = m.mutable_params();
  for (std::size_t i = 0; i < bias.size(); ++i) p[L.bout + i] = bias[i];
  return m;
}

}  // namespace prefmix::testing
