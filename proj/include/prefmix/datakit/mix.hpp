#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

#include "prefmix/core/random.hpp"
#include "prefmix/datakit/pair.hpp"

namespace prefmix::datakit {

struct MixConfig {
  double on_ratio = 0.5;
  std::size_t total_pairs = 0;
  std::uint64_t seed = 0;
  // Per-pair Bernoulli source draws instead of the exact split.
  bool bernoulli = false;

  void validate() const {
    require(on_ratio >= 0.0 && on_ratio <= 1.0, Errc::invalid_argument, "on_ratio must lie in [0, 1]");
    require(total_pairs > 0, Errc::invalid_argument, "total_pairs must be positive");
  }
};

/// Number of on-policy pairs in an exact split.
inline std::size_t on_share(const MixConfig& cfg) {
  return static_cast<std::size_t>(std::llround(cfg.on_ratio * static_cast<double>(cfg.total_pairs)));
}

namespace detail {

inline std::vector<std::size_t> take_indices(std::size_t available, std::size_t need, std::uint64_t seed,
                                             const char* name) {
  require(need <= available, Errc::insufficient_source,
          std::string(name) + " source has " + std::to_string(available) + " pairs, " + std::to_string(need) +
              " required");
  auto perm = seeded_permutation(available, seed);
  perm.resize(need);
  return perm;
}

}  // namespace detail

/// Draws round(on_ratio * total) pairs from `on` and the rest from `off`,
/// each subset chosen by a seeded permutation, then shuffles them together.
inline PreferenceDataset simplemix(const PreferenceDataset& on, const PreferenceDataset& off, const MixConfig& cfg) {
  cfg.validate();
  std::size_t n_on = on_share(cfg);
  if (cfg.bernoulli) {
    Rng coin(derive_seed(cfg.seed, {3}));
    n_on = 0;
    for (std::size_t i = 0; i < cfg.total_pairs; ++i) n_on += coin.bernoulli(cfg.on_ratio) ? 1 : 0;
  }
  const std::size_t n_off = cfg.total_pairs - n_on;
  const auto on_idx = detail::take_indices(on.size(), n_on, derive_seed(cfg.seed, {1}), "on-policy");
  const auto off_idx = detail::take_indices(off.size(), n_off, derive_seed(cfg.seed, {2}), "off-policy");

  struct Pick {
    Source from;
    std::size_t index;
  };
  std::vector<Pick> picks;
  for (auto i : on_idx) picks.push_back({Source::on, i});
  for (auto i : off_idx) picks.push_back({Source::off, i});
  Rng rng(derive_seed(cfg.seed, {4}));
  rng.shuffle(picks);

  PreferenceDataset out;
  nlohmann::json order = nlohmann::json::array();
  for (const auto& p : picks) {
    out.pairs.push_back((p.from == Source::on ? on : off).pairs[p.index]);
    order.push_back({to_string(p.from), p.index});
  }
  out.manifest = {{"kind", "simplemix"},
                  {"on_ratio", cfg.on_ratio},
                  {"total_pairs", cfg.total_pairs},
                  {"seed", cfg.seed},
                  {"mode", cfg.bernoulli ? "bernoulli" : "exact"},
                  {"split", {{"on", n_on}, {"off", n_off}}},
                  {"order", std::move(order)},
                  {"on_source", on.manifest},
                  {"off_source", off.manifest}};
  return out;
}

}  // namespace prefmix::datakit
