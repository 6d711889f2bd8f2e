#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "json.hpp"
#include "prefmix/core/error.hpp"

namespace prefmix {

/// Equal-width histogram. `edges` has bins + 1 entries; the last bin is
/// closed on the right so the maximum lands inside.
struct Histogram {
  std::vector<double> edges;
  std::vector<std::size_t> counts;

  std::size_t total() const {
    std::size_t n = 0;
    for (auto c : counts) n += c;
    return n;
  }

  double bin_width() const { return edges.size() > 1 ? edges[1] - edges[0] : 0.0; }

  double midpoint_mean() const {
    double s = 0.0;
    for (std::size_t i = 0; i < counts.size(); ++i) s += static_cast<double>(counts[i]) * 0.5 * (edges[i] + edges[i + 1]);
    return total() == 0 ? 0.0 : s / static_cast<double>(total());
  }

  bool operator==(const Histogram&) const = default;
};

inline Histogram make_histogram(std::span<const double> values, std::size_t bins, double lo, double hi) {
  require(bins >= 1, Errc::invalid_argument, "histogram needs at least one bin");
  if (!(hi > lo)) hi = lo + 1.0;
  Histogram h;
  h.edges.resize(bins + 1);
  for (std::size_t i = 0; i <= bins; ++i) h.edges[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(bins);
  h.counts.assign(bins, 0);
  for (double v : values) {
    auto b = static_cast<std::ptrdiff_t>(std::floor((v - lo) / (hi - lo) * static_cast<double>(bins)));
    b = std::clamp<std::ptrdiff_t>(b, 0, static_cast<std::ptrdiff_t>(bins) - 1);
    ++h.counts[static_cast<std::size_t>(b)];
  }
  return h;
}

/// Range taken from the data.
inline Histogram make_histogram(std::span<const double> values, std::size_t bins) {
  if (values.empty()) return make_histogram(values, bins, 0.0, 1.0);
  const auto [mn, mx] = std::minmax_element(values.begin(), values.end());
  return make_histogram(values, bins, *mn, *mx);
}

inline nlohmann::json to_json(const Histogram& h) { return {{"edges", h.edges}, {"counts", h.counts}}; }

inline Histogram histogram_from_json(const nlohmann::json& j) {
  Histogram h;
  h.edges = j.at("edges").get<std::vector<double>>();
  h.counts = j.at("counts").get<std::vector<std::size_t>>();
  return h;
}

inline double mean(std::span<const double> v) {
  if (v.empty()) return 0.0;
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

}  // namespace prefmix
