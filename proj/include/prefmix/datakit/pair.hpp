#pragma once

#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "prefmix/core/error.hpp"
#include "prefmix/tinylm/vocabulary.hpp"

namespace prefmix::datakit {

using tinylm::TokenId;
using tinylm::Tokens;

enum class Source { on, off };

inline std::string to_string(Source s) { return s == Source::on ? "on" : "off"; }

inline Source parse_source(const std::string& s) {
  if (s == "on") return Source::on;
  if (s == "off") return Source::off;
  fail(Errc::invalid_argument, "source must be 'on' or 'off', got '" + s + "'");
}

/// (x, y_w, y_l) with provenance. `meta` carries free-form fields,
/// including any unknown fields found on ingestion.
struct PreferencePair {
  Tokens prompt;
  Tokens chosen;
  Tokens rejected;
  Source source = Source::off;
  std::optional<double> chosen_reward;
  std::optional<double> rejected_reward;
  std::optional<std::string> generator_id;
  std::string task_family;
  nlohmann::json meta = nlohmann::json::object();

  bool has_rewards() const { return chosen_reward.has_value() && rejected_reward.has_value(); }

  bool operator==(const PreferencePair&) const = default;
};

inline void validate(const PreferencePair& p) {
  require(p.chosen != p.rejected, Errc::invalid_argument, "chosen and rejected responses are identical");
  if (p.has_rewards())
    require(*p.chosen_reward >= *p.rejected_reward, Errc::invalid_argument, "chosen reward below rejected reward");
}

/// A list of pairs plus the manifest describing how they were produced.
struct PreferenceDataset {
  std::vector<PreferencePair> pairs;
  nlohmann::json manifest = nlohmann::json::object();

  std::size_t size() const { return pairs.size(); }
  bool empty() const { return pairs.empty(); }

  std::size_t count(Source s) const {
    std::size_t n = 0;
    for (const auto& p : pairs) n += p.source == s ? 1 : 0;
    return n;
  }

  bool operator==(const PreferenceDataset&) const = default;
};

}  // namespace prefmix::datakit
