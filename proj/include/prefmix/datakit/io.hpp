#pragma once

#include <filesystem>
#include <fstream>
#include <string>

#include "json.hpp"
#include "prefmix/datakit/pair.hpp"
#include "prefmix/tinylm/vocabulary.hpp"

namespace prefmix::datakit {

using tinylm::Vocabulary;

/// Manifest sidecar written next to a JSONL dataset.
inline std::filesystem::path manifest_path(const std::filesystem::path& jsonl) {
  return jsonl.string() + ".manifest.json";
}

namespace detail {

inline nlohmann::json optional_json(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(); }

inline const char* const pair_fields[] = {"prompt",         "chosen",          "rejected",     "source", "chosen_reward",
                                          "rejected_reward", "generator_id", "task_family", "meta"};

inline bool is_pair_field(const std::string& key) {
  for (const char* f : pair_fields)
    if (key == f) return true;
  return false;
}

}  // namespace detail

inline nlohmann::json pair_to_json(const PreferencePair& p, const Vocabulary& vocab) {
  return {{"prompt", vocab.decode(p.prompt)},
          {"chosen", vocab.decode(p.chosen)},
          {"rejected", vocab.decode(p.rejected)},
          {"source", to_string(p.source)},
          {"chosen_reward", detail::optional_json(p.chosen_reward)},
          {"rejected_reward", detail::optional_json(p.rejected_reward)},
          {"generator_id", p.generator_id ? nlohmann::json(*p.generator_id) : nlohmann::json()},
          {"task_family", p.task_family},
          {"meta", p.meta}};
}

/// Unknown top-level fields are moved into `meta` unless meta already has
/// that key.
inline PreferencePair pair_from_json(const nlohmann::json& j, const Vocabulary& vocab) {
  require(j.is_object(), Errc::malformed_line, "expected a JSON object");
  PreferencePair p;
  const auto text = [&](const char* key) -> std::string {
    require(j.contains(key) && j.at(key).is_string(), Errc::malformed_line, std::string("missing string field '") + key + "'");
    return j.at(key).get<std::string>();
  };
  const auto reward = [&](const char* key) -> std::optional<double> {
    if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
    require(j.at(key).is_number(), Errc::malformed_line, std::string("field '") + key + "' must be a number or null");
    return j.at(key).get<double>();
  };
  p.prompt = vocab.encode(text("prompt"));
  p.chosen = vocab.encode(text("chosen"));
  p.rejected = vocab.encode(text("rejected"));
  p.source = parse_source(text("source"));
  p.chosen_reward = reward("chosen_reward");
  p.rejected_reward = reward("rejected_reward");
  if (j.contains("generator_id") && !j.at("generator_id").is_null()) {
    require(j.at("generator_id").is_string(), Errc::malformed_line, "generator_id must be a string or null");
    p.generator_id = j.at("generator_id").get<std::string>();
  }
  p.task_family = j.contains("task_family") ? text("task_family") : std::string();
  if (j.contains("meta") && !j.at("meta").is_null()) {
    require(j.at("meta").is_object(), Errc::malformed_line, "meta must be an object");
    p.meta = j.at("meta");
  }
  for (const auto& [key, value] : j.items())
    if (!detail::is_pair_field(key) && !p.meta.contains(key)) p.meta[key] = value;
  return p;
}

inline void write_jsonl(const PreferenceDataset& ds, const Vocabulary& vocab, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(static_cast<bool>(out), Errc::io_error, "cannot write " + path.string());
  for (const auto& p : ds.pairs) out << pair_to_json(p, vocab).dump() << '\n';
  std::ofstream man(manifest_path(path), std::ios::binary | std::ios::trunc);
  require(static_cast<bool>(man), Errc::io_error, "cannot write " + manifest_path(path).string());
  man << ds.manifest.dump(2) << '\n';
  require(static_cast<bool>(out) && static_cast<bool>(man), Errc::io_error, "write failed for " + path.string());
}

/// Reads a JSONL dataset and, when present, its manifest sidecar. Errors
/// carry the 1-based line number.
inline PreferenceDataset read_jsonl(const std::filesystem::path& path, const Vocabulary& vocab) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), Errc::io_error, "cannot read " + path.string());
  PreferenceDataset ds;
  std::string line;
  for (std::size_t lineno = 1; std::getline(in, line); ++lineno) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = path.string() + ":" + std::to_string(lineno) + ": ";
    try {
      ds.pairs.push_back(pair_from_json(nlohmann::json::parse(line), vocab));
    } catch (const nlohmann::json::exception& e) {
      fail(Errc::malformed_line, where + e.what());
    } catch (const Error& e) {
      fail(e.code(), where + e.what());
    }
  }
  const auto mp = manifest_path(path);
  if (std::filesystem::exists(mp)) {
    std::ifstream man(mp, std::ios::binary);
    try {
      ds.manifest = nlohmann::json::parse(man);
    } catch (const nlohmann::json::exception& e) {
      fail(Errc::malformed_line, mp.string() + ": " + e.what());
    }
  }
  return ds;
}

}  // namespace prefmix::datakit
