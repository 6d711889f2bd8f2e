#pragma once

#include <fstream>
#include <string>

#include "json.hpp"
#include "prefmix/tinylm/model.hpp"

namespace prefmix::tinylm {

inline constexpr int checkpoint_version = 1;

inline nlohmann::json to_json(const PolicyModel& m) {
  const auto& a = m.arch();
  nlohmann::json j;
  j["format"] = "prefmix-checkpoint";
  j["version"] = checkpoint_version;
  j["architecture"] = {{"vocab_size", a.vocab_size}, {"d_model", a.d_model}, {"d_ff", a.d_ff}, {"context", a.context}};
  j["vocabulary"] = {
      {"profile", m.vocab().profile() == Vocabulary::Profile::bytes ? "bytes" : "symbols"},
      {"symbols", m.vocab().profile() == Vocabulary::Profile::bytes ? nlohmann::json::array()
                                                                     : nlohmann::json(m.vocab().symbols())}};
  j["frozen"] = m.frozen();
  j["params"] = std::vector<double>(m.params().begin(), m.params().end());
  return j;
}

inline PolicyModel model_from_json(const nlohmann::json& j) {
  try {
    require(j.at("format") == "prefmix-checkpoint", Errc::io_error, "not a prefmix checkpoint");
    require(j.at("version").get<int>() == checkpoint_version, Errc::io_error, "unsupported checkpoint version");
    const auto& ja = j.at("architecture");
    Architecture a;
    a.vocab_size = ja.at("vocab_size").get<int>();
    a.d_model = ja.at("d_model").get<int>();
    a.d_ff = ja.at("d_ff").get<int>();
    a.context = ja.at("context").get<int>();
    const auto& jv = j.at("vocabulary");
    const auto profile = jv.at("profile") == "bytes" ? Vocabulary::Profile::bytes : Vocabulary::Profile::symbols;
    Vocabulary vocab = Vocabulary::from_symbols(jv.at("symbols").get<std::vector<std::string>>(), profile);
    return PolicyModel(a, std::move(vocab), j.at("params").get<std::vector<double>>(), j.at("frozen").get<bool>());
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::io_error, std::string("malformed checkpoint: ") + e.what());
  }
}

inline void save_checkpoint(const PolicyModel& m, const std::string& path) {
  std::ofstream out(path);
  require(static_cast<bool>(out), Errc::io_error, "cannot write " + path);
  out << to_json(m).dump() << '\n';
}

inline PolicyModel load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), Errc::io_error, "cannot read " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::io_error, path + ": " + e.what());
  }
  return model_from_json(j);
}

}  // namespace prefmix::tinylm
