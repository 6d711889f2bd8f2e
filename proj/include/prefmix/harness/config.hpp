#pragma once

#include <cstdlib>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "prefmix/harness/experiment.hpp"

extern char** environ;

namespace prefmix::harness {

using nlohmann::json;

inline const std::vector<double> default_filter_grid{0.1, 0.2, 0.3, 0.4, 0.5};
inline const std::vector<double> default_temperature_grid{0.7, 1.0, 2.0, 3.0};
inline constexpr int default_seed_count = 10;

enum class GenerateMode { onpolicy, offpolicy, diverse, mixp };

inline std::string to_string(GenerateMode m) {
  switch (m) {
    case GenerateMode::onpolicy: return "onpolicy";
    case GenerateMode::offpolicy: return "offpolicy";
    case GenerateMode::diverse: return "diverse";
    case GenerateMode::mixp: return "mixp";
  }
  return "?";
}

struct GenerateConfig {
  GenerateMode mode = GenerateMode::onpolicy;
  int n_samples = 4;
  std::size_t prompts = 0;  // first n of each family; 0 = all
  std::string checkpoint;   // empty: build the SFT model from the world
  std::string reference;    // mixp only; empty: same as checkpoint
};

struct EvalConfig {
  std::size_t arith_prompts = 0;  // 0 = all
  std::size_t style_prompts = 0;
  evalkit::ReportConfig report;
};

struct RunConfig {
  std::string name = "run";
  Method method = Method::simplemix;
  std::string comparison_group;
  WorldConfig world;
  datakit::MixConfig mix{0.5, 200, 0, false};
  std::optional<datakit::FilterConfig> filter;
  double corruption = 0.0;
  optim::DpoConfig dpo{0.1};
  std::optional<optim::HypoConfig> hypo;
  optim::TrainConfig train{1e-3, 0.03, 1, 8, {}, 0, 1};
  EvalConfig eval;
  GenerateConfig generate;
  std::vector<std::uint64_t> seeds;
  std::string out = "runs";
  std::string sft_checkpoint;  // "{seed}" is replaced per seed
  // Sweep axes; each combination becomes one run point sharing the worlds.
  std::vector<double> sweep_on_ratio;
  std::vector<Method> sweep_method;
};

class ConfigError : public Error {
 public:
  explicit ConfigError(std::vector<std::string> problems)
      : Error(Errc::config_error, join(problems)), problems_(std::move(problems)) {}
  const std::vector<std::string>& problems() const { return problems_; }

 private:
  static std::string join(const std::vector<std::string>& ps) {
    std::string s;
    for (const auto& p : ps) s += (s.empty() ? "" : "; ") + p;
    return s;
  }
  std::vector<std::string> problems_;
};

namespace detail {

inline std::string join_path(const std::string& base, const std::string& key) { return base.empty() ? key : base + "." + key; }

inline const char* type_name(const json& j) { return j.type_name(); }

/// Reads one object, recording type errors and unknown keys by field path.
class Fields {
 public:
  Fields(const json& j, std::string path, std::vector<std::string>& errors)
      : j_(j), path_(std::move(path)), errors_(errors) {
    if (!j_.is_object()) error("", std::string("expected an object, got ") + type_name(j_));
  }

  ~Fields() {
    if (!j_.is_object()) return;
    for (const auto& [k, v] : j_.items())
      if (!known_.count(k)) errors_.push_back(join_path(path_, k) + ": unknown field");
  }

  Fields(const Fields&) = delete;
  Fields& operator=(const Fields&) = delete;

  const std::string& path() const { return path_; }
  std::vector<std::string>& errors() { return errors_; }
  std::string at(const std::string& key) const { return join_path(path_, key); }

  bool has(const std::string& key) {
    known_.insert(key);
    return j_.is_object() && j_.contains(key) && !j_.at(key).is_null();
  }

  const json& sub(const std::string& key) { return has(key) ? j_.at(key) : empty_; }

  void error(const std::string& key, const std::string& msg) {
    errors_.push_back((key.empty() ? (path_.empty() ? std::string("<root>") : path_) : at(key)) + ": " + msg);
  }

  void check(bool ok, const std::string& key, const std::string& msg) {
    if (!ok) error(key, msg);
  }

  template <typename T>
  void get(const std::string& key, T& out) {
    if (!has(key)) return;
    const json& v = j_.at(key);
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) return error(key, std::string("expected a boolean, got ") + type_name(v));
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer()) return error(key, std::string("expected an integer, got ") + type_name(v));
      if (std::is_unsigned_v<T> && v.get<long long>() < 0 && !v.is_number_unsigned())
        return error(key, "must be >= 0");
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) return error(key, std::string("expected a number, got ") + type_name(v));
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) return error(key, std::string("expected a string, got ") + type_name(v));
    }
    out = v.get<T>();
  }

  template <typename T>
  void get_list(const std::string& key, std::vector<T>& out) {
    if (!has(key)) return;
    const json& v = j_.at(key);
    if (!v.is_array()) return error(key, std::string("expected an array, got ") + type_name(v));
    out.clear();
    for (std::size_t i = 0; i < v.size(); ++i) {
      const bool ok = std::is_floating_point_v<T> ? v[i].is_number() : v[i].is_number_integer() && !(v[i].get<long long>() < 0 && !v[i].is_number_unsigned());
      if (!ok) {
        error(key + "[" + std::to_string(i) + "]", "bad element");
        continue;
      }
      out.push_back(v[i].get<T>());
    }
  }

 private:
  const json& j_;
  std::string path_;
  std::vector<std::string>& errors_;
  std::set<std::string> known_;
  inline static const json empty_ = json::object();
};

inline void read_train(Fields& f, optim::TrainConfig& t) {
  f.get("max_lr", t.max_lr);
  f.get("warmup_fraction", t.warmup_fraction);
  f.get("epochs", t.epochs);
  f.get("batch_size", t.batch_size);
  if (f.has("adam")) {
    Fields a(f.sub("adam"), f.at("adam"), f.errors());
    a.get("beta1", t.adam.beta1);
    a.get("beta2", t.adam.beta2);
    a.get("eps", t.adam.eps);
    a.check(t.adam.beta1 >= 0.0 && t.adam.beta1 < 1.0, "beta1", "must lie in [0, 1)");
    a.check(t.adam.beta2 >= 0.0 && t.adam.beta2 < 1.0, "beta2", "must lie in [0, 1)");
    a.check(t.adam.eps > 0.0, "eps", "must be > 0");
  }
  f.check(t.max_lr >= 0.0, "max_lr", "must be >= 0");
  f.check(t.warmup_fraction >= 0.0 && t.warmup_fraction < 1.0, "warmup_fraction", "must lie in [0, 1)");
  f.check(t.epochs >= 1, "epochs", "must be >= 1");
  f.check(t.batch_size >= 1, "batch_size", "must be >= 1");
}

}  // namespace detail

/// Applies PREFMIX_<A>__<B>=value overrides to config path a.b. Values are
/// parsed as JSON when possible and taken as strings otherwise.
inline void apply_env_overrides(json& j, char** env = environ) {
  static constexpr std::string_view prefix = "PREFMIX_";
  for (char** e = env; e && *e; ++e) {
    std::string_view kv(*e);
    if (kv.substr(0, prefix.size()) != prefix) continue;
    const auto eq = kv.find('=');
    if (eq == std::string_view::npos) continue;
    std::string key(kv.substr(prefix.size(), eq - prefix.size()));
    const std::string raw(kv.substr(eq + 1));
    for (auto& c : key) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    json* node = &j;
    std::size_t start = 0;
    while (true) {
      const auto sep = key.find("__", start);
      const std::string part = key.substr(start, sep == std::string::npos ? std::string::npos : sep - start);
      if (sep == std::string::npos) {
        json v = json::parse(raw, nullptr, false);
        (*node)[part] = v.is_discarded() ? json(raw) : v;
        break;
      }
      if (!node->contains(part) || !(*node)[part].is_object()) (*node)[part] = json::object();
      node = &(*node)[part];
      start = sep + 2;
    }
  }
}

/// Parses and validates a config document. Every problem is reported with
/// its field path in a single ConfigError.
inline RunConfig parse_run_config(const json& j) {
  RunConfig c;
  std::vector<std::string> errors;
  {
    detail::Fields f(j, "", errors);
    f.get("name", c.name);
    f.check(!c.name.empty(), "name", "must be nonempty");
    if (f.has("method")) {
      std::string m;
      f.get("method", m);
      try {
        c.method = optim::parse_method(m);
      } catch (const Error&) {
        f.error("method", "unknown method '" + m + "'");
      }
    }
    f.get("comparison_group", c.comparison_group);
    f.get("out", c.out);
    f.get("sft_checkpoint", c.sft_checkpoint);
    f.get("corruption", c.corruption);
    f.check(c.corruption >= 0.0 && c.corruption <= 1.0, "corruption", "must lie in [0, 1]");
    f.get("threads", c.world.threads);
    f.check(c.world.threads >= 1, "threads", "must be >= 1");

    f.get_list("seeds", c.seeds);
    if (!f.has("seeds"))
      for (int s = 0; s < default_seed_count; ++s) c.seeds.push_back(static_cast<std::uint64_t>(s));
    f.check(!c.seeds.empty(), "seeds", "must be nonempty");

    {
      detail::Fields s(f.sub("suite"), f.at("suite"), errors);
      s.get("words", c.world.words);
      s.get("topics", c.world.style.topics);
      s.get("variants", c.world.style.variants);
      s.get("styles", c.world.style.styles);
      s.get("prototype_length", c.world.style.prototype_length);
      s.get("seed", c.world.style.seed);
      s.check(c.world.words >= 1, "words", "must be >= 1");
      s.check(c.world.style.topics >= 1, "topics", "must be >= 1");
      s.check(c.world.style.variants >= 1, "variants", "must be >= 1");
      s.check(c.world.style.styles >= 3, "styles", "must be >= 3");
      s.check(c.world.style.prototype_length >= 3, "prototype_length", "must be >= 3");
    }
    {
      detail::Fields w(f.sub("world"), f.at("world"), errors);
      auto& wc = c.world;
      w.get("d_model", wc.arch.d_model);
      w.get("d_ff", wc.arch.d_ff);
      w.get("context", wc.arch.context);
      w.get("arith_examples", wc.arith_examples);
      w.get("hard_fraction", wc.hard_fraction);
      w.get("hard_correct", wc.hard_correct);
      w.get("easy_correct", wc.easy_correct);
      w.get("style_examples", wc.style_examples);
      w.get("style_alternatives", wc.style_alternatives);
      w.get("style_junk", wc.style_junk);
      w.get("generator_examples", wc.generator_examples);
      w.get("onpolicy_samples", wc.onpolicy_samples);
      w.get("onpolicy_rounds", wc.onpolicy_rounds);
      w.get("offpolicy_rounds", wc.offpolicy_rounds);
      if (w.has("sft")) {
        detail::Fields t(w.sub("sft"), w.at("sft"), errors);
        detail::read_train(t, wc.sft);
      }
      if (w.has("generator_train")) {
        detail::Fields t(w.sub("generator_train"), w.at("generator_train"), errors);
        detail::read_train(t, wc.generator_train);
      }
      w.check(wc.arch.d_model >= 1, "d_model", "must be >= 1");
      w.check(wc.arch.d_ff >= 1, "d_ff", "must be >= 1");
      w.check(wc.arch.context >= 8, "context", "must be >= 8");
      for (const char* k : {"hard_fraction", "hard_correct", "easy_correct"}) {
        const double v = std::string(k) == "hard_fraction" ? wc.hard_fraction
                         : std::string(k) == "hard_correct" ? wc.hard_correct
                                                            : wc.easy_correct;
        w.check(v >= 0.0 && v <= 1.0, k, "must lie in [0, 1]");
      }
      w.check(wc.arith_examples >= 1, "arith_examples", "must be >= 1");
      w.check(wc.style_examples >= 1, "style_examples", "must be >= 1");
      w.check(wc.style_alternatives >= 0, "style_alternatives", "must be >= 0");
      w.check(wc.style_junk >= 0, "style_junk", "must be >= 0");
      w.check(wc.generator_examples >= 1, "generator_examples", "must be >= 1");
      w.check(wc.onpolicy_samples >= 2, "onpolicy_samples", "must be >= 2");
      w.check(wc.onpolicy_rounds >= 1, "onpolicy_rounds", "must be >= 1");
      w.check(wc.offpolicy_rounds >= 1, "offpolicy_rounds", "must be >= 1");
    }
    {
      detail::Fields s(f.sub("sampling"), f.at("sampling"), errors);
      auto& sc = c.world.sampling;
      s.get("temperature", sc.temperature);
      s.get("top_p", sc.top_p);
      s.get("max_len", sc.max_len);
      s.check(sc.temperature > 0.0, "temperature", "must be > 0");
      s.check(sc.top_p > 0.0 && sc.top_p <= 1.0, "top_p", "must lie in (0, 1]");
      s.check(sc.max_len >= 1, "max_len", "must be >= 1");
    }

    const bool has_mix = f.has("mix");
    if (has_mix) {
      detail::Fields m(f.sub("mix"), f.at("mix"), errors);
      m.get("on_ratio", c.mix.on_ratio);
      m.get("total_pairs", c.mix.total_pairs);
      m.get("bernoulli", c.mix.bernoulli);
      m.check(c.mix.on_ratio >= 0.0 && c.mix.on_ratio <= 1.0, "on_ratio", "must lie in [0, 1]");
    }
    if (f.has("filter")) {
      detail::Fields m(f.sub("filter"), f.at("filter"), errors);
      datakit::FilterConfig fc;
      std::string crit = "quality";
      m.get("criterion", crit);
      try {
        fc.criterion = datakit::parse_filter_criterion(crit);
      } catch (const Error&) {
        m.error("criterion", "unknown criterion '" + crit + "'");
      }
      m.get("fraction", fc.fraction);
      m.get("chosen_only", fc.chosen_only);
      m.check(fc.fraction > 0.0 && fc.fraction <= 1.0, "fraction", "must lie in (0, 1]");
      c.filter = fc;
    }
    {
      detail::Fields d(f.sub("dpo"), f.at("dpo"), errors);
      d.get("beta", c.dpo.beta);
      d.check(c.dpo.beta > 0.0, "beta", "must be > 0");
    }
    if (f.has("hypo")) {
      detail::Fields h(f.sub("hypo"), f.at("hypo"), errors);
      optim::HypoConfig hc;
      hc.dpo = c.dpo;
      h.get("lambda", hc.lambda);
      h.get("onpolicy_samples_per_step", hc.onpolicy_samples_per_step);
      h.check(hc.lambda >= 0.0, "lambda", "must be >= 0");
      h.check(hc.onpolicy_samples_per_step >= 1, "onpolicy_samples_per_step", "must be >= 1");
      c.hypo = hc;
    }
    {
      detail::Fields t(f.sub("train"), f.at("train"), errors);
      detail::read_train(t, c.train);
    }
    {
      detail::Fields e(f.sub("eval"), f.at("eval"), errors);
      e.get("arith_prompts", c.eval.arith_prompts);
      e.get("style_prompts", c.eval.style_prompts);
      e.get("bootstrap_resamples", c.eval.report.bootstrap_resamples);
      e.get("level", c.eval.report.level);
      e.get("tie_credit", c.eval.report.tie_credit);
      e.check(c.eval.report.bootstrap_resamples >= 1, "bootstrap_resamples", "must be >= 1");
      e.check(c.eval.report.level > 0.0 && c.eval.report.level < 1.0, "level", "must lie in (0, 1)");
      e.check(c.eval.report.tie_credit >= 0.0 && c.eval.report.tie_credit <= 1.0, "tie_credit", "must lie in [0, 1]");
    }
    {
      detail::Fields g(f.sub("generate"), f.at("generate"), errors);
      if (g.has("mode")) {
        std::string m;
        g.get("mode", m);
        bool found = false;
        for (auto mode : {GenerateMode::onpolicy, GenerateMode::offpolicy, GenerateMode::diverse, GenerateMode::mixp})
          if (to_string(mode) == m) {
            c.generate.mode = mode;
            found = true;
          }
        if (!found) g.error("mode", "unknown mode '" + m + "'");
      }
      g.get("n_samples", c.generate.n_samples);
      g.get("prompts", c.generate.prompts);
      g.get("checkpoint", c.generate.checkpoint);
      g.get("reference", c.generate.reference);
      g.check(c.generate.n_samples >= 1, "n_samples", "must be >= 1");
    }
    {
      detail::Fields s(f.sub("sweep"), f.at("sweep"), errors);
      s.get_list("on_ratio", c.sweep_on_ratio);
      for (double r : c.sweep_on_ratio) s.check(r >= 0.0 && r <= 1.0, "on_ratio", "entries must lie in [0, 1]");
      if (s.has("method")) {
        const json& ms = s.sub("method");
        if (!ms.is_array()) {
          s.error("method", "expected an array");
        } else {
          for (std::size_t i = 0; i < ms.size(); ++i) {
            try {
              c.sweep_method.push_back(optim::parse_method(ms[i].get<std::string>()));
            } catch (const std::exception&) {
              s.error("method[" + std::to_string(i) + "]", "unknown method");
            }
          }
        }
      }
    }

    auto methods = c.sweep_method;
    if (methods.empty()) methods.push_back(c.method);
    bool mix_reported = false, hypo_reported = false;
    for (auto m : methods) {
      if (m == Method::hypo && !c.hypo && !hypo_reported) {
        f.error("hypo", "required for method hypo");
        hypo_reported = true;
      }
      if (m != Method::dpo_mix_p && !has_mix && !mix_reported) {
        f.error("mix", "required for method " + optim::to_string(m));
        mix_reported = true;
      }
    }
    if (c.hypo) c.hypo->dpo = c.dpo;
  }
  if (!errors.empty()) throw ConfigError(std::move(errors));
  return c;
}

inline json read_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError({path + ": cannot read config file"});
  json j = json::parse(in, nullptr, false, true);
  if (j.is_discarded()) throw ConfigError({path + ": not valid JSON"});
  return j;
}

inline RunConfig load_run_config(const std::string& path, char** env = environ) {
  json j = read_config_file(path);
  apply_env_overrides(j, env);
  return parse_run_config(j);
}

inline json to_json(const optim::TrainConfig& t) {
  return {{"max_lr", t.max_lr},
          {"warmup_fraction", t.warmup_fraction},
          {"epochs", t.epochs},
          {"batch_size", t.batch_size},
          {"adam", {{"beta1", t.adam.beta1}, {"beta2", t.adam.beta2}, {"eps", t.adam.eps}}}};
}

/// Fully resolved config; parsing it back yields the same RunConfig.
inline json to_json(const RunConfig& c) {
  const auto& w = c.world;
  json j = {
      {"name", c.name},
      {"method", optim::to_string(c.method)},
      {"comparison_group", c.comparison_group},
      {"out", c.out},
      {"sft_checkpoint", c.sft_checkpoint},
      {"corruption", c.corruption},
      {"threads", w.threads},
      {"seeds", c.seeds},
      {"suite",
       {{"words", w.words},
        {"topics", w.style.topics},
        {"variants", w.style.variants},
        {"styles", w.style.styles},
        {"prototype_length", w.style.prototype_length},
        {"seed", w.style.seed}}},
      {"world",
       {{"d_model", w.arch.d_model},
        {"d_ff", w.arch.d_ff},
        {"context", w.arch.context},
        {"arith_examples", w.arith_examples},
        {"hard_fraction", w.hard_fraction},
        {"hard_correct", w.hard_correct},
        {"easy_correct", w.easy_correct},
        {"style_examples", w.style_examples},
        {"style_alternatives", w.style_alternatives},
        {"style_junk", w.style_junk},
        {"generator_examples", w.generator_examples},
        {"onpolicy_samples", w.onpolicy_samples},
        {"onpolicy_rounds", w.onpolicy_rounds},
        {"offpolicy_rounds", w.offpolicy_rounds},
        {"sft", to_json(w.sft)},
        {"generator_train", to_json(w.generator_train)}}},
      {"sampling", {{"temperature", w.sampling.temperature}, {"top_p", w.sampling.top_p}, {"max_len", w.sampling.max_len}}},
      {"mix", {{"on_ratio", c.mix.on_ratio}, {"total_pairs", c.mix.total_pairs}, {"bernoulli", c.mix.bernoulli}}},
      {"dpo", {{"beta", c.dpo.beta}}},
      {"train", to_json(c.train)},
      {"eval",
       {{"arith_prompts", c.eval.arith_prompts},
        {"style_prompts", c.eval.style_prompts},
        {"bootstrap_resamples", c.eval.report.bootstrap_resamples},
        {"level", c.eval.report.level},
        {"tie_credit", c.eval.report.tie_credit}}},
      {"generate",
       {{"mode", to_string(c.generate.mode)},
        {"n_samples", c.generate.n_samples},
        {"prompts", c.generate.prompts},
        {"checkpoint", c.generate.checkpoint},
        {"reference", c.generate.reference}}},
  };
  if (c.filter)
    j["filter"] = {{"criterion", datakit::to_string(c.filter->criterion)},
                   {"fraction", c.filter->fraction},
                   {"chosen_only", c.filter->chosen_only}};
  if (c.hypo) j["hypo"] = {{"lambda", c.hypo->lambda}, {"onpolicy_samples_per_step", c.hypo->onpolicy_samples_per_step}};
  json sweep = json::object();
  if (!c.sweep_on_ratio.empty()) sweep["on_ratio"] = c.sweep_on_ratio;
  if (!c.sweep_method.empty()) {
    sweep["method"] = json::array();
    for (auto m : c.sweep_method) sweep["method"].push_back(optim::to_string(m));
  }
  if (!sweep.empty()) j["sweep"] = sweep;
  return j;
}

}  // namespace prefmix::harness
