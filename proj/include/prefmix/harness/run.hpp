#pragma once

#include <openssl/evp.h>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <ostream>
#include <sstream>

#include "prefmix/datakit/io.hpp"
#include "prefmix/harness/config.hpp"
#include "prefmix/tinylm/checkpoint.hpp"

namespace prefmix::harness {

namespace fs = std::filesystem;

/// SHA-1 over "blob <size>\0" + content, as git hashes file contents.
inline std::string git_blob_hash(std::string_view content) {
  std::string header = "blob " + std::to_string(content.size());
  header.push_back('\0');
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  require(ctx != nullptr, Errc::io_error, "cannot allocate digest context");
  const bool ok = EVP_DigestInit_ex(ctx, EVP_sha1(), nullptr) == 1 &&
                  EVP_DigestUpdate(ctx, header.data(), header.size()) == 1 &&
                  EVP_DigestUpdate(ctx, content.data(), content.size()) == 1 && EVP_DigestFinal_ex(ctx, md, &len) == 1;
  EVP_MD_CTX_free(ctx);
  require(ok, Errc::io_error, "SHA-1 digest failed");
  std::ostringstream os;
  for (unsigned int i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
  return os.str();
}

inline std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  require(static_cast<bool>(in), Errc::io_error, "cannot read " + p.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

inline void write_file(const fs::path& p, const std::string& content) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  require(static_cast<bool>(out), Errc::io_error, "cannot write " + p.string());
  out << content;
  require(static_cast<bool>(out), Errc::io_error, "write failed for " + p.string());
}

inline std::string seed_dir_name(std::uint64_t seed) { return "seed-" + std::to_string(seed); }

inline std::string ratio_label(double r) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "r%.2f", r);
  return buf;
}

/// One combination of the sweep axes. `label` is empty for unswept runs.
struct RunPoint {
  std::string label;
  RunConfig config;
};

inline std::vector<RunPoint> expand_points(const RunConfig& c) {
  if (c.sweep_method.empty() && c.sweep_on_ratio.empty()) return {{"", c}};
  auto methods = c.sweep_method;
  if (methods.empty()) methods.push_back(c.method);
  std::vector<RunPoint> out;
  for (auto m : methods) {
    const bool ratios = m == Method::simplemix && !c.sweep_on_ratio.empty();
    for (double r : ratios ? c.sweep_on_ratio : std::vector<double>{c.mix.on_ratio}) {
      RunPoint p{optim::to_string(m), c};
      if (ratios) p.label += "-" + ratio_label(r);
      p.config.method = m;
      p.config.mix.on_ratio = r;
      p.config.sweep_method.clear();
      p.config.sweep_on_ratio.clear();
      if (p.config.comparison_group.empty()) p.config.comparison_group = c.name;
      out.push_back(std::move(p));
    }
  }
  return out;
}

inline fs::path experiment_dir(const RunConfig& c) { return fs::path(c.out) / c.name; }

inline fs::path point_dir(const RunConfig& c, const std::string& label) {
  return label.empty() ? experiment_dir(c) : experiment_dir(c) / label;
}

inline fs::path sft_checkpoint_path(const RunConfig& c, std::uint64_t seed) {
  if (!c.sft_checkpoint.empty()) {
    std::string p = c.sft_checkpoint;
    const auto at = p.find("{seed}");
    if (at != std::string::npos) p.replace(at, 6, std::to_string(seed));
    return p;
  }
  return experiment_dir(c) / "sft" / (seed_dir_name(seed) + ".ckpt");
}

inline Condition condition_for(const RunConfig& c, std::uint64_t seed) {
  Condition k;
  k.method = c.method;
  k.on_ratio = c.mix.on_ratio;
  k.budget = c.mix.total_pairs;
  k.bernoulli = c.mix.bernoulli;
  k.filter = c.filter;
  k.corruption = c.corruption;
  k.train = c.train;
  k.train.seed = derive_seed(seed, {80});
  k.dpo = c.dpo;
  k.hypo = c.hypo.value_or(optim::HypoConfig{c.dpo});
  k.report = c.eval.report;
  k.eval_arith = c.eval.arith_prompts;
  k.eval_style = c.eval.style_prompts;
  return k;
}

/// Suite identity: runs are comparable only when this matches.
inline std::string suite_hash(const RunConfig& c) {
  const json j = to_json(c);
  const json id = {{"suite", j.at("suite")},
                   {"eval_prompts", {{"arith", c.eval.arith_prompts}, {"style", c.eval.style_prompts}}}};
  return git_blob_hash(id.dump());
}

struct RunRecord {
  json config;
  std::string input_hash;
  std::string suite_hash;
  std::string point;
  std::uint64_t seed = 0;
  std::string status = "running";  // completed | failed
  std::string failed_step;
  std::string error;
  double wall_clock_seconds = 0.0;
  std::size_t pairs = 0;  // preference pairs in the training budget
  json artifacts = json::object();  // paths relative to the record's directory
};

inline json to_json(const RunRecord& r) {
  return {{"format", "prefmix-run-record"},
          {"config", r.config},
          {"input_hash", r.input_hash},
          {"suite_hash", r.suite_hash},
          {"point", r.point},
          {"seed", r.seed},
          {"status", r.status},
          {"failed_step", r.failed_step},
          {"error", r.error},
          {"wall_clock_seconds", r.wall_clock_seconds},
          {"pairs", r.pairs},
          {"artifacts", r.artifacts}};
}

inline RunRecord record_from_json(const json& j) {
  RunRecord r;
  require(j.value("format", "") == "prefmix-run-record", Errc::io_error, "not a run record");
  r.config = j.at("config");
  r.input_hash = j.at("input_hash").get<std::string>();
  r.suite_hash = j.at("suite_hash").get<std::string>();
  r.point = j.at("point").get<std::string>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.status = j.at("status").get<std::string>();
  r.failed_step = j.at("failed_step").get<std::string>();
  r.error = j.at("error").get<std::string>();
  r.wall_clock_seconds = j.at("wall_clock_seconds").get<double>();
  r.pairs = j.at("pairs").get<std::size_t>();
  r.artifacts = j.at("artifacts");
  return r;
}

/// Content hash of everything that determines a run's outputs.
inline std::string input_hash(const RunConfig& point, std::uint64_t seed, const std::string& sft_hash) {
  json cfg = to_json(point);
  cfg.erase("out");
  cfg.erase("sft_checkpoint");
  cfg["seeds"] = json::array({seed});
  return git_blob_hash(json{{"config", cfg}, {"seed", seed}, {"sft", sft_hash}}.dump());
}

/// Pair count consumed per epoch, read back from a data manifest.
inline std::size_t manifest_pairs(const json& manifest) { return manifest.value("total_pairs", std::size_t{0}); }

/// Thrown after a failed RunRecord has been written.
class RunFailed : public Error {
 public:
  RunFailed(Errc code, const std::string& what, std::string step) : Error(code, what), step_(std::move(step)) {}
  const std::string& step() const { return step_; }

 private:
  std::string step_;
};

namespace detail {

inline std::string metrics_jsonl(const optim::TrainLog& log) {
  std::string out;
  for (const auto& m : log.steps) out += optim::to_json(m).dump() + "\n";
  return out;
}

inline void write_report_files(const evalkit::EvalReport& report, const fs::path& dir, json& artifacts) {
  write_file(dir / "report.json", to_json(report).dump(2) + "\n");
  write_file(dir / "report.csv", evalkit::to_csv(report));
  write_file(dir / "rewards_a.csv", evalkit::histogram_csv(report.rewards_a));
  write_file(dir / "rewards_b.csv", evalkit::histogram_csv(report.rewards_b));
  write_file(dir / "lengths_a.csv", evalkit::histogram_csv(report.lengths_a));
  write_file(dir / "lengths_b.csv", evalkit::histogram_csv(report.lengths_b));
  artifacts["report"] = "report.json";
  artifacts["report_csv"] = "report.csv";
  artifacts["histograms"] = {"rewards_a.csv", "rewards_b.csv", "lengths_a.csv", "lengths_b.csv"};
}

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace detail

/// Builds (or loads) the SFT model for `seed` and the pools on top of it.
/// Returns the SFT content hash alongside the world.
inline std::pair<World, std::string> prepare_world(const RunConfig& c, std::uint64_t seed, bool full, std::ostream* log) {
  const fs::path ckpt = sft_checkpoint_path(c, seed);
  std::optional<PolicyModel> loaded;
  if (!c.sft_checkpoint.empty()) {
    require(fs::exists(ckpt), Errc::io_error, "SFT checkpoint " + ckpt.string() + " does not exist");
    loaded = tinylm::load_checkpoint(ckpt.string());
  }
  if (log) *log << "[" << c.name << " seed " << seed << "] " << (loaded ? "loading SFT" : "training SFT") << "\n";
  World w = full ? build_world(c.world, seed, loaded ? &*loaded : nullptr)
                 : build_sft_world(c.world, seed, loaded ? &*loaded : nullptr);
  if (!loaded) {
    fs::create_directories(ckpt.parent_path());
    tinylm::save_checkpoint(w.sft, ckpt.string());
  }
  return {std::move(w), git_blob_hash(read_file(ckpt))};
}

/// SFT stage only: writes one checkpoint per seed.
inline std::vector<fs::path> cmd_sft(RunConfig c, std::ostream* log = nullptr) {
  c.sft_checkpoint.clear();
  std::vector<fs::path> out;
  for (auto seed : c.seeds) {
    prepare_world(c, seed, false, log);
    out.push_back(sft_checkpoint_path(c, seed));
  }
  return out;
}

/// Preference stage and evaluation for one point on a prepared world.
inline RunRecord run_point(const World& w, const std::string& sft_hash, const RunPoint& point, std::uint64_t seed) {
  const auto t0 = std::chrono::steady_clock::now();
  const RunConfig& c = point.config;
  const fs::path dir = point_dir(c, point.label) / seed_dir_name(seed);
  fs::create_directories(dir);
  RunRecord rec;
  rec.config = to_json(c);
  rec.config["seeds"] = json::array({seed});
  rec.input_hash = input_hash(c, seed, sft_hash);
  rec.suite_hash = suite_hash(c);
  rec.point = point.label;
  rec.seed = seed;
  rec.artifacts["sft_checkpoint"] = fs::relative(sft_checkpoint_path(c, seed), dir).generic_string();

  std::string step = "preference";
  Errc code = Errc::io_error;
  try {
    const auto cond = condition_for(c, seed);
    auto result = train_condition(w, cond);
    rec.pairs = manifest_pairs(result.data_manifest);
    step = "eval";
    result.report = evaluate_against_sft(w, result.policy, cond, derive_seed(cond.train.seed, {70}));
    step = "persist";
    tinylm::save_checkpoint(result.policy, (dir / "policy.ckpt").string());
    write_file(dir / "metrics.jsonl", detail::metrics_jsonl(result.log));
    write_file(dir / "data.manifest.json", result.data_manifest.dump(2) + "\n");
    rec.artifacts["checkpoint"] = "policy.ckpt";
    rec.artifacts["metrics"] = "metrics.jsonl";
    rec.artifacts["data_manifest"] = "data.manifest.json";
    detail::write_report_files(result.report, dir, rec.artifacts);
    rec.status = "completed";
  } catch (const Error& e) {
    rec.status = "failed";
    rec.failed_step = step;
    rec.error = e.what();
    code = e.code();
  } catch (const std::exception& e) {
    rec.status = "failed";
    rec.failed_step = step;
    rec.error = e.what();
  }
  rec.wall_clock_seconds = detail::seconds_since(t0);
  write_file(dir / "record.json", to_json(rec).dump(2) + "\n");
  if (rec.status == "failed") throw RunFailed(code, rec.error, step);
  return rec;
}

/// Asserts every run of a comparison group trained on the same pair count.
inline void check_equal_budgets(const std::vector<RunRecord>& records) {
  std::map<std::string, std::size_t> budget;
  for (const auto& r : records) {
    const auto group = r.config.value("comparison_group", std::string());
    if (group.empty()) continue;
    auto [it, fresh] = budget.emplace(group, r.pairs);
    require(fresh || it->second == r.pairs, Errc::invalid_argument,
            "comparison group '" + group + "' mixes pair budgets " + std::to_string(it->second) + " and " +
                std::to_string(r.pairs) + " (point " + r.point + ")");
  }
}

/// Full pipeline for every seed and sweep point. Worlds are shared across
/// the points of one seed.
inline std::vector<RunRecord> cmd_train(const RunConfig& c, std::ostream* log = nullptr) {
  const auto points = expand_points(c);
  std::vector<RunRecord> records;
  for (auto seed : c.seeds) {
    World w;
    std::string sft_hash;
    try {
      std::tie(w, sft_hash) = prepare_world(c, seed, true, log);
    } catch (const std::exception& e) {
      for (const auto& p : points) {
        RunRecord rec;
        rec.config = to_json(p.config);
        rec.config["seeds"] = json::array({seed});
        rec.point = p.label;
        rec.seed = seed;
        rec.status = "failed";
        rec.failed_step = "world";
        rec.error = e.what();
        write_file(point_dir(p.config, p.label) / seed_dir_name(seed) / "record.json", to_json(rec).dump(2) + "\n");
      }
      const auto* err = dynamic_cast<const Error*>(&e);
      throw RunFailed(err ? err->code() : Errc::io_error, e.what(), "world");
    }
    for (const auto& p : points) {
      if (log) *log << "[" << c.name << " seed " << seed << "] " << (p.label.empty() ? optim::to_string(p.config.method) : p.label) << "\n";
      records.push_back(run_point(w, sft_hash, p, seed));
    }
  }
  check_equal_budgets(records);
  return records;
}

/// Writes a preference dataset in the configured generation mode.
inline datakit::PreferenceDataset cmd_generate(const RunConfig& c, std::uint64_t seed, const fs::path& out,
                                               std::ostream* log = nullptr) {
  const auto& g = c.generate;
  std::optional<PolicyModel> model, reference;
  if (!g.checkpoint.empty()) model = tinylm::load_checkpoint(g.checkpoint);
  if (!g.reference.empty()) reference = tinylm::load_checkpoint(g.reference);
  RunConfig cc = c;
  auto [w, sft_hash] = prepare_world(cc, seed, g.mode == GenerateMode::offpolicy, log);
  const PolicyModel& policy = model ? *model : w.sft;
  require(policy.vocab() == w.suite.vocab, Errc::vocabulary_mismatch, "checkpoint vocabulary does not match the suite");
  const auto prompts = eval_prompts(w.prompts, g.prompts, g.prompts);
  const auto sampling = w.config.sampling.with_seed(derive_seed(seed, {90}));
  const auto& oracle = *w.suite.oracle;
  datakit::PreferenceDataset ds;
  switch (g.mode) {
    case GenerateMode::onpolicy:
      ds = datakit::generate_onpolicy_pairs(policy, prompts, g.n_samples, oracle, sampling, w.config.threads);
      break;
    case GenerateMode::offpolicy:
      ds = datakit::build_offpolicy_pool(w.generators, prompts, oracle, sampling, w.config.threads);
      break;
    case GenerateMode::diverse:
      ds = datakit::generate_diverse_pairs(policy, prompts, g.n_samples, oracle, sampling, w.config.threads);
      break;
    case GenerateMode::mixp:
      ds = datakit::generate_mixp_pairs(policy, reference ? *reference : w.sft, prompts, oracle, sampling,
                                        w.config.threads);
      break;
  }
  ds.manifest["mode"] = to_string(g.mode);
  ds.manifest["seed"] = seed;
  ds.manifest["sft_hash"] = sft_hash;
  datakit::write_jsonl(ds, w.suite.vocab, out);
  return ds;
}

inline datakit::PreferenceDataset cmd_mix(const RunConfig& c, const fs::path& on, const fs::path& off, std::uint64_t seed,
                                          const fs::path& out) {
  const auto suite = make_suite(c.world.style, c.world.words);
  datakit::MixConfig mc = c.mix;
  mc.seed = seed;
  auto ds = datakit::simplemix(datakit::read_jsonl(on, suite.vocab), datakit::read_jsonl(off, suite.vocab), mc);
  datakit::write_jsonl(ds, suite.vocab, out);
  return ds;
}

/// An unknown criterion is a usage error (ConfigError).
inline datakit::PreferenceDataset cmd_filter(const RunConfig& c, const fs::path& input, const std::string& criterion,
                                             double fraction, const std::string& reference, const fs::path& out) {
  datakit::FilterConfig fc;
  try {
    fc.criterion = datakit::parse_filter_criterion(criterion);
  } catch (const Error&) {
    throw ConfigError({"criterion: unknown criterion '" + criterion + "'"});
  }
  if (!(fraction > 0.0 && fraction <= 1.0)) throw ConfigError({"fraction: must lie in (0, 1]"});
  fc.fraction = fraction;
  if (c.filter) fc.chosen_only = c.filter->chosen_only;
  const auto suite = make_suite(c.world.style, c.world.words);
  std::optional<PolicyModel> ref;
  if (!reference.empty()) ref = tinylm::load_checkpoint(reference);
  datakit::FilterContext ctx{ref ? &*ref : nullptr, c.world.threads};
  auto ds = datakit::filter(datakit::read_jsonl(input, suite.vocab), fc, ctx);
  datakit::write_jsonl(ds, suite.vocab, out);
  return ds;
}

/// Head-to-head of two checkpoints on the configured suite.
inline evalkit::EvalReport cmd_eval(const RunConfig& c, const std::string& ckpt_a, const std::string& ckpt_b,
                                    std::uint64_t seed, const fs::path& out_dir) {
  const auto a = tinylm::load_checkpoint(ckpt_a);
  const auto b = tinylm::load_checkpoint(ckpt_b);
  require(a.vocab() == b.vocab(), Errc::vocabulary_mismatch, ckpt_a + " and " + ckpt_b + " use different vocabularies");
  const auto suite = make_suite(c.world.style, c.world.words);
  require(a.vocab() == suite.vocab, Errc::vocabulary_mismatch, "checkpoints do not match the configured suite");
  const auto prompts = eval_prompts(suite.prompts(), c.eval.arith_prompts, c.eval.style_prompts);
  auto matches = evalkit::head_to_head(a, b, prompts, *suite.oracle, c.world.sampling.max_len, c.world.threads);
  auto rc = c.eval.report;
  rc.seed = seed;
  auto report = evalkit::make_report(std::move(matches), rc);
  json artifacts;
  detail::write_report_files(report, out_dir, artifacts);
  return report;
}

struct AggregateCell {
  double mean = 0.0;
  double lo = 0.0;
  double hi = 0.0;
};

struct AggregateRow {
  std::string experiment;
  std::string point;
  std::string method;
  double on_ratio = 0.0;
  std::string filter;
  std::vector<std::uint64_t> seeds;
  AggregateCell overall;
  std::map<std::string, AggregateCell> families;
};

/// Seed mean with a percentile bootstrap interval over seeds.
inline AggregateCell aggregate(const std::vector<double>& v, double level = 0.95, int resamples = 2000,
                               std::uint64_t seed = 0) {
  AggregateCell c;
  c.mean = mean(v);
  if (v.size() < 2) {
    c.lo = c.hi = c.mean;
    return c;
  }
  Rng rng(seed);
  std::vector<double> means(static_cast<std::size_t>(resamples));
  for (auto& m : means) {
    double s = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) s += v[rng.below(v.size())];
    m = s / static_cast<double>(v.size());
  }
  std::sort(means.begin(), means.end());
  c.lo = evalkit::quantile_sorted(means, (1.0 - level) / 2.0);
  c.hi = evalkit::quantile_sorted(means, 1.0 - (1.0 - level) / 2.0);
  return c;
}

struct ReportOutput {
  std::vector<AggregateRow> rows;
  std::string csv;
  std::string markdown;
  std::string ratio_csv;  // empty when there is no simplemix ratio sweep
};

inline std::vector<fs::path> find_records(const std::vector<fs::path>& roots) {
  std::vector<fs::path> out;
  for (const auto& root : roots) {
    require(fs::exists(root), Errc::io_error, root.string() + " does not exist");
    if (fs::is_regular_file(root)) {
      out.push_back(root);
      continue;
    }
    for (const auto& e : fs::recursive_directory_iterator(root))
      if (e.is_regular_file() && e.path().filename() == "record.json") out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

/// Aggregates completed RunRecords, one row per (experiment, point). Only
/// record.json files and the reports they reference are read.
inline ReportOutput cmd_report(const std::vector<fs::path>& roots) {
  const auto paths = find_records(roots);
  struct Loaded {
    fs::path path;
    RunRecord rec;
    evalkit::EvalReport report;
  };
  std::vector<Loaded> loaded;
  for (const auto& p : paths) {
    auto rec = record_from_json(json::parse(read_file(p)));
    if (rec.status != "completed") continue;
    const auto report_path = p.parent_path() / rec.artifacts.at("report").get<std::string>();
    loaded.push_back({p, rec, evalkit::report_from_json(json::parse(read_file(report_path)))});
  }
  require(!loaded.empty(), Errc::io_error, "no completed run records found");

  std::map<std::string, std::vector<std::string>> by_suite;
  for (const auto& l : loaded) by_suite[l.rec.suite_hash].push_back(l.path.string());
  if (by_suite.size() > 1) {
    std::string msg = "runs use incompatible suites:";
    for (const auto& [h, ps] : by_suite) {
      msg += " [" + h.substr(0, 12) + ":";
      for (const auto& p : ps) msg += " " + p;
      msg += "]";
    }
    fail(Errc::invalid_argument, msg);
  }

  std::map<std::pair<std::string, std::string>, std::vector<const Loaded*>> groups;
  for (const auto& l : loaded) groups[{l.rec.config.at("name").get<std::string>(), l.rec.point}].push_back(&l);

  ReportOutput out;
  std::set<std::string> families;
  for (const auto& [key, runs] : groups) {
    AggregateRow row;
    row.experiment = key.first;
    row.point = key.second;
    const auto& cfg = runs.front()->rec.config;
    row.method = cfg.at("method").get<std::string>();
    row.on_ratio = cfg.at("mix").at("on_ratio").get<double>();
    if (cfg.contains("filter"))
      row.filter = cfg["filter"]["criterion"].get<std::string>() + "@" + json(cfg["filter"]["fraction"]).dump();
    std::vector<double> overall;
    std::map<std::string, std::vector<double>> fam;
    for (const auto* r : runs) {
      row.seeds.push_back(r->rec.seed);
      overall.push_back(r->report.overall.win_rate);
      for (const auto& f : r->report.families) fam[f.family].push_back(f.win_rate);
    }
    row.overall = aggregate(overall);
    for (const auto& [f, v] : fam) {
      row.families[f] = aggregate(v);
      families.insert(f);
    }
    out.rows.push_back(std::move(row));
  }

  std::ostringstream csv, md;
  csv.precision(10);
  md.precision(4);
  csv << "experiment,point,method,on_ratio,filter,seeds,overall_mean,overall_lo,overall_hi";
  md << "| experiment | point | method | on_ratio | filter | seeds | overall";
  for (const auto& f : families) {
    csv << ',' << f << "_mean," << f << "_lo," << f << "_hi";
    md << " | " << f;
  }
  csv << '\n';
  md << " |\n|---|---|---|---|---|---|---";
  for (std::size_t i = 0; i < families.size(); ++i) md << "|---";
  md << "|\n";
  const auto cell_md = [&](const AggregateCell& c) {
    std::ostringstream s;
    s << std::fixed << std::setprecision(3) << c.mean << " [" << c.lo << ", " << c.hi << "]";
    return s.str();
  };
  for (const auto& r : out.rows) {
    csv << r.experiment << ',' << r.point << ',' << r.method << ',' << r.on_ratio << ',' << r.filter << ','
        << r.seeds.size() << ',' << r.overall.mean << ',' << r.overall.lo << ',' << r.overall.hi;
    md << "| " << r.experiment << " | " << (r.point.empty() ? "-" : r.point) << " | " << r.method << " | " << r.on_ratio
       << " | " << (r.filter.empty() ? "-" : r.filter) << " | " << r.seeds.size() << " | " << cell_md(r.overall);
    for (const auto& f : families) {
      const auto it = r.families.find(f);
      const AggregateCell c = it == r.families.end() ? AggregateCell{} : it->second;
      csv << ',' << c.mean << ',' << c.lo << ',' << c.hi;
      md << " | " << cell_md(c);
    }
    csv << '\n';
    md << " |\n";
  }
  out.csv = csv.str();
  out.markdown = md.str();

  std::vector<const AggregateRow*> sweep;
  for (const auto& r : out.rows)
    if (r.method == "simplemix") sweep.push_back(&r);
  if (sweep.size() > 1) {
    std::stable_sort(sweep.begin(), sweep.end(), [](auto* a, auto* b) { return a->on_ratio < b->on_ratio; });
    std::ostringstream rc;
    rc.precision(10);
    rc << "experiment,on_ratio,seeds,overall_mean,overall_lo,overall_hi\n";
    for (const auto* r : sweep)
      rc << r->experiment << ',' << r->on_ratio << ',' << r->seeds.size() << ',' << r->overall.mean << ','
         << r->overall.lo << ',' << r->overall.hi << '\n';
    out.ratio_csv = rc.str();
  }
  return out;
}

inline void write_report_output(const ReportOutput& r, const fs::path& dir) {
  write_file(dir / "aggregate.csv", r.csv);
  write_file(dir / "summary.md", r.markdown);
  if (!r.ratio_csv.empty()) write_file(dir / "ratio_sweep.csv", r.ratio_csv);
}

}  // namespace prefmix::harness
