#include <csignal>
#include <iostream>

#include <CLI11.hpp>

#include "prefmix/harness/run.hpp"
#include "prefmix/rewards/remote.hpp"

using namespace prefmix;
using namespace prefmix::harness;

namespace {

constexpr int exit_ok = 0;
constexpr int exit_config = 2;
constexpr int exit_runtime = 3;

struct Globals {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::optional<unsigned> threads;
};

RunConfig load(const Globals& g, bool required) {
  RunConfig c;
  if (g.config.empty()) {
    if (required) throw ConfigError({"--config: required for this command"});
    json j = {{"mix", json::object()}};
    apply_env_overrides(j);
    c = parse_run_config(j);
  } else {
    c = load_run_config(g.config);
  }
  if (g.seed) c.seeds = {*g.seed};
  if (g.threads) c.world.threads = *g.threads;
  return c;
}

std::uint64_t first_seed(const RunConfig& c) { return c.seeds.front(); }

volatile std::sig_atomic_t stop_requested = 0;

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"prefmix: on/off-policy preference mixing experiments"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--config", g.config, "JSON run config");
  app.add_option("--seed", g.seed, "run this single seed instead of the config's list");
  app.add_option("--out", g.out, "output directory (train, sft, eval, report) or file (generate, mix, filter)");
  app.add_option("--threads", g.threads, "worker threads")->check(CLI::PositiveNumber);

  auto* sft = app.add_subcommand("sft", "train the SFT reference per seed");
  auto* train = app.add_subcommand("train", "SFT (unless checkpointed), preference stage, evaluation");

  auto* gen = app.add_subcommand("generate", "write a preference dataset");
  std::string mode;
  std::optional<int> n_samples;
  std::string gen_ckpt, gen_ref;
  gen->add_option("--mode", mode, "onpolicy | offpolicy | diverse | mixp");
  gen->add_option("--n-samples", n_samples, "responses per prompt");
  gen->add_option("--checkpoint", gen_ckpt, "policy checkpoint (default: the world's SFT model)");
  gen->add_option("--reference", gen_ref, "reference checkpoint for mixp");

  auto* mix = app.add_subcommand("mix", "exact-count SimpleMix of two datasets");
  std::string on_path, off_path;
  std::optional<double> ratio;
  std::optional<std::size_t> total;
  mix->add_option("--on", on_path, "on-policy JSONL")->required();
  mix->add_option("--off", off_path, "off-policy JSONL")->required();
  mix->add_option("--ratio", ratio, "on-policy share");
  mix->add_option("--total", total, "total pairs");

  auto* filt = app.add_subcommand("filter", "keep the top fraction of a dataset");
  std::string input, criterion = "quality", reference;
  double fraction = 0.4;
  filt->add_option("--input", input, "input JSONL")->required();
  filt->add_option("--criterion", criterion, "quality | contrastiveness | onpoliciness | similarity");
  filt->add_option("--fraction", fraction, "kept fraction p");
  filt->add_option("--reference", reference, "reference checkpoint for onpoliciness / similarity");

  auto* eval = app.add_subcommand("eval", "head-to-head of two checkpoints");
  std::string ckpt_a, ckpt_b;
  eval->add_option("--a", ckpt_a, "checkpoint A")->required();
  eval->add_option("--b", ckpt_b, "checkpoint B")->required();

  auto* report = app.add_subcommand("report", "aggregate completed runs");
  std::vector<std::string> roots;
  report->add_option("runs", roots, "run directories or record.json files")->required();

  auto* stub = app.add_subcommand("stub-reward-server", "serve the scripted reward stub until interrupted");
  int port = 8089;
  std::string host = "127.0.0.1";
  rewards::StubScript script;
  stub->add_option("--port", port, "port (0 picks a free one)");
  stub->add_option("--host", host, "bind address");
  stub->add_option("--fail-first", script.fail_first, "answer the first N requests with HTTP 500");
  stub->add_option("--delay-ms", script.delay_ms, "per-request delay");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? exit_ok : exit_config;
  }

  try {
    if (*sft) {
      auto c = load(g, true);
      if (!g.out.empty()) c.out = g.out;
      for (const auto& p : cmd_sft(c, &std::cerr)) std::cout << p.string() << "\n";
    } else if (*train) {
      auto c = load(g, true);
      if (!g.out.empty()) c.out = g.out;
      for (const auto& r : cmd_train(c, &std::cerr))
        std::cout << (r.point.empty() ? c.name : r.point) << " seed " << r.seed << " " << r.status << " "
                  << r.input_hash << "\n";
    } else if (*gen) {
      auto c = load(g, true);
      if (!mode.empty()) {
        json j = to_json(c);
        j["generate"]["mode"] = mode;
        c = parse_run_config(j);
        if (g.seed) c.seeds = {*g.seed};
        if (g.threads) c.world.threads = *g.threads;
      }
      if (n_samples) c.generate.n_samples = *n_samples;
      if (!gen_ckpt.empty()) c.generate.checkpoint = gen_ckpt;
      if (!gen_ref.empty()) c.generate.reference = gen_ref;
      if (g.out.empty()) throw ConfigError({"--out: output JSONL path required"});
      const auto ds = cmd_generate(c, first_seed(c), g.out, &std::cerr);
      std::cout << ds.size() << " pairs -> " << g.out << "\n";
    } else if (*mix) {
      auto c = load(g, false);
      if (ratio) c.mix.on_ratio = *ratio;
      if (total) c.mix.total_pairs = *total;
      if (!(c.mix.on_ratio >= 0.0 && c.mix.on_ratio <= 1.0)) throw ConfigError({"--ratio: must lie in [0, 1]"});
      if (c.mix.total_pairs == 0) throw ConfigError({"--total: must be positive"});
      if (g.out.empty()) throw ConfigError({"--out: output JSONL path required"});
      const auto ds = cmd_mix(c, on_path, off_path, first_seed(c), g.out);
      std::cout << ds.size() << " pairs -> " << g.out << "\n";
    } else if (*filt) {
      auto c = load(g, false);
      if (g.out.empty()) throw ConfigError({"--out: output JSONL path required"});
      const auto ds = cmd_filter(c, input, criterion, fraction, reference, g.out);
      std::cout << ds.size() << " pairs -> " << g.out << "\n";
    } else if (*eval) {
      auto c = load(g, false);
      const std::string out = g.out.empty() ? "eval" : g.out;
      const auto r = cmd_eval(c, ckpt_a, ckpt_b, first_seed(c), out);
      std::cout << "win_rate " << r.overall.win_rate << " [" << r.overall.ci.lo << ", " << r.overall.ci.hi << "] -> "
                << out << "\n";
    } else if (*report) {
      std::vector<fs::path> paths(roots.begin(), roots.end());
      const auto r = cmd_report(paths);
      write_report_output(r, g.out.empty() ? "report" : g.out);
      std::cout << r.markdown;
    } else if (*stub) {
      rewards::StubRewardServer server(script, host, port);
      std::cout << server.endpoint() << std::endl;
      std::signal(SIGINT, [](int) { stop_requested = 1; });
      std::signal(SIGTERM, [](int) { stop_requested = 1; });
      while (!stop_requested) std::this_thread::sleep_for(std::chrono::milliseconds(100));
      server.stop();
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error:\n";
    for (const auto& p : e.problems()) std::cerr << "  " << p << "\n";
    return exit_config;
  } catch (const RunFailed& e) {
    std::cerr << "run failed at step " << e.step() << ": " << e.what() << "\n";
    return exit_runtime;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_runtime;
  }
  return exit_ok;
}
