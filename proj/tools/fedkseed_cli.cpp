// fedkseed: run seed-protocol experiments, baselines, cost models and the
// fixture self-test.
//
// Exit codes: 0 success, 1 configuration error, 2 verification failure,
// 3 runtime failure.

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fedkseed/error.hpp"
#include "fedkseed/harness.hpp"
#include "fedkseed/wire.hpp"

namespace {

constexpr int kExitConfig = 1;
constexpr int kExitVerify = 2;
constexpr int kExitRuntime = 3;

}  // namespace

int main(int argc, char** argv) {
  using namespace fedkseed;

  CLI::App app{"Federated zeroth-order tuning with a finite seed pool"};
  app.require_subcommand(1);

  // run
  auto* run = app.add_subcommand("run", "Run an experiment and write per-round CSVs + summary.json");
  std::string config_path;
  std::optional<std::string> mode;
  std::optional<std::size_t> k;
  std::optional<double> alpha;
  std::optional<std::size_t> rounds;
  std::optional<std::size_t> tau;
  std::optional<std::string> out;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> reps;
  std::vector<std::string> settings;
  run->add_option("-c,--config", config_path, "key=value config file");
  run->add_option("--mode", mode, "fedkseed | fedkseed-pro | fedavg-bp | fedzo | cost-model | k-sweep");
  run->add_option("--K", k, "Number of candidate seeds");
  run->add_option("--alpha", alpha, "Dirichlet concentration");
  run->add_option("--rounds", rounds, "Communication rounds");
  run->add_option("--tau", tau, "Local steps per round");
  run->add_option("--out", out, "Output directory");
  run->add_option("--seed", seed, "Master seed");
  run->add_option("--reps", reps, "Repetitions");
  run->add_option("--set", settings, "Extra key=value overrides (repeatable)");

  // cost-model
  auto* cost = app.add_subcommand("cost-model", "Model-sync steps with and without a seed pool");
  harness::CostModelQuery query;
  std::optional<std::size_t> cost_k;
  cost->add_option("--m", query.m, "Clients per round")->capture_default_str();
  cost->add_option("--tau", query.tau, "Local steps per round")->capture_default_str();
  cost->add_option("--rounds", query.rounds, "Rounds elapsed")->capture_default_str();
  cost->add_option("--K", cost_k, "Seed-pool size (omit for infinite seeds)");

  // bytes
  auto* bytes = app.add_subcommand("bytes", "Per-client per-round communication in bytes");
  std::size_t bytes_k = 4096;
  std::size_t bytes_tau = 200;
  bool bytes_pro = false;
  bytes->add_option("--K", bytes_k)->capture_default_str();
  bytes->add_option("--tau", bytes_tau)->capture_default_str();
  bytes->add_flag("--pro", bytes_pro, "Include seed probabilities in the downlink");

  // verify
  auto* verify = app.add_subcommand("verify", "Check golden fixtures and numerical identities");
  harness::VerifyOptions verify_options;
  std::string fixture_dir = verify_options.fixture_dir.string();
  verify->add_option("--fixtures", fixture_dir, "Fixture directory")->capture_default_str();
  verify->add_option("--tolerance-scale", verify_options.tolerance_scale,
                     "Multiply every tolerance (below 1 tightens)")
      ->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (*run) {
      harness::ExperimentConfig cfg = config_path.empty() ? harness::default_config()
                                                          : harness::load_config(config_path);
      if (mode) harness::apply_setting(cfg, "mode", *mode);
      if (k) cfg.fl.k = *k;
      if (alpha) cfg.alpha = *alpha;
      if (rounds) cfg.fl.rounds = *rounds;
      if (tau) cfg.fl.tau = *tau;
      if (out) cfg.output_dir = *out;
      if (seed) cfg.fl.master_seed = *seed;
      if (reps) cfg.repetitions = *reps;
      for (const std::string& s : settings) {
        const auto eq = s.find('=');
        if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + s + "'");
        harness::apply_setting(cfg, s.substr(0, eq), s.substr(eq + 1));
      }
      const harness::ExperimentOutput result = harness::run_experiment(cfg);
      for (const auto& run_result : result.runs) {
        std::cout << harness::to_string(run_result.mode) << " K=" << run_result.k
                  << " rep=" << run_result.repetition << " loss " << run_result.initial_loss << " -> "
                  << run_result.final_loss() << '\n';
      }
      std::cout << "wrote " << result.files.size() << " file(s) and " << result.summary.string() << '\n';
    } else if (*cost) {
      if (cost_k) query.k = *cost_k;
      std::cout << harness::replay_cost_model(query) << '\n';
    } else if (*bytes) {
      const wire::RoundBytes b = wire::round_bytes(bytes_k, bytes_tau, bytes_pro);
      std::cout << "down " << b.down << "\nup " << b.up << "\ntotal " << b.total << '\n';
    } else if (*verify) {
      verify_options.fixture_dir = fixture_dir;
      bool ok = true;
      for (const auto& c : harness::verify_fixtures(verify_options)) {
        std::cout << (c.passed ? "PASS " : "FAIL ") << c.name << ": " << c.detail << '\n';
        ok = ok && c.passed;
      }
      return ok ? 0 : kExitVerify;
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return 0;
}
