#pragma once

// Experiment runner behind the command-line tool: configuration, seeded
// repetitions, per-round CSV output, the replay cost model and the fixture
// self-test.

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "fedkseed/data.hpp"
#include "fedkseed/federation.hpp"
#include "fedkseed/model.hpp"

namespace fedkseed::harness {

enum class Mode { FedKSeed, FedKSeedPro, FedAvgBp, FedZo, CostModel, KSweep };

std::string_view to_string(Mode mode) noexcept;
Mode parse_mode(std::string_view name);

// Variables of the replay-cost comparison. An absent K means the
// infinite-seed scheme where every past step must be replayed.
struct CostModelQuery {
  std::size_t m = 50;
  std::size_t tau = 200;
  std::size_t rounds = 30;
  std::optional<std::size_t> k;
};

// Steps a client needs to obtain the latest model after `rounds` rounds:
// tau * r * m without a seed pool, min(K, tau * r * m) with one.
std::size_t replay_cost_model(const CostModelQuery& q);

struct ExperimentConfig {
  Mode mode = Mode::FedKSeed;
  FLConfig fl;
  ModelSpec model;
  data::SynthSpec synth;
  double alpha = 0.5;
  // Stddev of the per-client feature shift; 0 disables feature skew.
  double feature_shift = 0.0;
  double init_scale = 0.0;
  double bp_learning_rate = 0.05;
  ZoEstimator fedzo_estimator = ZoEstimator::OnePoint;
  // Pool sizes visited in k-sweep mode.
  std::vector<std::size_t> k_values{8, 64, 512, 4096};
  // Mode used for each point of a k-sweep.
  bool sweep_pro = false;
  std::size_t repetitions = 1;
  std::filesystem::path output_dir = "fedkseed-out";
  bool dump_data = false;
  CostModelQuery cost;

  void validate() const;
};

// Desk-scale defaults: logistic regression with d = 1000 on 5 Gaussian
// classes, 50 clients at Dirichlet alpha = 0.5, 5% participation.
ExperimentConfig default_config();

// Applies one key=value setting. Throws ConfigError for unknown keys or
// malformed values.
void apply_setting(ExperimentConfig& cfg, std::string_view key, std::string_view value);

// Reads a key=value file ('#' starts a comment) on top of `base`.
ExperimentConfig load_config(const std::filesystem::path& path,
                             ExperimentConfig base = default_config());

// Everything one seeded run needs: clients, held-out data and w0.
struct Scenario {
  std::vector<ClientState> clients;
  std::vector<DataInstance> test_set;
  ParamVector w0;
  std::vector<std::size_t> assignment;
  data::Dataset dataset;
};

// Data, partition and initialization of repetition `rep`. Every seed is
// derived from (synth.seed, rep) and (fl.master_seed, rep) only, so runs
// that differ in K or mode stay paired.
Scenario build_scenario(const ExperimentConfig& cfg, std::size_t rep);

struct RoundRow {
  std::size_t round = 0;
  std::string mode;
  std::size_t k = 0;
  double alpha = 0.0;
  double test_loss = 0.0;
  double test_accuracy = 0.0;
  std::size_t bytes_down = 0;
  std::size_t bytes_up = 0;
  std::size_t sync_steps = 0;
  double wall_ms = 0.0;
};

struct RunResult {
  Mode mode = Mode::FedKSeed;
  std::size_t k = 0;
  std::size_t repetition = 0;
  double initial_loss = 0.0;
  double initial_accuracy = 0.0;
  std::vector<RoundRow> rows;
  // Final accumulator and probabilities (seed-protocol modes only).
  std::vector<double> final_slots;
  std::vector<double> final_probabilities;

  double final_loss() const { return rows.empty() ? initial_loss : rows.back().test_loss; }
};

// Runs one training mode on one repetition with pool size k.
RunResult run_single(const ExperimentConfig& cfg, Mode mode, std::size_t k, std::size_t rep);

void write_rounds_csv(const std::filesystem::path& path, const std::vector<RoundRow>& rows);
std::string rounds_csv_header();

struct ExperimentOutput {
  std::vector<RunResult> runs;
  std::vector<std::filesystem::path> files;
  std::filesystem::path summary;
};

// Executes cfg.mode, writing one CSV per run plus summary.json.
ExperimentOutput run_experiment(const ExperimentConfig& cfg);

struct FixtureCheck {
  std::string name;
  bool passed = false;
  std::string detail;
};

struct VerifyOptions {
  std::filesystem::path fixture_dir = FEDKSEED_FIXTURE_DIR;
  // Multiplies every numeric tolerance; values below 1 tighten the checks.
  double tolerance_scale = 1.0;
};

// Golden perturbation vectors, golden wire dumps, the one-point/two-point
// identity batch and the replay/reconstruction batch.
std::vector<FixtureCheck> verify_fixtures(const VerifyOptions& options = {});

// Reference messages behind the wire golden fixture, keyed by name.
std::vector<std::pair<std::string, wire::Bytes>> wire_reference_messages();

// (seed, index) pairs covered by the perturbation golden fixture.
std::vector<std::pair<std::uint64_t, std::size_t>> prng_golden_points();

}  // namespace fedkseed::harness
