#pragma once

// Round-based simulation of the seed protocol and its two baselines.
//
// All server/client state crosses the codec in wire.hpp: clients see the
// accumulator and probabilities narrowed to f32, and the server aggregates
// the f32 gradients it decodes from each uplink. Every random choice comes
// from a stream derived from (master_seed, purpose, round, client), so a run
// is a pure function of its configuration and data.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "fedkseed/model.hpp"
#include "fedkseed/rng.hpp"
#include "fedkseed/seed_state.hpp"
#include "fedkseed/wire.hpp"
#include "fedkseed/zoo.hpp"

namespace fedkseed {

struct FLConfig {
  std::size_t num_clients = 1;
  double participation_ratio = 0.05;
  std::size_t tau = 200;
  std::size_t rounds = 1;
  std::size_t k = 4096;
  zoo::ZooConfig zoo;
  bool pro_mode = false;
  std::uint64_t master_seed = 0;
  // Restart the |g| statistics behind the seed probabilities every round
  // instead of accumulating them over the whole run.
  bool reset_psi_each_round = false;

  void validate() const;
  // m = max(1, round(N * ratio)).
  std::size_t clients_per_round() const;
};

struct ClientState {
  std::size_t id = 0;
  std::vector<DataInstance> dataset;
  double aggregate_weight = 0.0;
};

struct RoundReport {
  std::size_t round = 0;
  std::vector<std::size_t> active_clients;
  std::vector<std::size_t> failed_clients;
  double global_test_loss = 0.0;
  double global_test_accuracy = 0.0;
  std::size_t per_client_steps = 0;
  // Per-client message sizes in bytes.
  std::size_t bytes_down = 0;
  std::size_t bytes_up = 0;
  // Perturbation applications a client needs to rebuild the global model
  // at the start of this round.
  std::size_t sync_steps = 0;
  double wall_ms = 0.0;
};

// Uniform subset of m = max(1, round(N * ratio)) client ids, sorted.
std::vector<std::size_t> select_active_clients(std::size_t n, double ratio, Rng& rng);

// c_i = |D_i| / sum_k |D_k| over the given active dataset sizes.
std::vector<double> compute_aggregate_weights(std::span<const std::size_t> dataset_sizes);

// What a client knows at the start of a round, as decoded from the downlink.
struct GlobalSnapshot {
  SeedPool pool;
  std::vector<double> accumulator;
  // Empty outside Pro mode.
  std::vector<double> probabilities;

  static GlobalSnapshot from_downlink(const wire::DownlinkMsg& msg);
};

struct ClientResult {
  GradHistory history;
  std::size_t sync_steps = 0;
};

// Rebuilds the global model from the snapshot, then runs tau steps of
// sample instance -> sample seed -> two-point estimate -> update. Throws
// NumericalError if an estimate is not finite.
ClientResult client_local_training(const ModelSpec& spec, const ClientState& client,
                                   const ParamVector& w0, const GlobalSnapshot& snapshot,
                                   const FLConfig& cfg, Rng& rng);

// Stream seeds shared by the server and the baselines.
std::uint64_t selection_stream(std::uint64_t master_seed, std::size_t round);
std::uint64_t client_stream(std::uint64_t master_seed, std::size_t round, std::size_t client);
std::uint32_t pool_seed(std::uint64_t master_seed);

class Federation {
 public:
  Federation(ModelSpec spec, ParamVector w0, FLConfig cfg, std::vector<ClientState> clients,
             std::vector<DataInstance> test_set);

  // One round of the protocol; rounds are numbered from 1.
  RoundReport run_round(std::size_t round);
  // Runs rounds 1..cfg.rounds.
  std::vector<RoundReport> run();

  // The model every client reconstructs from the current downlink.
  ParamVector global_model() const;
  Evaluation evaluate() const;
  wire::DownlinkMsg downlink() const;

  const SeedPool& pool() const noexcept { return pool_; }
  const GradAccumulator& accumulator() const noexcept { return acc_; }
  const SeedProbabilities& probabilities() const noexcept { return probabilities_; }
  const FLConfig& config() const noexcept { return cfg_; }
  const ModelSpec& model() const noexcept { return spec_; }
  const std::vector<ClientState>& clients() const noexcept { return clients_; }
  const ParamVector& initial_model() const noexcept { return w0_; }

 private:
  ModelSpec spec_;
  ParamVector w0_;
  FLConfig cfg_;
  std::vector<ClientState> clients_;
  std::vector<DataInstance> test_set_;
  SeedPool pool_;
  GradAccumulator acc_;
  SeedProbabilities probabilities_;
  std::size_t next_round_ = 1;
};

struct BaselineResult {
  Evaluation initial;
  std::vector<RoundReport> rounds;
};

// FedAvg with exact gradients: tau SGD steps per client, full-model upload,
// weighted averaging.
BaselineResult run_baseline_fedavg_bp(const ModelSpec& spec, const ParamVector& w0,
                                      std::span<const ClientState> clients,
                                      std::span<const DataInstance> test_set, const FLConfig& cfg,
                                      double learning_rate);

enum class ZoEstimator { OnePoint, TwoPoint };

// FedZO with b1 = b2 = 1: like the seed protocol but every step draws a
// fresh seed from the full 32-bit space, and models travel in full.
BaselineResult run_baseline_fedzo(const ModelSpec& spec, const ParamVector& w0,
                                  std::span<const ClientState> clients,
                                  std::span<const DataInstance> test_set, const FLConfig& cfg,
                                  ZoEstimator estimator = ZoEstimator::OnePoint);

struct LocalRun {
  ParamVector w;
  GradHistory history;
};

LocalRun fedzo_client_training(const ModelSpec& spec, const ClientState& client,
                               ParamVector w, const FLConfig& cfg, Rng& rng,
                               ZoEstimator estimator);

ParamVector sgd_client_training(const ModelSpec& spec, const ClientState& client, ParamVector w,
                                std::size_t tau, double learning_rate, Rng& rng);

}  // namespace fedkseed
