#include "fedkseed/federation.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <numeric>
#include <string>

#include "fedkseed/error.hpp"
#include "fedkseed/perturb.hpp"

namespace fedkseed {
namespace {

constexpr std::uint64_t kSelectTag = 0x5e1ec7;
constexpr std::uint64_t kClientTag = 0xc11e47;
constexpr std::uint64_t kPoolTag = 0x9001;

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point start) {
  return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

std::vector<double> widen(std::span<const float> values) {
  return {values.begin(), values.end()};
}

std::vector<float> narrow(std::span<const double> values) {
  std::vector<float> out(values.size());
  for (std::size_t j = 0; j < values.size(); ++j) out[j] = static_cast<float>(values[j]);
  return out;
}

void check_clients(std::span<const ClientState> clients, const FLConfig& cfg) {
  if (clients.size() != cfg.num_clients) {
    throw ConfigError("expected " + std::to_string(cfg.num_clients) + " clients, got " +
                      std::to_string(clients.size()));
  }
  for (std::size_t i = 0; i < clients.size(); ++i) {
    if (clients[i].id != i) throw ConfigError("client ids must equal their index");
  }
}

std::vector<std::size_t> active_sizes(std::span<const ClientState> clients,
                                      std::span<const std::size_t> active) {
  std::vector<std::size_t> sizes;
  sizes.reserve(active.size());
  for (std::size_t id : active) sizes.push_back(clients[id].dataset.size());
  return sizes;
}

const DataInstance& sample_instance(const ClientState& client, Rng& rng) {
  return client.dataset[rng.uniform_index(client.dataset.size())];
}

// Shared loop of the full-model baselines.
using LocalTrainer = std::function<ParamVector(const ClientState&, ParamVector, Rng&)>;

BaselineResult run_full_model_baseline(const ModelSpec& spec, const ParamVector& w0,
                                       std::span<const ClientState> clients,
                                       std::span<const DataInstance> test_set,
                                       const FLConfig& cfg, const LocalTrainer& train) {
  cfg.validate();
  check_clients(clients, cfg);
  if (w0.size() != param_count(spec)) throw ContractViolation("w0 length != model size");
  BaselineResult result;
  ParamVector global = w0;
  result.initial = evaluate_dataset(spec, global.values(), test_set);
  for (std::size_t round = 1; round <= cfg.rounds; ++round) {
    const auto start = Clock::now();
    RoundReport report;
    report.round = round;
    report.per_client_steps = cfg.tau;
    Rng select_rng(selection_stream(cfg.master_seed, round));
    report.active_clients = select_active_clients(cfg.num_clients, cfg.participation_ratio, select_rng);
    const std::vector<double> weights = compute_aggregate_weights(active_sizes(clients, report.active_clients));

    const wire::Bytes down = wire::encode_model(global.values());
    report.bytes_down = down.size();
    std::vector<std::vector<double>> uploads;
    std::vector<double> kept_weights;
    for (std::size_t n = 0; n < report.active_clients.size(); ++n) {
      const std::size_t id = report.active_clients[n];
      Rng rng(client_stream(cfg.master_seed, round, id));
      try {
        ParamVector local = train(clients[id], ParamVector(wire::decode_model(down, w0.size())), rng);
        const wire::Bytes up = wire::encode_model(local.values());
        report.bytes_up = up.size();
        uploads.push_back(wire::decode_model(up, w0.size()));
        kept_weights.push_back(weights[n]);
      } catch (const NumericalError&) {
        report.failed_clients.push_back(id);
      } catch (const ProtocolError&) {
        report.failed_clients.push_back(id);
      }
    }
    if (uploads.empty()) throw Error("round " + std::to_string(round) + ": every client failed");
    const double total = std::accumulate(kept_weights.begin(), kept_weights.end(), 0.0);
    ParamVector next(w0.size());
    for (std::size_t n = 0; n < uploads.size(); ++n) {
      const double c = kept_weights[n] / total;
      for (std::size_t i = 0; i < next.size(); ++i) next[i] += c * uploads[n][i];
    }
    global = std::move(next);
    const Evaluation eval = evaluate_dataset(spec, global.values(), test_set);
    report.global_test_loss = eval.mean_loss;
    report.global_test_accuracy = eval.accuracy;
    report.wall_ms = elapsed_ms(start);
    result.rounds.push_back(std::move(report));
  }
  return result;
}

}  // namespace

void FLConfig::validate() const {
  if (num_clients == 0) throw ConfigError("num_clients must be >= 1");
  if (!(participation_ratio > 0.0 && participation_ratio <= 1.0)) {
    throw ConfigError("participation_ratio must be in (0, 1]");
  }
  if (tau == 0) throw ConfigError("tau must be >= 1");
  if (rounds == 0) throw ConfigError("rounds must be >= 1");
  if (k == 0) throw ConfigError("K must be >= 1");
  zoo.validate();
}

std::size_t FLConfig::clients_per_round() const {
  const auto m = static_cast<std::size_t>(std::llround(static_cast<double>(num_clients) * participation_ratio));
  return std::clamp<std::size_t>(m, 1, num_clients);
}

std::vector<std::size_t> select_active_clients(std::size_t n, double ratio, Rng& rng) {
  FLConfig probe;
  probe.num_clients = n;
  probe.participation_ratio = ratio;
  if (n == 0 || !(ratio > 0.0 && ratio <= 1.0)) throw ConfigError("invalid participation settings");
  const std::size_t m = probe.clients_per_round();
  std::vector<std::size_t> ids(n);
  std::iota(ids.begin(), ids.end(), 0);
  // Partial Fisher-Yates.
  for (std::size_t i = 0; i < m; ++i) {
    const std::size_t j = i + rng.uniform_index(n - i);
    std::swap(ids[i], ids[j]);
  }
  ids.resize(m);
  std::sort(ids.begin(), ids.end());
  return ids;
}

std::vector<double> compute_aggregate_weights(std::span<const std::size_t> dataset_sizes) {
  if (dataset_sizes.empty()) throw ConfigError("no active clients");
  double total = 0.0;
  for (std::size_t s : dataset_sizes) {
    if (s == 0) throw ConfigError("active client with an empty dataset");
    total += static_cast<double>(s);
  }
  std::vector<double> weights(dataset_sizes.size());
  for (std::size_t i = 0; i < weights.size(); ++i) weights[i] = static_cast<double>(dataset_sizes[i]) / total;
  return weights;
}

GlobalSnapshot GlobalSnapshot::from_downlink(const wire::DownlinkMsg& msg) {
  GlobalSnapshot snap;
  snap.pool = init_pool(msg.master_seed, msg.accumulator.size());
  snap.accumulator = widen(msg.accumulator);
  if (msg.probabilities) snap.probabilities = widen(*msg.probabilities);
  return snap;
}

ClientResult client_local_training(const ModelSpec& spec, const ClientState& client,
                                   const ParamVector& w0, const GlobalSnapshot& snapshot,
                                   const FLConfig& cfg, Rng& rng) {
  if (client.dataset.empty()) throw ConfigError("client " + std::to_string(client.id) + " has no data");
  if (snapshot.accumulator.size() != snapshot.pool.size()) {
    throw ContractViolation("snapshot accumulator/pool size mismatch");
  }
  ReconstructStats stats;
  ParamVector w = reconstruct_model(w0, snapshot.pool, snapshot.accumulator, cfg.zoo.eta, &stats);

  std::optional<SeedSampler> sampler;
  if (cfg.pro_mode) {
    if (snapshot.probabilities.size() != snapshot.pool.size()) {
      throw ContractViolation("Pro mode needs seed probabilities in the snapshot");
    }
    sampler.emplace(snapshot.pool, snapshot.probabilities);
  }

  ClientResult result;
  result.sync_steps = stats.applications;
  result.history.reserve(cfg.tau);
  for (std::size_t t = 0; t < cfg.tau; ++t) {
    const DataInstance& x = sample_instance(client, rng);
    const SeedDraw draw = sampler ? sampler->sample(rng)
                                  : SeedDraw{snapshot.pool.seed(rng.uniform_index(snapshot.pool.size())), 0};
    const double g = zoo::scalar_gradient_two_point(spec, w.values(), x, draw.seed, cfg.zoo.epsilon);
    zoo::step_update(w.values(), draw.seed, g, cfg.zoo.eta);
    result.history.push_back({draw.seed, g});
  }
  return result;
}

std::uint64_t selection_stream(std::uint64_t master_seed, std::size_t round) {
  return derive_seed(master_seed, {kSelectTag, round});
}

std::uint64_t client_stream(std::uint64_t master_seed, std::size_t round, std::size_t client) {
  return derive_seed(master_seed, {kClientTag, round, client});
}

std::uint32_t pool_seed(std::uint64_t master_seed) {
  return static_cast<std::uint32_t>(derive_seed(master_seed, {kPoolTag}) >> 32);
}

Federation::Federation(ModelSpec spec, ParamVector w0, FLConfig cfg,
                       std::vector<ClientState> clients, std::vector<DataInstance> test_set)
    : spec_(std::move(spec)),
      w0_(std::move(w0)),
      cfg_(cfg),
      clients_(std::move(clients)),
      test_set_(std::move(test_set)) {
  cfg_.validate();
  spec_.validate();
  check_clients(clients_, cfg_);
  if (w0_.size() != param_count(spec_)) throw ContractViolation("w0 length != model size");
  if (test_set_.empty()) throw ConfigError("empty test set");
  pool_ = init_pool(pool_seed(cfg_.master_seed), cfg_.k);
  acc_ = GradAccumulator(cfg_.k);
  probabilities_ = SeedProbabilities::uniform(cfg_.k);
}

wire::DownlinkMsg Federation::downlink() const {
  wire::DownlinkMsg msg;
  msg.master_seed = static_cast<std::uint32_t>(pool_.master_seed());
  msg.accumulator = narrow(acc_.slots);
  if (cfg_.pro_mode) msg.probabilities = narrow(probabilities_.p);
  return msg;
}

ParamVector Federation::global_model() const {
  const wire::Bytes bytes = wire::encode_downlink(downlink());
  const wire::DownlinkMsg msg = wire::decode_downlink(bytes, cfg_.k, cfg_.pro_mode);
  return reconstruct_model(w0_, pool_, widen(msg.accumulator), cfg_.zoo.eta);
}

Evaluation Federation::evaluate() const {
  const ParamVector w = global_model();
  return evaluate_dataset(spec_, w.values(), test_set_);
}

RoundReport Federation::run_round(std::size_t round) {
  if (round == 0) throw ContractViolation("rounds are numbered from 1");
  const auto start = Clock::now();
  RoundReport report;
  report.round = round;
  report.per_client_steps = cfg_.tau;

  Rng select_rng(selection_stream(cfg_.master_seed, round));
  report.active_clients = select_active_clients(cfg_.num_clients, cfg_.participation_ratio, select_rng);
  const std::vector<double> weights = compute_aggregate_weights(active_sizes(clients_, report.active_clients));
  for (std::size_t n = 0; n < report.active_clients.size(); ++n) {
    clients_[report.active_clients[n]].aggregate_weight = weights[n];
  }

  const wire::Bytes down = wire::encode_downlink(downlink());
  report.bytes_down = down.size();
  const GlobalSnapshot snapshot =
      GlobalSnapshot::from_downlink(wire::decode_downlink(down, cfg_.k, cfg_.pro_mode));

  std::vector<GradHistory> histories;
  std::vector<double> kept_weights;
  for (std::size_t n = 0; n < report.active_clients.size(); ++n) {
    const std::size_t id = report.active_clients[n];
    Rng rng(client_stream(cfg_.master_seed, round, id));
    try {
      ClientResult local = client_local_training(spec_, clients_[id], w0_, snapshot, cfg_, rng);
      report.sync_steps = local.sync_steps;
      wire::UplinkMsg msg;
      msg.entries.reserve(local.history.size());
      for (const HistoryEntry& e : local.history) msg.entries.push_back({e.seed, static_cast<float>(e.grad)});
      const wire::Bytes up = wire::encode_uplink(msg);
      report.bytes_up = up.size();
      GradHistory received;
      for (const wire::UplinkEntry& e : wire::decode_uplink(up).entries) received.push_back({e.seed, e.grad});
      histories.push_back(std::move(received));
      kept_weights.push_back(weights[n]);
    } catch (const NumericalError&) {
      report.failed_clients.push_back(id);
    } catch (const ProtocolError&) {
      report.failed_clients.push_back(id);
    }
  }
  if (histories.empty()) throw Error("round " + std::to_string(round) + ": every client failed");

  const double total = std::accumulate(kept_weights.begin(), kept_weights.end(), 0.0);
  if (cfg_.reset_psi_each_round) acc_.reset_statistics();
  for (std::size_t n = 0; n < histories.size(); ++n) {
    accumulate(acc_, histories[n], kept_weights[n] / total, pool_);
  }
  if (cfg_.pro_mode) probabilities_ = update_probabilities(acc_);

  const Evaluation eval = evaluate();
  report.global_test_loss = eval.mean_loss;
  report.global_test_accuracy = eval.accuracy;
  report.wall_ms = elapsed_ms(start);
  next_round_ = round + 1;
  return report;
}

std::vector<RoundReport> Federation::run() {
  std::vector<RoundReport> reports;
  reports.reserve(cfg_.rounds);
  for (std::size_t r = next_round_; r <= cfg_.rounds; ++r) reports.push_back(run_round(r));
  return reports;
}

BaselineResult run_baseline_fedavg_bp(const ModelSpec& spec, const ParamVector& w0,
                                      std::span<const ClientState> clients,
                                      std::span<const DataInstance> test_set, const FLConfig& cfg,
                                      double learning_rate) {
  if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be > 0");
  return run_full_model_baseline(spec, w0, clients, test_set, cfg,
                                 [&](const ClientState& c, ParamVector w, Rng& rng) {
                                   return sgd_client_training(spec, c, std::move(w), cfg.tau, learning_rate, rng);
                                 });
}

BaselineResult run_baseline_fedzo(const ModelSpec& spec, const ParamVector& w0,
                                  std::span<const ClientState> clients,
                                  std::span<const DataInstance> test_set, const FLConfig& cfg,
                                  ZoEstimator estimator) {
  return run_full_model_baseline(spec, w0, clients, test_set, cfg,
                                 [&](const ClientState& c, ParamVector w, Rng& rng) {
                                   return fedzo_client_training(spec, c, std::move(w), cfg, rng, estimator).w;
                                 });
}

LocalRun fedzo_client_training(const ModelSpec& spec, const ClientState& client, ParamVector w,
                               const FLConfig& cfg, Rng& rng, ZoEstimator estimator) {
  if (client.dataset.empty()) throw ConfigError("client " + std::to_string(client.id) + " has no data");
  LocalRun run{std::move(w), {}};
  run.history.reserve(cfg.tau);
  for (std::size_t t = 0; t < cfg.tau; ++t) {
    const DataInstance& x = sample_instance(client, rng);
    const std::uint32_t seed = rng.next_u32();
    const double g = estimator == ZoEstimator::OnePoint
                         ? zoo::scalar_gradient_one_point(spec, run.w.values(), x, seed, cfg.zoo.epsilon)
                         : zoo::scalar_gradient_two_point(spec, run.w.values(), x, seed, cfg.zoo.epsilon);
    zoo::step_update(run.w.values(), seed, g, cfg.zoo.eta);
    run.history.push_back({seed, g});
  }
  return run;
}

ParamVector sgd_client_training(const ModelSpec& spec, const ClientState& client, ParamVector w,
                                std::size_t tau, double learning_rate, Rng& rng) {
  if (client.dataset.empty()) throw ConfigError("client " + std::to_string(client.id) + " has no data");
  for (std::size_t t = 0; t < tau; ++t) {
    const DataInstance& x = sample_instance(client, rng);
    const ParamVector g = exact_gradient(spec, w.values(), x);
    for (std::size_t i = 0; i < w.size(); ++i) w[i] -= learning_rate * g[i];
    if (!w.all_finite()) throw NumericalError("SGD diverged", 0.0, 0.0);
  }
  return w;
}

}  // namespace fedkseed
