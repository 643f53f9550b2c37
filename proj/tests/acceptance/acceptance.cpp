// End-to-end acceptance checks. One PASS/FAIL line per criterion; the exit
// status is the number of failures.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <new>
#include <sstream>
#include <string>
#include <vector>

#include "fedkseed/federation.hpp"
#include "fedkseed/harness.hpp"
#include "fedkseed/model.hpp"
#include "fedkseed/perturb.hpp"
#include "fedkseed/seed_state.hpp"
#include "fedkseed/stats.hpp"
#include "fedkseed/wire.hpp"
#include "fedkseed/zoo.hpp"

// Allocation tracking for the memory criterion. Only counts while armed.
namespace alloc_probe {
std::atomic<bool> armed{false};
std::atomic<std::size_t> largest{0};
std::atomic<std::size_t> big_count{0};
std::size_t big_threshold = 0;

void record(std::size_t n) {
  if (!armed.load(std::memory_order_relaxed)) return;
  std::size_t prev = largest.load();
  while (n > prev && !largest.compare_exchange_weak(prev, n)) {
  }
  if (big_threshold != 0 && n >= big_threshold) ++big_count;
}

void arm(std::size_t threshold) {
  largest = 0;
  big_count = 0;
  big_threshold = threshold;
  armed = true;
}
void disarm() { armed = false; }
}  // namespace alloc_probe

void* operator new(std::size_t n) {
  alloc_probe::record(n);
  if (void* p = std::malloc(n == 0 ? 1 : n)) return p;
  throw std::bad_alloc();
}
void operator delete(void* p) noexcept { std::free(p); }
void operator delete(void* p, std::size_t) noexcept { std::free(p); }

using namespace fedkseed;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void report(int id, const std::string& title, const std::function<Outcome()>& body) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (!o.pass) ++failures;
  std::printf("[%s] criterion %d: %s -- %s (%.1f s)\n", o.pass ? "PASS" : "FAIL", id, title.c_str(),
              o.detail.c_str(), secs);
  std::fflush(stdout);
}

fs::path fresh_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("fedkseed_acceptance_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::vector<double> final_losses(const harness::ExperimentConfig& cfg, harness::Mode mode,
                                 std::size_t k) {
  std::vector<double> out;
  for (std::size_t rep = 0; rep < cfg.repetitions; ++rep) {
    out.push_back(harness::run_single(cfg, mode, k, rep).final_loss());
  }
  return out;
}

// CSV text with the trailing wall_ms column dropped from every line.
std::string csv_without_wall(const fs::path& p) {
  std::ifstream in(p);
  std::string line;
  std::string out;
  while (std::getline(in, line)) {
    out += line.substr(0, line.rfind(','));
    out += '\n';
  }
  return out;
}

std::string fmt(double v) {
  std::ostringstream s;
  s.precision(6);
  s << v;
  return s.str();
}

DataInstance random_instance(Rng& rng, const ModelSpec& spec) {
  DataInstance x;
  x.features.resize(spec.input_dim);
  for (double& v : x.features) v = rng.normal();
  x.label = spec.is_classifier() ? static_cast<double>(rng.uniform_index(spec.output_dim)) : rng.normal();
  return x;
}

// Criterion 5 and 9 share their runs.
fs::path convergence_dir;

}  // namespace

int main() {
  report(1, "wire byte accounting", [] {
    struct Case {
      std::size_t k;
      bool pro;
      std::size_t down;
      std::size_t total;
    };
    // The K=2048 Pro count of 16,388 bytes is the downlink; with the 200
    // uplink pairs the round total is 17,988.
    const std::vector<Case> cases{{4096, false, 16388, 17988}, {1024, true, 8196, 9796}, {2048, true, 16388, 17988}};
    std::ostringstream d;
    bool ok = true;
    for (const Case& c : cases) {
      wire::DownlinkMsg down{1U, std::vector<float>(c.k, 0.5F), std::nullopt};
      if (c.pro) down.probabilities = std::vector<float>(c.k, 1.0F / static_cast<float>(c.k));
      wire::UplinkMsg up;
      up.entries.assign(200, wire::UplinkEntry{7U, 0.25F});
      const std::size_t down_bytes = wire::encode_downlink(down).size();
      const std::size_t up_bytes = wire::encode_uplink(up).size();
      const wire::RoundBytes rb = wire::round_bytes(c.k, 200, c.pro);
      ok = ok && down_bytes == c.down && rb.down == c.down && down_bytes + up_bytes == c.total &&
           rb.total == c.total && up_bytes == 1600;
      d << "K=" << c.k << (c.pro ? " pro" : "") << " down=" << down_bytes << " total=" << down_bytes + up_bytes
        << "; ";
    }
    return Outcome{ok, d.str()};
  });

  report(2, "two-point equals the mean of opposing one-point estimates", [] {
    Rng rng(20240601);
    const std::vector<ModelSpec> specs{ModelSpec::linear_regression(12), ModelSpec::logistic_regression(10, 4),
                                       ModelSpec::mlp(8, {16, 8}, 3)};
    double worst = 0.0;
    for (std::size_t n = 0; n < 1000; ++n) {
      const ModelSpec& spec = specs[n % specs.size()];
      std::vector<double> w(param_count(spec));
      for (double& v : w) v = 0.5 * rng.normal();
      const DataInstance x = random_instance(rng, spec);
      const std::uint64_t seed = rng.next_u64();
      const double eps = std::pow(10.0, -4.0 + 3.0 * rng.uniform());
      const double two = zoo::scalar_gradient_two_point(spec, w, x, seed, eps);
      const double plus = zoo::scalar_gradient_one_point(spec, w, x, seed, eps, +1);
      const double minus = zoo::scalar_gradient_one_point(spec, w, x, seed, eps, -1);
      worst = std::max(worst, std::abs(two - 0.5 * (plus - minus)) / (1.0 + std::abs(two)));
    }
    return Outcome{worst <= 1e-12, "1000 tuples, max |diff|/(1+|v|) = " + fmt(worst) + " (bound 1e-12)"};
  });

  report(3, "replay and one-pass reconstruction agree", [] {
    const std::size_t d = 1000;
    const double eta = 1e-3;
    double worst = 0.0;
    for (std::uint64_t trial = 0; trial < 20; ++trial) {
      Rng rng(derive_seed(77, {trial}));
      const SeedPool pool = init_pool(rng.next_u64(), 512);
      ParamVector w0(d);
      for (double& v : w0.values()) v = rng.normal();
      GradHistory history(10000);
      for (HistoryEntry& e : history) e = {pool.seed(rng.uniform_index(512)), 2.0 * rng.normal()};
      ParamVector replay = w0;
      for (const HistoryEntry& e : history) zoo::step_update(replay.values(), e.seed, e.grad, eta);
      GradAccumulator acc(512);
      accumulate(acc, history, 1.0, pool);
      const ParamVector rebuilt = reconstruct_model(w0, pool, acc, eta);
      double diff = 0.0;
      for (std::size_t i = 0; i < d; ++i) diff = std::max(diff, std::abs(replay[i] - rebuilt[i]));
      worst = std::max(worst, diff / (1.0 + replay.max_abs()));
    }
    return Outcome{worst <= 1e-9, "20 trials, max inf-norm gap/(1+|w|inf) = " + fmt(worst) + " (bound 1e-9)"};
  });

  report(4, "sync cost stays bounded by K", [] {
    const std::size_t k = 64;
    const data::Dataset data = data::generate_synthetic({600, 3, 9, 6.0, 11});
    const auto labels = data::class_labels(data.train);
    const auto assignment = data::dirichlet_partition(labels, {10, 0.5, 11});
    const auto parts = data::split_by_client(data.train, assignment, 10);
    std::vector<ClientState> clients;
    std::vector<std::size_t> sizes;
    for (const auto& p : parts) sizes.push_back(p.size());
    const auto weights = compute_aggregate_weights(sizes);
    for (std::size_t i = 0; i < parts.size(); ++i) clients.push_back({i, parts[i], weights[i]});
    FLConfig cfg;
    cfg.num_clients = 10;
    cfg.participation_ratio = 0.3;
    cfg.tau = 20;
    cfg.rounds = 101;
    cfg.k = k;
    cfg.zoo = {1e-3, 1e-3};
    cfg.master_seed = 5;
    const ModelSpec spec = ModelSpec::logistic_regression(9, 3);
    Federation fed(spec, ParamVector(param_count(spec)), cfg, clients, data.test);

    bool ok = true;
    std::ostringstream d;
    for (std::size_t round = 1; round <= 101; ++round) {
      // Round r + 1 starts after r rounds of history.
      const RoundReport rep = fed.run_round(round);
      const std::size_t r = round - 1;
      if (r == 1 || r == 10 || r == 100) {
        ReconstructStats st;
        reconstruct_model(fed.initial_model(), fed.pool(), fed.accumulator(), cfg.zoo.eta, &st);
        const std::size_t replay = harness::replay_cost_model({cfg.clients_per_round(), cfg.tau, r, std::nullopt});
        ok = ok && rep.sync_steps <= k && st.applications <= k;
        d << "r=" << r << " client " << rep.sync_steps << " / replay " << replay << "; ";
      }
    }
    const std::size_t infinite = harness::replay_cost_model({50, 200, 30, std::nullopt});
    ok = ok && infinite == 300000;
    d << "cost model (50,200,30) = " << infinite;
    return Outcome{ok, d.str()};
  });

  report(5, "convergence at desk scale", [] {
    harness::ExperimentConfig cfg = harness::default_config();
    cfg.repetitions = 5;
    cfg.mode = harness::Mode::FedKSeed;
    convergence_dir = fresh_dir("convergence_a");
    cfg.output_dir = convergence_dir;
    const harness::ExperimentOutput out = harness::run_experiment(cfg);
    int converged = 0;
    std::vector<double> finals;
    std::ostringstream d;
    for (const auto& run : out.runs) {
      const double ratio = run.final_loss() / run.initial_loss;
      converged += ratio <= 0.6;
      finals.push_back(run.final_loss());
      d << fmt(ratio) << ' ';
    }
    const std::vector<double> zo = final_losses(cfg, harness::Mode::FedZo, cfg.fl.k);
    const double a = stats::mean(finals);
    const double b = stats::mean(zo);
    const double rel = std::abs(a - b) / std::min(a, b);
    d << "| final/initial ratios; reps <= 0.6: " << converged << "/5; mean FedKSeed " << fmt(a) << " vs FedZO "
      << fmt(b) << " (rel gap " << fmt(rel) << ", bound 0.1)";
    return Outcome{converged >= 4 && rel <= 0.1, d.str()};
  });

  report(6, "seed-count trend", [] {
    harness::ExperimentConfig cfg = harness::default_config();
    cfg.repetitions = 5;
    std::vector<std::vector<double>> losses;
    std::ostringstream d;
    for (std::size_t k : {8, 64, 512, 4096}) {
      losses.push_back(final_losses(cfg, harness::Mode::FedKSeed, k));
      d << "K=" << k << " mean " << fmt(stats::mean(losses.back())) << "; ";
    }
    const stats::PairedTest low = stats::paired_t_test(losses[2], losses[0]);
    const double m512 = stats::mean(losses[2]);
    const double m4096 = stats::mean(losses[3]);
    d << "K=512 < K=8 one-sided p = " << fmt(low.p_value_less) << "; K=4096/K=512 = " << fmt(m4096 / m512);
    return Outcome{low.p_value_less < 0.05 && m4096 >= 0.95 * m512, d.str()};
  });

  report(7, "Pro mode at K=256", [] {
    harness::ExperimentConfig cfg = harness::default_config();
    cfg.repetitions = 10;
    const std::vector<double> plain = final_losses(cfg, harness::Mode::FedKSeed, 256);
    const std::vector<double> pro = final_losses(cfg, harness::Mode::FedKSeedPro, 256);
    const stats::PairedTest t = stats::paired_t_test(pro, plain);
    const bool ordered = stats::mean(pro) <= stats::mean(plain) && t.p_value_less < 0.10;

    // Probability invariants on the state of a Pro run.
    const harness::Scenario s = harness::build_scenario(cfg, 0);
    FLConfig fl = cfg.fl;
    fl.k = 256;
    fl.pro_mode = true;
    Federation fed(cfg.model, s.w0, fl, s.clients, s.test_set);
    fed.run();
    const GradAccumulator& acc = fed.accumulator();
    const SeedProbabilities p = update_probabilities(acc);
    auto score = [&](std::size_t j) {
      return acc.sample_counts[j] == 0 ? 0.0 : acc.abs_sums[j] / static_cast<double>(acc.sample_counts[j]);
    };
    bool monotone = true;
    for (std::size_t a = 0; a < p.size(); ++a) {
      for (std::size_t b = 0; b < p.size(); ++b) {
        if (score(a) < score(b) && p.p[a] > p.p[b]) monotone = false;
      }
    }
    const auto [lo, hi] = std::minmax_element(p.p.begin(), p.p.end());
    std::ostringstream d;
    d << "mean Pro " << fmt(stats::mean(pro)) << " vs plain " << fmt(stats::mean(plain)) << ", one-sided p = "
      << fmt(t.p_value_less) << " (level 0.10); p range [" << fmt(*lo) << ", " << fmt(*hi) << "], monotone "
      << (monotone ? "yes" : "no");
    return Outcome{ordered && !p.is_uniform() && monotone, d.str()};
  });

  report(8, "bounded scratch memory at d = 1e6", [] {
    const ModelSpec spec = ModelSpec::linear_regression(999999);
    const std::size_t d = param_count(spec);
    const std::size_t chunk = perturb::kDefaultChunkSize;
    Rng rng(3);
    std::vector<double> w(d);
    for (double& v : w) v = 1e-3 * rng.normal();
    const DataInstance x = random_instance(rng, spec);

    perturb::reset_scratch_peak();
    alloc_probe::arm(chunk * sizeof(double) + 1);
    const double g = zoo::scalar_gradient_two_point(spec, w, x, 1234, 1e-3);
    alloc_probe::disarm();
    const std::size_t est_scratch = perturb::scratch_stats().peak_elements;
    const std::size_t est_largest = alloc_probe::largest;
    const std::size_t est_big = alloc_probe::big_count;

    const SeedPool pool = init_pool(9, 32);
    std::vector<double> slots(32);
    for (double& v : slots) v = rng.normal();
    const ParamVector w0(std::move(w));
    perturb::reset_scratch_peak();
    alloc_probe::arm(chunk * sizeof(double) + 1);
    const ParamVector rebuilt = reconstruct_model(w0, pool, slots, 1e-3);
    alloc_probe::disarm();
    const std::size_t rec_scratch = perturb::scratch_stats().peak_elements;
    // The returned model itself is the only allocation allowed above a chunk.
    const std::size_t rec_big = alloc_probe::big_count;

    std::ostringstream det;
    det << "estimator: scratch peak " << est_scratch << " elements, largest allocation " << est_largest
        << " bytes; reconstruction: scratch peak " << rec_scratch << " elements, " << rec_big
        << " allocation(s) above a chunk (the result); g = " << fmt(g) << ", |w|inf = " << fmt(rebuilt.max_abs());
    const bool ok = est_scratch <= chunk && est_big == 0 && rec_scratch <= chunk && rec_big <= 1;
    return Outcome{ok, det.str()};
  });

  report(9, "deterministic metrics", [] {
    if (convergence_dir.empty()) return Outcome{false, "criterion 5 produced no runs"};
    harness::ExperimentConfig cfg = harness::default_config();
    cfg.repetitions = 5;
    cfg.mode = harness::Mode::FedKSeed;
    cfg.output_dir = fresh_dir("convergence_b");
    const harness::ExperimentOutput out = harness::run_experiment(cfg);
    bool same = !out.files.empty();
    for (const auto& f : out.files) {
      same = same && csv_without_wall(f) == csv_without_wall(convergence_dir / f.filename());
    }
    fs::remove_all(cfg.output_dir);
    fs::remove_all(convergence_dir);
    return Outcome{same, std::to_string(out.files.size()) + " CSVs compared excluding wall_ms"};
  });

  std::printf("%d criterion(s) failed\n", failures);
  return failures;
}
