#include "fedkseed/seed_state.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <unordered_set>

#include "fedkseed/error.hpp"
#include "fedkseed/perturb.hpp"

namespace fedkseed {

std::optional<std::size_t> SeedPool::slot_of(std::uint32_t seed) const {
  auto it = slot_by_seed_.find(seed);
  if (it == slot_by_seed_.end()) return std::nullopt;
  return it->second;
}

SeedPool init_pool(std::uint64_t master_seed, std::uint64_t k) {
  constexpr std::uint64_t kSeedSpace = 1ULL << 32;
  if (k == 0) throw ConfigError("seed pool needs K >= 1");
  if (k > kSeedSpace) throw ConfigError("cannot draw " + std::to_string(k) + " unique 32-bit seeds");

  SeedPool pool;
  pool.master_seed_ = master_seed;
  pool.seeds_.reserve(k);
  pool.slot_by_seed_.reserve(k);
  Rng rng(derive_seed(master_seed, {0x5eedU}));
  while (pool.seeds_.size() < k) {
    const std::uint32_t s = rng.next_u32();
    if (pool.slot_by_seed_.emplace(s, pool.seeds_.size()).second) pool.seeds_.push_back(s);
  }
  return pool;
}

std::size_t GradAccumulator::nonzero_slots() const noexcept {
  return static_cast<std::size_t>(std::count_if(slots.begin(), slots.end(), [](double a) { return a != 0.0; }));
}

void GradAccumulator::reset_statistics() {
  std::fill(sample_counts.begin(), sample_counts.end(), 0);
  std::fill(abs_sums.begin(), abs_sums.end(), 0.0);
}

SeedProbabilities SeedProbabilities::uniform(std::size_t k) {
  return {std::vector<double>(k, 1.0 / static_cast<double>(k))};
}

bool SeedProbabilities::is_uniform() const noexcept {
  return std::all_of(p.begin(), p.end(), [&](double v) { return v == p.front(); });
}

ParamVector reconstruct_from_coefficients(const ParamVector& w0, const SeedPool& pool,
                                          std::span<const double> coefficients,
                                          ReconstructStats* stats) {
  if (coefficients.size() != pool.size()) {
    throw ContractViolation("coefficient count " + std::to_string(coefficients.size()) +
                            " != pool size " + std::to_string(pool.size()));
  }
  ParamVector w = w0;
  std::size_t applications = 0;
  for (std::size_t j = 0; j < coefficients.size(); ++j) {
    if (coefficients[j] == 0.0) continue;
    perturb::add_scaled_perturbation(w.values(), pool.seed(j), coefficients[j]);
    ++applications;
  }
  if (stats != nullptr) stats->applications = applications;
  return w;
}

ParamVector reconstruct_model(const ParamVector& w0, const SeedPool& pool,
                              std::span<const double> slots, double eta,
                              ReconstructStats* stats) {
  std::vector<double> coefficients(slots.size());
  for (std::size_t j = 0; j < slots.size(); ++j) coefficients[j] = -eta * slots[j];
  return reconstruct_from_coefficients(w0, pool, coefficients, stats);
}

ParamVector reconstruct_model(const ParamVector& w0, const SeedPool& pool,
                              const GradAccumulator& acc, double eta, ReconstructStats* stats) {
  return reconstruct_model(w0, pool, acc.slots, eta, stats);
}

void accumulate(GradAccumulator& acc, const GradHistory& history, double weight,
                const SeedPool& pool) {
  if (acc.size() != pool.size()) throw ContractViolation("accumulator/pool size mismatch");
  if (!(weight >= 0.0 && weight <= 1.0)) throw ContractViolation("aggregate weight outside [0, 1]");
  std::vector<std::size_t> slots;
  slots.reserve(history.size());
  for (const HistoryEntry& e : history) {
    auto slot = pool.slot_of(e.seed);
    if (!slot) throw ProtocolError("history references unknown seed " + std::to_string(e.seed));
    if (!std::isfinite(e.grad)) throw ProtocolError("history contains a non-finite gradient");
    slots.push_back(*slot);
  }
  for (std::size_t n = 0; n < history.size(); ++n) {
    const std::size_t j = slots[n];
    acc.slots[j] += weight * history[n].grad;
    acc.sample_counts[j] += 1;
    acc.abs_sums[j] += std::abs(history[n].grad);
  }
}

SeedProbabilities update_probabilities(const GradAccumulator& acc) {
  const std::size_t k = acc.size();
  if (k == 0) return {};
  std::vector<double> psi(k, 0.0);
  for (std::size_t j = 0; j < k; ++j) {
    if (acc.sample_counts[j] > 0) psi[j] = acc.abs_sums[j] / static_cast<double>(acc.sample_counts[j]);
  }
  const auto [lo_it, hi_it] = std::minmax_element(psi.begin(), psi.end());
  const double lo = *lo_it;
  const double range = *hi_it - lo;
  if (!(range > 0.0)) return SeedProbabilities::uniform(k);

  // Normalized scores lie in [0, 1], so exp cannot overflow.
  SeedProbabilities out{std::vector<double>(k)};
  double total = 0.0;
  for (std::size_t j = 0; j < k; ++j) {
    out.p[j] = std::exp((psi[j] - lo) / range);
    total += out.p[j];
  }
  for (double& v : out.p) v /= total;
  return out;
}

SeedSampler::SeedSampler(const SeedPool& pool, std::span<const double> p)
    : pool_(&pool), cumulative_(p.size()) {
  if (p.size() != pool.size()) throw ContractViolation("probability/pool size mismatch");
  double running = 0.0;
  for (std::size_t j = 0; j < p.size(); ++j) {
    if (!(p[j] >= 0.0) || !std::isfinite(p[j])) throw ContractViolation("invalid seed probability");
    running += p[j];
    cumulative_[j] = running;
  }
  if (!(running > 0.0)) throw ContractViolation("seed probabilities sum to zero");
}

SeedDraw SeedSampler::sample(Rng& rng) const {
  const double u = rng.uniform() * cumulative_.back();
  auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), u);
  if (it == cumulative_.end()) --it;
  const auto slot = static_cast<std::size_t>(it - cumulative_.begin());
  return {pool_->seed(slot), slot};
}

SeedDraw sample_seed(const SeedPool& pool, const SeedProbabilities& p, Rng& rng) {
  return SeedSampler(pool, p.p).sample(rng);
}

std::vector<double> subspace_coefficients(const GradAccumulator& acc, double eta) {
  std::vector<double> g(acc.size());
  for (std::size_t j = 0; j < acc.size(); ++j) g[j] = -eta * acc.slots[j];
  return g;
}

}  // namespace fedkseed
