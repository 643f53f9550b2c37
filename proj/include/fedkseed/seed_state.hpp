#pragma once

// Shared protocol state: the K candidate seeds, the per-seed scalar-gradient
// accumulator, model reconstruction from it, history aggregation and the
// importance-weighted seed distribution.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <unordered_map>
#include <vector>

#include "fedkseed/model.hpp"
#include "fedkseed/rng.hpp"

namespace fedkseed {

// K distinct 32-bit candidate seeds, derived from a master seed.
class SeedPool {
 public:
  SeedPool() = default;

  std::uint64_t master_seed() const noexcept { return master_seed_; }
  std::size_t size() const noexcept { return seeds_.size(); }
  std::span<const std::uint32_t> seeds() const noexcept { return seeds_; }
  std::uint32_t seed(std::size_t slot) const { return seeds_.at(slot); }
  // Slot of a seed, or nullopt if the seed is not a candidate.
  std::optional<std::size_t> slot_of(std::uint32_t seed) const;

  friend SeedPool init_pool(std::uint64_t master_seed, std::uint64_t k);

 private:
  std::uint64_t master_seed_ = 0;
  std::vector<std::uint32_t> seeds_;
  std::unordered_map<std::uint32_t, std::size_t> slot_by_seed_;
};

// Deterministic pool of K unique seeds drawn from [0, 2^32).
// Throws ConfigError for K = 0 or K > 2^32.
SeedPool init_pool(std::uint64_t master_seed, std::uint64_t k);

// Per-slot running sums a_j plus the |g| statistics that feed the seed
// probabilities.
struct GradAccumulator {
  std::vector<double> slots;
  std::vector<std::uint64_t> sample_counts;
  std::vector<double> abs_sums;

  GradAccumulator() = default;
  explicit GradAccumulator(std::size_t k) : slots(k, 0.0), sample_counts(k, 0), abs_sums(k, 0.0) {}

  std::size_t size() const noexcept { return slots.size(); }
  std::size_t nonzero_slots() const noexcept;
  // Clears the |g| statistics but keeps the slots.
  void reset_statistics();
};

struct SeedProbabilities {
  std::vector<double> p;

  static SeedProbabilities uniform(std::size_t k);
  std::size_t size() const noexcept { return p.size(); }
  bool is_uniform() const noexcept;
};

struct HistoryEntry {
  std::uint32_t seed = 0;
  double grad = 0.0;

  bool operator==(const HistoryEntry&) const = default;
};

// Ordered <seed, scalar gradient> pairs of one client round.
using GradHistory = std::vector<HistoryEntry>;

struct ReconstructStats {
  // Number of add_scaled_perturbation applications performed.
  std::size_t applications = 0;
};

// w0 + sum_j coefficients[j] * z(seed_j), skipping zero coefficients.
ParamVector reconstruct_from_coefficients(const ParamVector& w0, const SeedPool& pool,
                                          std::span<const double> coefficients,
                                          ReconstructStats* stats = nullptr);

// w0 - eta * sum_j a_j * z(seed_j).
ParamVector reconstruct_model(const ParamVector& w0, const SeedPool& pool,
                              std::span<const double> slots, double eta,
                              ReconstructStats* stats = nullptr);
ParamVector reconstruct_model(const ParamVector& w0, const SeedPool& pool,
                              const GradAccumulator& acc, double eta,
                              ReconstructStats* stats = nullptr);

// a_j += weight * g for every (s_j, g) in the history. Throws ProtocolError
// for a seed outside the pool; the accumulator is left untouched then.
void accumulate(GradAccumulator& acc, const GradHistory& history, double weight,
                const SeedPool& pool);

// Softmax of the min-max normalized mean |g| per slot. Slots never sampled
// score 0; a degenerate range gives the uniform distribution.
SeedProbabilities update_probabilities(const GradAccumulator& acc);

struct SeedDraw {
  std::uint32_t seed = 0;
  std::size_t slot = 0;
};

// Inverse-CDF sampler over a fixed distribution.
class SeedSampler {
 public:
  SeedSampler(const SeedPool& pool, std::span<const double> p);
  SeedDraw sample(Rng& rng) const;

 private:
  const SeedPool* pool_;
  std::vector<double> cumulative_;
};

SeedDraw sample_seed(const SeedPool& pool, const SeedProbabilities& p, Rng& rng);

// Coordinates of the global model in the span of the K perturbations:
// G_j = -eta * a_j.
std::vector<double> subspace_coefficients(const GradAccumulator& acc, double eta);

}  // namespace fedkseed
