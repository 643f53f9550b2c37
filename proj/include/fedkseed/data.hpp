#pragma once

// Synthetic classification data and Dirichlet label-skew partitioning.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "fedkseed/model.hpp"

namespace fedkseed::data {

struct SynthSpec {
  std::size_t n_instances = 1000;
  std::size_t n_classes = 2;
  std::size_t input_dim = 2;
  double class_separation = 4.0;
  std::uint64_t seed = 0;

  void validate() const;
};

struct Dataset {
  std::vector<DataInstance> train;
  std::vector<DataInstance> test;
};

// Gaussian clusters (unit covariance) whose means are pairwise
// `class_separation` apart when n_classes <= input_dim (random unit
// directions otherwise). Labels are drawn uniformly; every tenth instance
// (index % 10 == 9) goes to the test split.
Dataset generate_synthetic(const SynthSpec& spec);

struct PartitionSpec {
  std::size_t num_clients = 1;
  double alpha = 0.5;
  std::uint64_t seed = 0;
  // Full redraws attempted before empty clients are patched.
  std::size_t max_retries = 16;

  void validate() const;
};

// Client id for each instance. Per class, proportions q ~ Dir(alpha * 1_N)
// and each instance of the class goes to client n with probability q_n.
// Empty clients are patched by moving one instance at a time from the
// currently largest client.
std::vector<std::size_t> dirichlet_partition(std::span<const std::size_t> labels,
                                             const PartitionSpec& spec);

// Mean total-variation distance between each client's label histogram and
// the global one. Clients without instances are skipped.
double heterogeneity_index(std::span<const std::size_t> assignment,
                           std::span<const std::size_t> labels);

std::vector<std::size_t> class_labels(std::span<const DataInstance> data);

// Splits instances into per-client datasets according to an assignment.
std::vector<std::vector<DataInstance>> split_by_client(std::span<const DataInstance> data,
                                                       std::span<const std::size_t> assignment,
                                                       std::size_t num_clients);

// Feature skew: adds a client-specific mean shift N(0, shift_scale^2 I)
// to every feature vector of that client.
void apply_client_shift(std::vector<std::vector<DataInstance>>& clients, double shift_scale,
                        std::uint64_t seed);

// CSV with header feature_0..feature_{k-1},label.
void save_dataset_csv(const std::filesystem::path& path, std::span<const DataInstance> data);
std::vector<DataInstance> load_dataset_csv(const std::filesystem::path& path);

// CSV with header instance_index,client_id.
void save_partition_csv(const std::filesystem::path& path,
                        std::span<const std::size_t> assignment);
std::vector<std::size_t> load_partition_csv(const std::filesystem::path& path);

}  // namespace fedkseed::data
