#include "fedkseed/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <string>

#include "fedkseed/error.hpp"
#include "fedkseed/rng.hpp"

namespace fedkseed::data {
namespace {

std::vector<std::vector<double>> class_means(const SynthSpec& spec, Rng& rng) {
  const double radius = spec.class_separation / std::sqrt(2.0);
  std::vector<std::vector<double>> means;
  means.reserve(spec.n_classes);
  const bool orthogonal = spec.n_classes <= spec.input_dim;
  while (means.size() < spec.n_classes) {
    std::vector<double> v(spec.input_dim);
    for (double& x : v) x = rng.normal();
    if (orthogonal) {
      for (const auto& m : means) {
        double dot = 0.0;
        for (std::size_t i = 0; i < v.size(); ++i) dot += v[i] * m[i];
        dot /= radius * radius;
        for (std::size_t i = 0; i < v.size(); ++i) v[i] -= dot * m[i];
      }
    }
    double norm = 0.0;
    for (double x : v) norm += x * x;
    norm = std::sqrt(norm);
    if (norm < 1e-8) continue;
    for (double& x : v) x *= radius / norm;
    means.push_back(std::move(v));
  }
  return means;
}

std::vector<std::size_t> draw_assignment(std::span<const std::size_t> labels,
                                         std::size_t n_classes, const PartitionSpec& spec,
                                         Rng& rng) {
  const std::size_t n = spec.num_clients;
  std::vector<std::vector<double>> cumulative(n_classes, std::vector<double>(n));
  std::vector<double> log_g(n);
  for (std::size_t c = 0; c < n_classes; ++c) {
    for (double& g : log_g) g = rng.log_gamma_variate(spec.alpha);
    const double m = *std::max_element(log_g.begin(), log_g.end());
    double running = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      running += std::exp(log_g[k] - m);
      cumulative[c][k] = running;
    }
  }
  std::vector<std::size_t> assignment(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto& cum = cumulative[labels[i]];
    const double u = rng.uniform() * cum.back();
    auto it = std::upper_bound(cum.begin(), cum.end(), u);
    if (it == cum.end()) --it;
    assignment[i] = static_cast<std::size_t>(it - cum.begin());
  }
  return assignment;
}

std::vector<std::size_t> client_sizes(std::span<const std::size_t> assignment, std::size_t n) {
  std::vector<std::size_t> sizes(n, 0);
  for (std::size_t a : assignment) ++sizes[a];
  return sizes;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  return cells;
}

}  // namespace

void SynthSpec::validate() const {
  if (n_classes < 2) throw ConfigError("synthetic data needs at least 2 classes");
  if (input_dim == 0) throw ConfigError("synthetic data needs input_dim >= 1");
  if (n_instances < 10 * n_classes) throw ConfigError("n_instances must be >= 10 * n_classes");
  if (!(class_separation > 0.0) || !std::isfinite(class_separation)) {
    throw ConfigError("class_separation must be positive");
  }
}

Dataset generate_synthetic(const SynthSpec& spec) {
  spec.validate();
  Rng rng(derive_seed(spec.seed, {0xda7aU}));
  const auto means = class_means(spec, rng);
  Dataset out;
  for (std::size_t i = 0; i < spec.n_instances; ++i) {
    const std::size_t label = rng.uniform_index(spec.n_classes);
    DataInstance x;
    x.features.resize(spec.input_dim);
    for (std::size_t k = 0; k < spec.input_dim; ++k) x.features[k] = means[label][k] + rng.normal();
    x.label = static_cast<double>(label);
    (i % 10 == 9 ? out.test : out.train).push_back(std::move(x));
  }
  return out;
}

void PartitionSpec::validate() const {
  if (num_clients == 0) throw ConfigError("partition needs at least one client");
  if (!(alpha > 0.0) || !std::isfinite(alpha)) throw ConfigError("Dirichlet alpha must be > 0");
}

std::vector<std::size_t> dirichlet_partition(std::span<const std::size_t> labels,
                                             const PartitionSpec& spec) {
  spec.validate();
  if (spec.num_clients > labels.size()) {
    throw ConfigError("more clients (" + std::to_string(spec.num_clients) + ") than instances (" +
                      std::to_string(labels.size()) + ")");
  }
  const std::size_t n = spec.num_clients;
  if (n == 1) return std::vector<std::size_t>(labels.size(), 0);
  const std::size_t n_classes = *std::max_element(labels.begin(), labels.end()) + 1;

  Rng rng(derive_seed(spec.seed, {0xd1c7U}));
  std::vector<std::size_t> assignment;
  for (std::size_t attempt = 0; attempt <= spec.max_retries; ++attempt) {
    assignment = draw_assignment(labels, n_classes, spec, rng);
    const auto sizes = client_sizes(assignment, n);
    if (std::find(sizes.begin(), sizes.end(), 0) == sizes.end()) return assignment;
  }

  auto sizes = client_sizes(assignment, n);
  for (std::size_t empty = 0; empty < n; ++empty) {
    if (sizes[empty] != 0) continue;
    const auto donor = static_cast<std::size_t>(std::max_element(sizes.begin(), sizes.end()) - sizes.begin());
    // Move the donor's last instance.
    for (std::size_t i = assignment.size(); i-- > 0;) {
      if (assignment[i] == donor) {
        assignment[i] = empty;
        break;
      }
    }
    --sizes[donor];
    ++sizes[empty];
  }
  return assignment;
}

double heterogeneity_index(std::span<const std::size_t> assignment,
                           std::span<const std::size_t> labels) {
  if (assignment.size() != labels.size() || labels.empty()) {
    throw ContractViolation("heterogeneity_index: assignment/labels length mismatch");
  }
  const std::size_t n = *std::max_element(assignment.begin(), assignment.end()) + 1;
  const std::size_t c = *std::max_element(labels.begin(), labels.end()) + 1;
  std::vector<double> global(c, 0.0);
  std::vector<std::vector<double>> local(n, std::vector<double>(c, 0.0));
  std::vector<double> totals(n, 0.0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    global[labels[i]] += 1.0;
    local[assignment[i]][labels[i]] += 1.0;
    totals[assignment[i]] += 1.0;
  }
  for (double& g : global) g /= static_cast<double>(labels.size());
  double sum = 0.0;
  std::size_t clients = 0;
  for (std::size_t k = 0; k < n; ++k) {
    if (totals[k] == 0.0) continue;
    double tv = 0.0;
    for (std::size_t j = 0; j < c; ++j) tv += std::abs(local[k][j] / totals[k] - global[j]);
    sum += 0.5 * tv;
    ++clients;
  }
  return sum / static_cast<double>(clients);
}

std::vector<std::size_t> class_labels(std::span<const DataInstance> data) {
  std::vector<std::size_t> labels(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    const double l = data[i].label;
    if (!(l >= 0.0) || l != std::floor(l)) throw ContractViolation("non-integer class label");
    labels[i] = static_cast<std::size_t>(l);
  }
  return labels;
}

std::vector<std::vector<DataInstance>> split_by_client(std::span<const DataInstance> data,
                                                       std::span<const std::size_t> assignment,
                                                       std::size_t num_clients) {
  if (data.size() != assignment.size()) throw ContractViolation("split_by_client: length mismatch");
  std::vector<std::vector<DataInstance>> clients(num_clients);
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (assignment[i] >= num_clients) throw ContractViolation("client id out of range");
    clients[assignment[i]].push_back(data[i]);
  }
  return clients;
}

void apply_client_shift(std::vector<std::vector<DataInstance>>& clients, double shift_scale,
                        std::uint64_t seed) {
  for (std::size_t k = 0; k < clients.size(); ++k) {
    if (clients[k].empty()) continue;
    Rng rng(derive_seed(seed, {0x5b1f7U, k}));
    std::vector<double> shift(clients[k].front().features.size());
    for (double& s : shift) s = shift_scale * rng.normal();
    for (DataInstance& x : clients[k]) {
      for (std::size_t i = 0; i < shift.size(); ++i) x.features[i] += shift[i];
    }
  }
}

void save_dataset_csv(const std::filesystem::path& path, std::span<const DataInstance> data) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  const std::size_t dim = data.empty() ? 0 : data.front().features.size();
  for (std::size_t k = 0; k < dim; ++k) out << "feature_" << k << ',';
  out << "label\n" << std::setprecision(std::numeric_limits<double>::max_digits10);
  for (const DataInstance& x : data) {
    for (double v : x.features) out << v << ',';
    out << x.label << '\n';
  }
}

std::vector<DataInstance> load_dataset_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw ConfigError(path.string() + ": missing header");
  const auto header = split_csv_line(line);
  if (header.empty() || header.back() != "label") throw ConfigError(path.string() + ": bad header");
  for (std::size_t k = 0; k + 1 < header.size(); ++k) {
    if (header[k] != "feature_" + std::to_string(k)) throw ConfigError(path.string() + ": bad header");
  }
  std::vector<DataInstance> data;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != header.size()) throw ConfigError(path.string() + ": ragged row");
    DataInstance x;
    for (std::size_t k = 0; k + 1 < cells.size(); ++k) x.features.push_back(std::stod(cells[k]));
    x.label = std::stod(cells.back());
    data.push_back(std::move(x));
  }
  return data;
}

void save_partition_csv(const std::filesystem::path& path,
                        std::span<const std::size_t> assignment) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << "instance_index,client_id\n";
  for (std::size_t i = 0; i < assignment.size(); ++i) out << i << ',' << assignment[i] << '\n';
}

std::vector<std::size_t> load_partition_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != "instance_index,client_id") {
    throw ConfigError(path.string() + ": bad header");
  }
  std::vector<std::size_t> assignment;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != 2 || std::stoull(cells[0]) != assignment.size()) {
      throw ConfigError(path.string() + ": bad row '" + line + "'");
    }
    assignment.push_back(std::stoull(cells[1]));
  }
  return assignment;
}

}  // namespace fedkseed::data
