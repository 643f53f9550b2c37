#include "fedkseed/perturb.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <string>

#include "fedkseed/error.hpp"
#include "fedkseed/rng.hpp"

namespace fedkseed::perturb {
namespace {

std::atomic<std::size_t> g_live{0};
std::atomic<std::size_t> g_peak{0};

constexpr std::uint64_t stream_key(std::uint64_t seed) noexcept { return mix64(seed + kGoldenGamma); }

constexpr std::uint64_t counter_bits(std::uint64_t key, std::uint64_t counter) noexcept {
  return mix64(key + (counter + 1) * kGoldenGamma);
}

inline void normal_pair(std::uint64_t key, std::size_t pair, double& z0, double& z1) noexcept {
  const auto c = static_cast<std::uint64_t>(pair) * 2;
  pmath::box_muller(counter_bits(key, c), counter_bits(key, c + 1), z0, z1);
}

}  // namespace

double normal_at(std::uint64_t seed, std::size_t index) noexcept {
  double z0 = 0.0;
  double z1 = 0.0;
  normal_pair(stream_key(seed), index / 2, z0, z1);
  return (index % 2 == 0) ? z0 : z1;
}

void fill_normals(std::uint64_t seed, std::size_t offset, std::span<double> out) noexcept {
  const std::uint64_t key = stream_key(seed);
  std::size_t i = 0;
  const std::size_t n = out.size();
  double z0 = 0.0;
  double z1 = 0.0;
  if (n > 0 && offset % 2 == 1) {
    normal_pair(key, offset / 2, z0, z1);
    out[0] = z1;
    i = 1;
  }
  for (; i + 1 < n; i += 2) {
    normal_pair(key, (offset + i) / 2, z0, z1);
    out[i] = z0;
    out[i + 1] = z1;
  }
  if (i < n) {
    normal_pair(key, (offset + i) / 2, z0, z1);
    out[i] = z0;
  }
}

std::vector<double> perturbation_chunk(std::uint64_t seed, std::size_t offset, std::size_t len) {
  if (len == 0 || len > kMaxChunkSize) {
    throw ContractViolation("perturbation_chunk: len must be in [1, " +
                            std::to_string(kMaxChunkSize) + "], got " + std::to_string(len));
  }
  if (offset > SIZE_MAX - len) throw ContractViolation("perturbation_chunk: offset overflow");
  std::vector<double> out(len);
  fill_normals(seed, offset, out);
  return out;
}

void add_scaled_perturbation(std::span<double> w, std::uint64_t seed, double scale,
                             std::size_t chunk_size) {
  if (!std::isfinite(scale)) throw ContractViolation("add_scaled_perturbation: non-finite scale");
  if (chunk_size == 0 || chunk_size > kMaxChunkSize) {
    throw ContractViolation("add_scaled_perturbation: invalid chunk size");
  }
  if (scale == 0.0 || w.empty()) return;
  ScratchBuffer buffer(std::min(chunk_size, w.size()));
  auto z = buffer.span();
  for (std::size_t offset = 0; offset < w.size(); offset += z.size()) {
    const std::size_t len = std::min(z.size(), w.size() - offset);
    fill_normals(seed, offset, z.first(len));
    double* dst = w.data() + offset;
    for (std::size_t k = 0; k < len; ++k) dst[k] = dst[k] + scale * z[k];
  }
}

double perturbation_norm_squared(std::uint64_t seed, std::size_t d, std::size_t chunk_size) {
  PerturbStream stream(seed, d, chunk_size);
  double sum = 0.0;
  while (stream.remaining() > 0) {
    for (double v : stream.next(stream.remaining())) sum += v * v;
  }
  return sum;
}

ScratchStats scratch_stats() noexcept { return {g_live.load(), g_peak.load()}; }

void reset_scratch_peak() noexcept { g_peak.store(g_live.load()); }

ScratchBuffer::ScratchBuffer(std::size_t elements) : values_(elements) {
  const std::size_t live = g_live.fetch_add(elements) + elements;
  std::size_t peak = g_peak.load();
  while (live > peak && !g_peak.compare_exchange_weak(peak, live)) {
  }
}

ScratchBuffer::~ScratchBuffer() { g_live.fetch_sub(values_.size()); }

PerturbStream::PerturbStream(std::uint64_t seed, std::size_t length, std::size_t chunk_size)
    : seed_(seed), length_(length), buffer_(std::min(chunk_size, length)) {
  if (chunk_size == 0 || chunk_size > kMaxChunkSize) {
    throw ContractViolation("PerturbStream: invalid chunk size");
  }
}

std::span<const double> PerturbStream::next(std::size_t max_len) {
  const std::size_t len = std::min({max_len, buffer_.size(), remaining()});
  auto out = buffer_.span().first(len);
  fill_normals(seed_, cursor_, out);
  cursor_ += len;
  return out;
}

ParamSource::ParamSource(std::span<const double> w) : base_(w), buffer_(0) {}

ParamSource::ParamSource(std::span<const double> w, std::uint64_t seed, double scale,
                         std::size_t chunk_size)
    : base_(w),
      seed_(seed),
      scale_(scale),
      perturbed_(scale != 0.0),
      buffer_(scale != 0.0 ? std::min(chunk_size, w.size()) : 0) {
  if (!std::isfinite(scale)) throw ContractViolation("ParamSource: non-finite scale");
  if (chunk_size == 0 || chunk_size > kMaxChunkSize) {
    throw ContractViolation("ParamSource: invalid chunk size");
  }
}

std::span<const double> ParamSource::next(std::size_t max_len) {
  if (!perturbed_) {
    const std::size_t len = std::min(max_len, remaining());
    auto out = base_.subspan(cursor_, len);
    cursor_ += len;
    return out;
  }
  const std::size_t len = std::min({max_len, buffer_.size(), remaining()});
  auto out = buffer_.span().first(len);
  fill_normals(seed_, cursor_, out);
  const double* src = base_.data() + cursor_;
  for (std::size_t k = 0; k < len; ++k) out[k] = src[k] + scale_ * out[k];
  cursor_ += len;
  return out;
}

}  // namespace fedkseed::perturb
