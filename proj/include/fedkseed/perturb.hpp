#pragma once

// Seeded standard-normal perturbations z ~ N(0, I_d).
//
// z[i] is a pure function of (seed, i): element pair p = i / 2 is produced by
// Box-Muller from the splitmix64 outputs at counters 2p and 2p + 1 of a stream
// keyed by the seed. Any window of z can be generated in O(window) without
// touching the rest, and no caller ever needs a length-d buffer.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace fedkseed::perturb {

inline constexpr std::size_t kDefaultChunkSize = 65536;
inline constexpr std::size_t kMaxChunkSize = 65536;

// z[index] for the given seed.
double normal_at(std::uint64_t seed, std::size_t index) noexcept;

// Writes z[offset .. offset + out.size()) into out. No length limit.
void fill_normals(std::uint64_t seed, std::size_t offset, std::span<double> out) noexcept;

// Returns z[offset .. offset + len). Requires 0 < len <= kMaxChunkSize.
std::vector<double> perturbation_chunk(std::uint64_t seed, std::size_t offset, std::size_t len);

// w <- w + scale * z(seed), generated chunk by chunk.
void add_scaled_perturbation(std::span<double> w, std::uint64_t seed, double scale,
                             std::size_t chunk_size = kDefaultChunkSize);

// ||z(seed)[0..d)||^2 without materializing z.
double perturbation_norm_squared(std::uint64_t seed, std::size_t d,
                                 std::size_t chunk_size = kDefaultChunkSize);

// Live and peak element counts of perturbation scratch buffers, process-wide.
struct ScratchStats {
  std::size_t live_elements = 0;
  std::size_t peak_elements = 0;
};

ScratchStats scratch_stats() noexcept;
// Resets the peak to the current live count.
void reset_scratch_peak() noexcept;

// Heap buffer whose size is reported to scratch_stats().
class ScratchBuffer {
 public:
  explicit ScratchBuffer(std::size_t elements);
  ~ScratchBuffer();
  ScratchBuffer(const ScratchBuffer&) = delete;
  ScratchBuffer& operator=(const ScratchBuffer&) = delete;

  std::span<double> span() noexcept { return values_; }
  std::size_t size() const noexcept { return values_.size(); }

 private:
  std::vector<double> values_;
};

// Sequential window over the virtual vector z(seed)[0..length).
class PerturbStream {
 public:
  PerturbStream(std::uint64_t seed, std::size_t length,
                std::size_t chunk_size = kDefaultChunkSize);

  // Next window of at most max_len elements; valid until the next call.
  std::span<const double> next(std::size_t max_len);

  std::uint64_t seed() const noexcept { return seed_; }
  std::size_t cursor() const noexcept { return cursor_; }
  std::size_t remaining() const noexcept { return length_ - cursor_; }

 private:
  std::uint64_t seed_;
  std::size_t length_;
  std::size_t cursor_ = 0;
  ScratchBuffer buffer_;
};

// Sequential reader over w + scale * z(seed) that never modifies w.
//
// Element values are computed exactly as add_scaled_perturbation would
// write them, so a loss evaluated through a reader equals the loss of the
// in-place perturbed vector bit for bit. With no seed the reader hands out
// views into w directly.
class ParamSource {
 public:
  explicit ParamSource(std::span<const double> w);
  ParamSource(std::span<const double> w, std::uint64_t seed, double scale,
              std::size_t chunk_size = kDefaultChunkSize);

  // Next run of at most max_len parameters; valid until the next call.
  std::span<const double> next(std::size_t max_len);

  std::size_t size() const noexcept { return base_.size(); }
  std::size_t cursor() const noexcept { return cursor_; }
  std::size_t remaining() const noexcept { return base_.size() - cursor_; }

 private:
  std::span<const double> base_;
  std::uint64_t seed_ = 0;
  double scale_ = 0.0;
  bool perturbed_ = false;
  std::size_t cursor_ = 0;
  ScratchBuffer buffer_;
};

}  // namespace fedkseed::perturb
