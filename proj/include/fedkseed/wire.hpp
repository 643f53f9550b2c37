#pragma once

// Little-endian binary messages exchanged between server and clients.
//
//   downlink: [pool seed : u32][a_1 .. a_K : f32][p_1 .. p_K : f32, Pro only]
//   uplink:   ([seed : u32][grad : f32]) * tau
//
// No headers or framing: K and the mode are configuration known to both
// sides, so the encoded sizes are exactly 4 + 4K (+ 4K) and 8 * tau bytes.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace fedkseed::wire {

using Bytes = std::vector<std::uint8_t>;

struct DownlinkMsg {
  std::uint32_t master_seed = 0;
  std::vector<float> accumulator;
  std::optional<std::vector<float>> probabilities;

  bool operator==(const DownlinkMsg&) const = default;
};

struct UplinkEntry {
  std::uint32_t seed = 0;
  float grad = 0.0F;

  bool operator==(const UplinkEntry&) const = default;
};

struct UplinkMsg {
  std::vector<UplinkEntry> entries;

  bool operator==(const UplinkMsg&) const = default;
};

Bytes encode_downlink(const DownlinkMsg& msg);
DownlinkMsg decode_downlink(std::span<const std::uint8_t> bytes, std::size_t k, bool pro);

Bytes encode_uplink(const UplinkMsg& msg);
// Decodes a whole number of 8-byte entries.
UplinkMsg decode_uplink(std::span<const std::uint8_t> bytes);

// Full parameter vector as f32 (the baselines' model transfer).
Bytes encode_model(std::span<const double> w);
std::vector<double> decode_model(std::span<const std::uint8_t> bytes, std::size_t d);

struct RoundBytes {
  std::size_t down = 0;
  std::size_t up = 0;
  std::size_t total = 0;

  bool operator==(const RoundBytes&) const = default;
};

// Closed-form per-client, per-round traffic of the seed protocol.
RoundBytes round_bytes(std::size_t k, std::size_t tau, bool pro);

// Lower-case hex rendering, for golden fixtures.
std::string to_hex(std::span<const std::uint8_t> bytes);
Bytes from_hex(std::string_view hex);

}  // namespace fedkseed::wire
