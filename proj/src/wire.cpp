#include "fedkseed/wire.hpp"

#include <bit>
#include <cmath>
#include <string>
#include <string_view>

#include "fedkseed/error.hpp"

namespace fedkseed::wire {
namespace {

void put_u32(Bytes& out, std::uint32_t v) {
  for (int shift = 0; shift < 32; shift += 8) out.push_back(static_cast<std::uint8_t>(v >> shift));
}

void put_f32(Bytes& out, float v) {
  if (!std::isfinite(v)) throw ProtocolError("cannot encode a non-finite value");
  put_u32(out, std::bit_cast<std::uint32_t>(v));
}

std::uint32_t get_u32(std::span<const std::uint8_t> bytes, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes[at + i]) << (8 * i);
  return v;
}

float get_f32(std::span<const std::uint8_t> bytes, std::size_t at) {
  return std::bit_cast<float>(get_u32(bytes, at));
}

float narrow(double v) {
  const auto f = static_cast<float>(v);
  if (!std::isfinite(f)) throw ProtocolError("value not representable as a finite f32");
  return f;
}

}  // namespace

Bytes encode_downlink(const DownlinkMsg& msg) {
  const std::size_t k = msg.accumulator.size();
  if (k == 0) throw ProtocolError("downlink needs K >= 1");
  if (msg.probabilities && msg.probabilities->size() != k) {
    throw ProtocolError("downlink probabilities length != K");
  }
  Bytes out;
  out.reserve(4 + (msg.probabilities ? 8 : 4) * k);
  put_u32(out, msg.master_seed);
  for (float a : msg.accumulator) put_f32(out, a);
  if (msg.probabilities) {
    for (float p : *msg.probabilities) put_f32(out, p);
  }
  return out;
}

DownlinkMsg decode_downlink(std::span<const std::uint8_t> bytes, std::size_t k, bool pro) {
  if (k == 0) throw ProtocolError("downlink needs K >= 1");
  const std::size_t expected = 4 + (pro ? 8 : 4) * k;
  if (bytes.size() != expected) {
    throw ProtocolError("downlink length " + std::to_string(bytes.size()) + " != expected " +
                        std::to_string(expected));
  }
  DownlinkMsg msg;
  msg.master_seed = get_u32(bytes, 0);
  msg.accumulator.resize(k);
  for (std::size_t j = 0; j < k; ++j) msg.accumulator[j] = get_f32(bytes, 4 + 4 * j);
  if (pro) {
    msg.probabilities.emplace(k);
    for (std::size_t j = 0; j < k; ++j) (*msg.probabilities)[j] = get_f32(bytes, 4 + 4 * (k + j));
  }
  return msg;
}

Bytes encode_uplink(const UplinkMsg& msg) {
  if (msg.entries.empty()) throw ProtocolError("uplink needs at least one entry");
  Bytes out;
  out.reserve(8 * msg.entries.size());
  for (const UplinkEntry& e : msg.entries) {
    put_u32(out, e.seed);
    put_f32(out, e.grad);
  }
  return out;
}

UplinkMsg decode_uplink(std::span<const std::uint8_t> bytes) {
  if (bytes.empty() || bytes.size() % 8 != 0) {
    throw ProtocolError("uplink length " + std::to_string(bytes.size()) +
                        " is not a positive multiple of 8");
  }
  UplinkMsg msg;
  msg.entries.resize(bytes.size() / 8);
  for (std::size_t n = 0; n < msg.entries.size(); ++n) {
    msg.entries[n].seed = get_u32(bytes, 8 * n);
    msg.entries[n].grad = get_f32(bytes, 8 * n + 4);
  }
  return msg;
}

Bytes encode_model(std::span<const double> w) {
  Bytes out;
  out.reserve(4 * w.size());
  for (double v : w) put_f32(out, narrow(v));
  return out;
}

std::vector<double> decode_model(std::span<const std::uint8_t> bytes, std::size_t d) {
  if (bytes.size() != 4 * d) throw ProtocolError("model payload length mismatch");
  std::vector<double> w(d);
  for (std::size_t i = 0; i < d; ++i) w[i] = get_f32(bytes, 4 * i);
  return w;
}

RoundBytes round_bytes(std::size_t k, std::size_t tau, bool pro) {
  const std::size_t down = 4 + (pro ? 8 : 4) * k;
  const std::size_t up = 8 * tau;
  return {down, up, down + up};
}

std::string to_hex(std::span<const std::uint8_t> bytes) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out;
  out.reserve(2 * bytes.size());
  for (std::uint8_t b : bytes) {
    out.push_back(kDigits[b >> 4]);
    out.push_back(kDigits[b & 0xF]);
  }
  return out;
}

Bytes from_hex(std::string_view hex) {
  auto nibble = [](char c) -> int {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    return -1;
  };
  if (hex.size() % 2 != 0) throw ProtocolError("odd-length hex string");
  Bytes out(hex.size() / 2);
  for (std::size_t i = 0; i < out.size(); ++i) {
    const int hi = nibble(hex[2 * i]);
    const int lo = nibble(hex[2 * i + 1]);
    if (hi < 0 || lo < 0) throw ProtocolError("invalid hex digit");
    out[i] = static_cast<std::uint8_t>((hi << 4) | lo);
  }
  return out;
}

}  // namespace fedkseed::wire
