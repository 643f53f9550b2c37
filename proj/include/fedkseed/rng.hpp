#pragma once

// Portable random-number utilities.
//
// Everything here is built from IEEE-754 +, -, *, / and sqrt (all correctly
// rounded) plus frexp, so results are bit-identical on every conforming
// platform as long as floating-point contraction is disabled
// (-ffp-contract=off, set on the fedkseed target). The standard library's
// distributions are deliberately avoided: their algorithms are
// implementation-defined.

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <random>

namespace fedkseed {

inline constexpr std::uint64_t kGoldenGamma = 0x9E3779B97F4A7C15ULL;

// splitmix64 output finalizer (a bijective 64-bit mixer).
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

// Derives an independent stream seed from a base seed and a list of tags
// (round index, client id, repetition, ...).
constexpr std::uint64_t derive_seed(std::uint64_t base,
                                    std::initializer_list<std::uint64_t> tags) noexcept {
  std::uint64_t h = mix64(base + kGoldenGamma);
  for (std::uint64_t t : tags) h = mix64(h ^ mix64(t + kGoldenGamma));
  return h;
}

// 53-bit uniform in [0, 1).
constexpr double bits_to_unit(std::uint64_t bits) noexcept {
  return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

// 53-bit uniform in (0, 1]; safe as a log argument.
constexpr double bits_to_unit_open0(std::uint64_t bits) noexcept {
  return static_cast<double>((bits >> 11) + 1) * 0x1.0p-53;
}

namespace pmath {

inline constexpr double kLn2Hi = 6.93147180369123816490e-01;
inline constexpr double kLn2Lo = 1.90821492927058770002e-10;
inline constexpr double kSqrtHalf = 0.70710678118654752440;
inline constexpr double kHalfPi = 1.57079632679489661923;

// Natural logarithm for finite x > 0, accurate to a few ulp.
inline double log(double x) noexcept {
  int e = 0;
  double m = std::frexp(x, &e);  // x = m * 2^e, m in [0.5, 1)
  if (m < kSqrtHalf) {
    m *= 2.0;
    --e;
  }
  // log m = 2 atanh(f), f = (m-1)/(m+1), |f| <= 0.1716
  const double f = (m - 1.0) / (m + 1.0);
  const double s = f * f;
  double p = 1.0 / 23.0;
  p = 1.0 / 21.0 + s * p;
  p = 1.0 / 19.0 + s * p;
  p = 1.0 / 17.0 + s * p;
  p = 1.0 / 15.0 + s * p;
  p = 1.0 / 13.0 + s * p;
  p = 1.0 / 11.0 + s * p;
  p = 1.0 / 9.0 + s * p;
  p = 1.0 / 7.0 + s * p;
  p = 1.0 / 5.0 + s * p;
  p = 1.0 / 3.0 + s * p;
  const double log_m = 2.0 * f + 2.0 * f * (s * p);
  const double de = static_cast<double>(e);
  return de * kLn2Hi + (de * kLn2Lo + log_m);
}

// sin and cos of the angle 2*pi*turn for turn in [0, 1).
inline void sincos_turn(double turn, double& sin_out, double& cos_out) noexcept {
  const double t = turn * 4.0;
  const int quadrant = static_cast<int>(t) & 3;
  double r = t - static_cast<double>(static_cast<int>(t));
  const bool swap = r > 0.5;
  if (swap) r = 1.0 - r;
  const double x = r * kHalfPi;  // [0, pi/4]
  const double x2 = x * x;

  double ps = -1.0 / 121645100408832000.0;  // -1/19!
  ps = 1.0 / 355687428096000.0 + x2 * ps;
  ps = -1.0 / 1307674368000.0 + x2 * ps;
  ps = 1.0 / 6227020800.0 + x2 * ps;
  ps = -1.0 / 39916800.0 + x2 * ps;
  ps = 1.0 / 362880.0 + x2 * ps;
  ps = -1.0 / 5040.0 + x2 * ps;
  ps = 1.0 / 120.0 + x2 * ps;
  ps = -1.0 / 6.0 + x2 * ps;
  const double sin_x = x + x * (x2 * ps);

  double pc = -1.0 / 6402373705728000.0;  // -1/18!
  pc = 1.0 / 20922789888000.0 + x2 * pc;
  pc = -1.0 / 87178291200.0 + x2 * pc;
  pc = 1.0 / 479001600.0 + x2 * pc;
  pc = -1.0 / 3628800.0 + x2 * pc;
  pc = 1.0 / 40320.0 + x2 * pc;
  pc = -1.0 / 720.0 + x2 * pc;
  pc = 1.0 / 24.0 + x2 * pc;
  pc = -0.5 + x2 * pc;
  const double cos_x = 1.0 + x2 * pc;

  const double s = swap ? cos_x : sin_x;
  const double c = swap ? sin_x : cos_x;
  switch (quadrant) {
    case 0: sin_out = s;  cos_out = c;  break;
    case 1: sin_out = c;  cos_out = -s; break;
    case 2: sin_out = -s; cos_out = -c; break;
    default: sin_out = -c; cos_out = s; break;
  }
}

// Box-Muller transform of two raw 64-bit words into two standard normals.
inline void box_muller(std::uint64_t bits_a, std::uint64_t bits_b, double& z0,
                       double& z1) noexcept {
  const double radius = std::sqrt(-2.0 * pmath::log(bits_to_unit_open0(bits_a)));
  double s = 0.0;
  double c = 0.0;
  sincos_turn(bits_to_unit(bits_b), s, c);
  z0 = radius * c;
  z1 = radius * s;
}

}  // namespace pmath

// Sequential random stream for simulation bookkeeping (client selection,
// data sampling, seed sampling, Dirichlet draws). Wraps std::mt19937_64,
// whose output sequence is fixed by the standard, and implements its own
// portable distributions on top.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }
  std::uint32_t next_u32() { return static_cast<std::uint32_t>(engine_() >> 32); }

  // Uniform in [0, 1).
  double uniform() { return bits_to_unit(engine_()); }

  // Unbiased uniform integer in [0, n), n > 0.
  std::uint64_t uniform_index(std::uint64_t n) {
    // Lemire's nearly-divisionless method.
    std::uint64_t x = engine_();
    unsigned __int128 product = static_cast<unsigned __int128>(x) * n;
    auto low = static_cast<std::uint64_t>(product);
    if (low < n) {
      const std::uint64_t threshold = (0 - n) % n;
      while (low < threshold) {
        x = engine_();
        product = static_cast<unsigned __int128>(x) * n;
        low = static_cast<std::uint64_t>(product);
      }
    }
    return static_cast<std::uint64_t>(product >> 64);
  }

  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double z0 = 0.0;
    double z1 = 0.0;
    const std::uint64_t a = engine_();
    const std::uint64_t b = engine_();
    pmath::box_muller(a, b, z0, z1);
    spare_ = z1;
    has_spare_ = true;
    return z0;
  }

  // log of a Gamma(shape, 1) variate; working in log space keeps tiny
  // Dirichlet concentrations from underflowing to zero.
  double log_gamma_variate(double shape) {
    if (shape < 1.0) {
      // Gamma(a) = Gamma(a + 1) * U^(1/a)
      const double log_u = pmath::log(bits_to_unit_open0(engine_()));
      return log_gamma_variate(shape + 1.0) + log_u / shape;
    }
    // Marsaglia-Tsang
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
      const double x = normal();
      double v = 1.0 + c * x;
      if (v <= 0.0) continue;
      v = v * v * v;
      const double log_u = pmath::log(bits_to_unit_open0(engine_()));
      const double log_v = pmath::log(v);
      if (log_u < 0.5 * x * x + d - d * v + d * log_v) return pmath::log(d) + log_v;
    }
  }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace fedkseed
