#pragma once

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>

namespace pamlab {

inline constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

inline constexpr std::uint64_t mix_key(std::uint64_t a, std::uint64_t b, std::uint64_t c) {
  return splitmix64(splitmix64(splitmix64(a) ^ b) ^ c);
}

/// Philox4x32-10 block function (Salmon et al., SC'11).
struct Philox4x32 {
  using Counter = std::array<std::uint32_t, 4>;

  static inline Counter apply(Counter c, std::uint64_t key) {
    std::uint32_t c0 = c[0], c1 = c[1], c2 = c[2], c3 = c[3];
    std::uint32_t k0 = static_cast<std::uint32_t>(key);
    std::uint32_t k1 = static_cast<std::uint32_t>(key >> 32);
    for (int r = 0; r < 10; ++r) {
      const std::uint64_t p0 = std::uint64_t{0xD2511F53u} * c0;
      const std::uint64_t p1 = std::uint64_t{0xCD9E8D57u} * c2;
      const std::uint32_t n0 = static_cast<std::uint32_t>(p1 >> 32) ^ c1 ^ k0;
      const std::uint32_t n2 = static_cast<std::uint32_t>(p0 >> 32) ^ c3 ^ k1;
      c0 = n0;
      c1 = static_cast<std::uint32_t>(p1);
      c2 = n2;
      c3 = static_cast<std::uint32_t>(p0);
      k0 += 0x9E3779B9u;
      k1 += 0xBB67AE85u;
    }
    return {c0, c1, c2, c3};
  }
};

/// Natural logarithm of a positive normal double (fdlibm reduction and
/// polynomial, under 1 ulp); branch-free so that vector and scalar code
/// return identical bits.
inline double log_positive(double x) {
  const std::uint64_t u = std::bit_cast<std::uint64_t>(x);
  const std::uint64_t mant = u & 0xFFFFFFFFFFFFFULL;
  const std::uint64_t big = mant > 0x6A09E667F3BCCULL ? 1 : 0;
  const double m = std::bit_cast<double>(mant | ((1023 - big) << 52));
  const double k = static_cast<double>(static_cast<std::int64_t>(u >> 52) - 1023 + static_cast<std::int64_t>(big));
  const double f = m - 1.0;
  const double s = f / (2.0 + f);
  const double z = s * s;
  const double r = z * (6.666666666666735130e-01 +
                        z * (3.999999999940941908e-01 +
                             z * (2.857142874366239149e-01 +
                                  z * (2.222219843214978396e-01 +
                                       z * (1.818357216161805012e-01 +
                                            z * (1.531383769920937332e-01 + z * 1.479819860511658591e-01))))));
  const double hfsq = 0.5 * f * f;
  return k * 6.93147180369123816490e-01 - ((hfsq - (s * (hfsq + r) + k * 1.90821492927058770002e-10)) - f);
}

// Wichura's AS241 (PPND16), relative accuracy ~1e-16, split into the
// central region |p - 0.5| <= 0.425 and the tails.
inline double normal_quantile_central(double p) {
  const double q = 0.5 - p;
  const double rc = 0.180625 - q * q;
  const double central =
      q *
      (((((((rc * 2509.0809287301226727 + 33430.575583588128105) * rc + 67265.770927008700853) * rc +
           45921.953931549871457) * rc + 13731.693765509461125) * rc + 1971.5909503065514427) * rc +
        133.14166789178437745) * rc + 3.387132872796366608) /
      (((((((rc * 5226.495278852545925 + 28729.085735721942674) * rc + 39307.89580009271061) * rc +
           21213.794301586595867) * rc + 5394.1960214247511077) * rc + 687.1870074920579083) * rc +
        42.313330701600911252) * rc + 1.0);
  return central;
}

inline double normal_quantile_tail(double p) {
  const double r = std::sqrt(-log_positive(p));
  const double a = r - 1.6;
  const double near =
      (((((((a * 7.7454501427834140764e-4 + 0.0227238449892691845833) * a + 0.24178072517745061177) * a +
           1.27045825245236838258) * a + 3.64784832476320460504) * a + 5.7694972214606914055) * a +
        4.6303378461565452959) * a + 1.42343711074968357734) /
      (((((((a * 1.05075007164441684324e-9 + 5.475938084995344946e-4) * a + 0.0151986665636164571966) * a +
           0.14810397642748007459) * a + 0.68976733498510000455) * a + 1.6763848301838038494) * a +
        2.05319162663775882187) * a + 1.0);
  const double b = r - 5.0;
  const double far =
      (((((((b * 2.01033439929228813265e-7 + 2.71155556874348757815e-5) * b + 0.0012426609473880784386) * b +
           0.026532189526576123093) * b + 0.29656057182850489123) * b + 1.7848265399172913358) * b +
        5.4637849111641143699) * b + 6.6579046435011037772) /
      (((((((b * 2.04426310338993978564e-15 + 1.4215117583164458887e-7) * b + 1.8463183175100546818e-5) * b +
           7.868691311456132591e-4) * b + 0.0148753612908506148525) * b + 0.13692988092273580531) * b +
        0.59983220655588793769) * b + 1.0);
  return r <= 5.0 ? near : far;
}

inline bool normal_quantile_is_central(double p) { return 0.5 - p <= 0.425; }

/// |Phi^{-1}(p)| for p in (0, 0.5].
inline double normal_quantile_magnitude(double p) {
  return normal_quantile_is_central(p) ? normal_quantile_central(p) : normal_quantile_tail(p);
}

inline double apply_sign_bit(double z, std::uint64_t a) {
  return std::bit_cast<double>(std::bit_cast<std::uint64_t>(z) ^ (a & 0x8000000000000000ULL));
}

/// Lower-half probability (2u + 1) 2^-54 in (0, 0.5) from the low 52 bits
/// of `a`; the top bit is reserved for the sign.
inline double half_uniform(std::uint64_t a) {
  const double d = std::bit_cast<double>(0x3FF0000000000000ULL | (a & 0xFFFFFFFFFFFFFULL));
  return ((d - 1.0) + 0x1p-53) * 0.5;
}

/// Standard normal variate from one 64-bit word by inversion.
inline double normal_from_bits(std::uint64_t a) {
  return apply_sign_bit(normal_quantile_magnitude(half_uniform(a)), a);
}

/// Standard normal CDF.
inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

/// Sequential stream on top of Philox: counter (lo, hi of the block index,
/// stream id low/high), key from the stream's identity.
class CounterRng {
 public:
  CounterRng(std::uint64_t seed, std::uint64_t realization, std::uint64_t stream)
      : key_(mix_key(seed, realization, 0x5EEDULL)), stream_(stream) {}

  std::uint64_t next_u64() {
    if (avail_ == 0) refill();
    return buffer_[--avail_];
  }
  /// Uniform on the open interval (0, 1).
  double uniform() {
    return (static_cast<double>(static_cast<std::int64_t>(next_u64() >> 11)) + 0.5) * 0x1p-53;
  }
  double exponential() { return -std::log(uniform()); }
  /// Uniform integer in [0, n) by rejection-free multiply-shift (bias < 2^-32 for n < 2^32).
  std::uint32_t below(std::uint32_t n) {
    return static_cast<std::uint32_t>(((next_u64() >> 32) * std::uint64_t{n}) >> 32);
  }
  double normal() { return normal_from_bits(next_u64()); }

 private:
  void refill() {
    Philox4x32::Counter c = {static_cast<std::uint32_t>(block_), static_cast<std::uint32_t>(block_ >> 32),
                             static_cast<std::uint32_t>(stream_), static_cast<std::uint32_t>(stream_ >> 32)};
    auto out = Philox4x32::apply(c, key_);
    buffer_[0] = (std::uint64_t{out[0]} << 32) | out[1];
    buffer_[1] = (std::uint64_t{out[2]} << 32) | out[3];
    avail_ = 2;
    ++block_;
  }

  std::uint64_t key_;
  std::uint64_t stream_;
  std::uint64_t block_ = 0;
  std::array<std::uint64_t, 2> buffer_{};
  int avail_ = 0;
};

}  // namespace pamlab
