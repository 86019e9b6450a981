#pragma once

// Counter-based random numbers: Philox4x32-10 and Gaussian variates by the
// AS241 (PPND16) inverse normal CDF. Every variate is a pure function of
// (seed, counter), so Monte Carlo runs are reproducible under any chunking.

#include <array>
#include <cmath>
#include <cstdint>

namespace sbl {

using PhiloxCounter = std::array<std::uint32_t, 4>;
using PhiloxKey = std::array<std::uint32_t, 2>;

inline PhiloxCounter philox4x32_10(PhiloxCounter ctr, PhiloxKey key) {
  constexpr std::uint64_t kM0 = 0xD2511F53u;
  constexpr std::uint64_t kM1 = 0xCD9E8D57u;
  constexpr std::uint32_t kW0 = 0x9E3779B9u;
  constexpr std::uint32_t kW1 = 0xBB67AE85u;
  for (int round = 0; round < 10; ++round) {
    const std::uint64_t p0 = kM0 * ctr[0];
    const std::uint64_t p1 = kM1 * ctr[2];
    ctr = {static_cast<std::uint32_t>(p1 >> 32) ^ ctr[1] ^ key[0], static_cast<std::uint32_t>(p1),
           static_cast<std::uint32_t>(p0 >> 32) ^ ctr[3] ^ key[1], static_cast<std::uint32_t>(p0)};
    key[0] += kW0;
    key[1] += kW1;
  }
  return ctr;
}

inline PhiloxKey philox_key(std::uint64_t seed) {
  return {static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)};
}

/// Open-interval uniform from a 32-bit word: (w + 1/2) 2^-32.
inline double uniform_from_bits(std::uint32_t w) {
  return (static_cast<double>(w) + 0.5) * 0x1p-32;
}

/// Standard normal quantile, AS241 PPND16 (relative accuracy about 1e-16).
inline double normal_quantile(double p) {
  const double q = p - 0.5;
  if (std::abs(q) <= 0.425) {
    const double r = 0.180625 - q * q;
    return q *
           (((((((2.5090809287301226727e+3 * r + 3.3430575583588128105e+4) * r +
                 6.7265770927008700853e+4) * r + 4.5921953931549871457e+4) * r +
               1.3731693765509461125e+4) * r + 1.9715909503065514427e+3) * r +
             1.3314166789178437745e+2) * r + 3.3871328727963666080e0) /
           (((((((5.2264952788528545610e+3 * r + 2.8729085735721942674e+4) * r +
                 3.9307895800092710610e+4) * r + 2.1213794301586595867e+4) * r +
               5.3941960214247511077e+3) * r + 6.8718700749205790830e+2) * r +
             4.2313330701600911252e+1) * r + 1.0);
  }
  double r = std::sqrt(-std::log(q < 0.0 ? p : 1.0 - p));
  double x;
  if (r <= 5.0) {
    r -= 1.6;
    x = (((((((7.74545014278341407640e-4 * r + 2.27238449892691845833e-2) * r +
              2.41780725177450611770e-1) * r + 1.27045825245236838258e0) * r +
            3.64784832476320460504e0) * r + 5.76949722146069140550e0) * r +
          4.63033784615654529590e0) * r + 1.42343711074968357734e0) /
        (((((((1.05075007164441684324e-9 * r + 5.47593808499534494600e-4) * r +
              1.51986665636164571966e-2) * r + 1.48103976427480074590e-1) * r +
            6.89767334985100004550e-1) * r + 1.67638483018380384940e0) * r +
          2.05319162663775882187e0) * r + 1.0);
  } else {
    r -= 5.0;
    x = (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r +
              1.24266094738807843860e-3) * r + 2.65321895265761230930e-2) * r +
            2.96560571828504891230e-1) * r + 1.78482653991729133580e0) * r +
          5.46378491116411436990e0) * r + 6.65790464350110377720e0) /
        (((((((2.04426310338993978564e-15 * r + 1.42151175831644588870e-7) * r +
              1.84631831751005468180e-5) * r + 7.86869131145613259100e-4) * r +
            1.48753612908506148525e-2) * r + 1.36929880922735805310e-1) * r +
          5.99832206555887937690e-1) * r + 1.0);
  }
  return q < 0.0 ? -x : x;
}

/// Four standard normals for (seed, stream, block): counter words are
/// (block, stream low, stream high, 0).
inline std::array<double, 4> normal4(const PhiloxKey& key, std::uint64_t stream,
                                     std::uint32_t block) {
  const PhiloxCounter bits = philox4x32_10(
      {block, static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32), 0u},
      key);
  return {normal_quantile(uniform_from_bits(bits[0])), normal_quantile(uniform_from_bits(bits[1])),
          normal_quantile(uniform_from_bits(bits[2])), normal_quantile(uniform_from_bits(bits[3]))};
}

/// Normals per normal_block call: 64 Philox blocks of four.
inline constexpr int kNormalBlockSize = 256;

/// The kNormalBlockSize variates of blocks first_block .. first_block + 63,
/// bit-identical to successive normal4 calls but laid out for vectorisation.
void normal_block(const PhiloxKey& key, std::uint64_t stream, std::uint32_t first_block,
                  double* out);

}  // namespace sbl
