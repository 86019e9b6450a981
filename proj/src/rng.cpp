#include "smallball/rng.hpp"

#include <algorithm>

namespace sbl {

void normal_block(const PhiloxKey& key, std::uint64_t stream, std::uint32_t first_block,
                  double* out) {
  constexpr int B = kNormalBlockSize / 4;
  std::uint32_t c0[B], c1[B], c2[B], c3[B];
  const auto lo = static_cast<std::uint32_t>(stream);
  const auto hi = static_cast<std::uint32_t>(stream >> 32);
  for (int j = 0; j < B; ++j) {
    c0[j] = first_block + static_cast<std::uint32_t>(j);
    c1[j] = lo;
    c2[j] = hi;
    c3[j] = 0u;
  }
  std::uint32_t k0 = key[0];
  std::uint32_t k1 = key[1];
  for (int round = 0; round < 10; ++round) {
    for (int j = 0; j < B; ++j) {
      const std::uint64_t p0 = std::uint64_t{0xD2511F53u} * c0[j];
      const std::uint64_t p1 = std::uint64_t{0xCD9E8D57u} * c2[j];
      const std::uint32_t n0 = static_cast<std::uint32_t>(p1 >> 32) ^ c1[j] ^ k0;
      const std::uint32_t n2 = static_cast<std::uint32_t>(p0 >> 32) ^ c3[j] ^ k1;
      c1[j] = static_cast<std::uint32_t>(p1);
      c3[j] = static_cast<std::uint32_t>(p0);
      c0[j] = n0;
      c2[j] = n2;
    }
    k0 += 0x9E3779B9u;
    k1 += 0xBB67AE85u;
  }
  std::uint32_t w[kNormalBlockSize];
  for (int j = 0; j < B; ++j) {
    w[4 * j] = c0[j];
    w[4 * j + 1] = c1[j];
    w[4 * j + 2] = c2[j];
    w[4 * j + 3] = c3[j];
  }

  // Central region for every lane, then the tails over a compacted index list.
  double p[kNormalBlockSize];
  for (int i = 0; i < kNormalBlockSize; ++i) {
    p[i] = uniform_from_bits(w[i]);
    const double q = p[i] - 0.5;
    const double r = 0.180625 - q * q;
    out[i] = q *
             (((((((2.5090809287301226727e+3 * r + 3.3430575583588128105e+4) * r +
                   6.7265770927008700853e+4) * r + 4.5921953931549871457e+4) * r +
                 1.3731693765509461125e+4) * r + 1.9715909503065514427e+3) * r +
               1.3314166789178437745e+2) * r + 3.3871328727963666080e0) /
             (((((((5.2264952788528545610e+3 * r + 2.8729085735721942674e+4) * r +
                   3.9307895800092710610e+4) * r + 2.1213794301586595867e+4) * r +
                 5.3941960214247511077e+3) * r + 6.8718700749205790830e+2) * r +
               4.2313330701600911252e+1) * r + 1.0);
  }
  int idx[kNormalBlockSize];
  int count = 0;
  for (int i = 0; i < kNormalBlockSize; ++i) {
    idx[count] = i;
    count += std::abs(p[i] - 0.5) > 0.425 ? 1 : 0;
  }
  double r[kNormalBlockSize];
  for (int c = 0; c < count; ++c) {
    const double pi = p[idx[c]];
    r[c] = std::sqrt(-std::log(std::min(pi, 1.0 - pi)));
  }
  for (int c = 0; c < count; ++c) {
    const int i = idx[c];
    if (r[c] > 5.0) {
      out[i] = normal_quantile(p[i]);
      continue;
    }
    const double s = r[c] - 1.6;
    const double x =
        (((((((7.74545014278341407640e-4 * s + 2.27238449892691845833e-2) * s +
              2.41780725177450611770e-1) * s + 1.27045825245236838258e0) * s +
            3.64784832476320460504e0) * s + 5.76949722146069140550e0) * s +
          4.63033784615654529590e0) * s + 1.42343711074968357734e0) /
        (((((((1.05075007164441684324e-9 * s + 5.47593808499534494600e-4) * s +
              1.51986665636164571966e-2) * s + 1.48103976427480074590e-1) * s +
            6.89767334985100004550e-1) * s + 1.67638483018380384940e0) * s +
          2.05319162663775882187e0) * s + 1.0);
    out[i] = p[i] < 0.5 ? -x : x;
  }
}

}  // namespace sbl
