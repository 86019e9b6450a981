#include "smallball/smallball.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <numbers>
#include <thread>

#include "smallball/errors.hpp"
#include "smallball/rng.hpp"

namespace sbl {

ChiSquareSum ChiSquareSum::from_sequence(const EigenSequence& seq, std::int64_t N) {
  if (N < 1 || N > seq.n_max()) {
    throw InvalidParameters("ChiSquareSum: N must lie in [1, n_max] for '" + seq.name() + "'");
  }
  ChiSquareSum out;
  out.weights = seq.values(N);
  out.tail_correction = seq.tail_bound(N);
  return out;
}

double ChiSquareSum::mean() const {
  double s = 0.0;
  for (double w : weights) s += w;
  return s;
}

void ChiSquareSum::validate() const {
  if (weights.empty()) throw InvalidParameters("ChiSquareSum: no weights");
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (!(weights[i] > 0.0)) throw InvalidParameters("ChiSquareSum: weights must be > 0");
    if (i > 0 && weights[i] > weights[i - 1]) {
      throw InvalidParameters("ChiSquareSum: weights must be nonincreasing");
    }
  }
  if (!(tail_correction >= 0.0)) throw InvalidParameters("ChiSquareSum: negative tail");
}

double log_laplace(const ChiSquareSum& sum, double u) {
  double s = 0.0;
  for (double l : sum.weights) s += std::log1p(2.0 * u * l);
  return -0.5 * s;
}

namespace {

double saddle_function(const std::vector<double>& w, double u) {
  double s = 0.0;
  for (double l : w) s += l / (1.0 + 2.0 * u * l);
  return s;
}

double saddle_variance(const std::vector<double>& w, double u) {
  double s = 0.0;
  for (double l : w) {
    const double x = l / (1.0 + 2.0 * u * l);
    s += 2.0 * x * x;
  }
  return s;
}

}  // namespace

SaddleResult saddle_log_prob(const ChiSquareSum& sum, double r, double eta) {
  sum.validate();
  if (!(r > 0.0)) throw DomainError("saddle_log_prob: r must be > 0");
  const double mean = sum.mean();
  if (!(r < mean)) {
    throw DomainError("saddle_log_prob: r = " + std::to_string(r) +
                      " is not below the mean " + std::to_string(mean));
  }
  const std::vector<double>& w = sum.weights;
  double lo = 0.0;
  double hi = 1.0 / (2.0 * w.front());
  for (int it = 0; saddle_function(w, hi) > r; ++it) {
    if (it > 2000) throw NoRoot("saddle_log_prob: could not bracket the saddle point");
    lo = hi;
    hi *= 2.0;
  }
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    (saddle_function(w, mid) > r ? lo : hi) = mid;
  }
  double u = 0.5 * (lo + hi);
  double res = saddle_function(w, u) - r;
  for (int it = 0; it < 3; ++it) {
    const double cand = u + res / saddle_variance(w, u);
    if (!(cand > 0.0)) break;
    const double cand_res = saddle_function(w, cand) - r;
    if (!(std::abs(cand_res) < std::abs(res))) break;
    u = cand;
    res = cand_res;
  }
  SaddleResult out;
  out.u_star = u;
  out.residual = res;
  out.ln_p_log = log_laplace(sum, u) + u * r;
  const double V = saddle_variance(w, u);
  out.ln_p_refined = out.ln_p_log - 0.5 * std::log(2.0 * std::numbers::pi * u * u * V);
  out.certified = sum.tail_correction <= eta * r;
  return out;
}

TruncatedSaddle saddle_log_prob_auto(const EigenSequence& seq, double r, double eta,
                                     std::int64_t n_start) {
  std::int64_t N = std::min(std::max<std::int64_t>(n_start, 2), seq.n_max());
  while (seq.tail_bound(N) > eta * r && N < seq.n_max()) N = std::min(2 * N, seq.n_max());
  TruncatedSaddle out;
  out.N = N;
  out.result = saddle_log_prob(ChiSquareSum::from_sequence(seq, N), r, eta);
  bool stable = false;
  try {
    out.ln_p_refined_half =
        saddle_log_prob(ChiSquareSum::from_sequence(seq, std::max<std::int64_t>(N / 2, 1)), r, eta)
            .ln_p_refined;
    stable = std::abs(out.ln_p_refined_half - out.result.ln_p_refined) <
             0.01 * std::abs(out.result.ln_p_refined);
  } catch (const DomainError&) {
    out.ln_p_refined_half = std::numeric_limits<double>::quiet_NaN();
  }
  out.certified = out.result.certified && stable;
  return out;
}

namespace {

constexpr std::int64_t kChunk = 4096;

struct ChunkSums {
  double w = 0.0;
  double w2 = 0.0;
  std::int64_t accepted = 0;
};

int resolve_threads(int threads) {
  if (threads < 0) {
    if (const char* env = std::getenv("SMALLBALL_THREADS")) {
      threads = std::atoi(env);
    } else {
      threads = static_cast<int>(std::thread::hardware_concurrency());
    }
  }
  return std::max(threads, 1);
}

}  // namespace

McResult mc_tilted_prob(const ChiSquareSum& sum, double r, double u, std::int64_t samples,
                        std::uint64_t seed, int threads) {
  sum.validate();
  if (!(r > 0.0)) throw DomainError("mc_tilted_prob: r must be > 0");
  if (!(u >= 0.0)) throw DomainError("mc_tilted_prob: u must be >= 0");
  if (samples < 1000) throw InvalidParameters("mc_tilted_prob: need at least 1000 samples");

  const std::size_t n = sum.weights.size();
  const std::size_t padded = (n + kNormalBlockSize - 1) / kNormalBlockSize * kNormalBlockSize;
  std::vector<double> scale(padded, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const double l = sum.weights[i];
    scale[i] = l / (1.0 + 2.0 * u * l);
  }
  const PhiloxKey key = philox_key(seed);

  auto run_chunk = [&](std::int64_t chunk) {
    ChunkSums out;
    double z[kNormalBlockSize];
    const std::int64_t first = chunk * kChunk;
    const std::int64_t last = std::min(samples, first + kChunk);
    for (std::int64_t s = first; s < last; ++s) {
      double S = 0.0;
      for (std::size_t i = 0; i < n && S <= r; i += kNormalBlockSize) {
        normal_block(key, static_cast<std::uint64_t>(s),
                     static_cast<std::uint32_t>(i / 4), z);
        double a0 = 0.0, a1 = 0.0, a2 = 0.0, a3 = 0.0;
        const double* sc = scale.data() + i;
        for (int k = 0; k < kNormalBlockSize; k += 4) {
          a0 += sc[k] * z[k] * z[k];
          a1 += sc[k + 1] * z[k + 1] * z[k + 1];
          a2 += sc[k + 2] * z[k + 2] * z[k + 2];
          a3 += sc[k + 3] * z[k + 3] * z[k + 3];
        }
        S += (a0 + a1) + (a2 + a3);
      }
      if (S <= r) {
        // exp(u S) scaled by exp(-u r) stays in (0, 1].
        const double wgt = std::exp(u * (S - r));
        out.w += wgt;
        out.w2 += wgt * wgt;
        ++out.accepted;
      }
    }
    return out;
  };

  const std::int64_t chunks = (samples + kChunk - 1) / kChunk;
  std::vector<ChunkSums> partial(static_cast<std::size_t>(chunks));
  const int workers = std::min<std::int64_t>(resolve_threads(threads), chunks);
  if (workers <= 1) {
    for (std::int64_t c = 0; c < chunks; ++c) partial[c] = run_chunk(c);
  } else {
    std::atomic<std::int64_t> next{0};
    std::vector<std::thread> pool;
    for (int t = 0; t < workers; ++t) {
      pool.emplace_back([&] {
        for (std::int64_t c = next++; c < chunks; c = next++) partial[c] = run_chunk(c);
      });
    }
    for (std::thread& th : pool) th.join();
  }

  ChunkSums total;
  for (const ChunkSums& c : partial) {
    total.w += c.w;
    total.w2 += c.w2;
    total.accepted += c.accepted;
  }
  McResult out;
  out.samples = samples;
  out.acceptance = static_cast<double>(total.accepted) / static_cast<double>(samples);
  if (out.acceptance < 1e-4) {
    throw DegenerateTilt("mc_tilted_prob: acceptance rate " + std::to_string(out.acceptance) +
                         " below 1e-4 at u = " + std::to_string(u));
  }
  const double ns = static_cast<double>(samples);
  const double m = total.w / ns;
  const double var = std::max(total.w2 / ns - m * m, 0.0) * ns / (ns - 1.0);
  const double log_factor = log_laplace(sum, u) + u * r;
  out.ln_estimate = log_factor + std::log(m);
  out.estimate = std::exp(out.ln_estimate);
  out.std_error = std::exp(log_factor) * std::sqrt(var / ns);
  return out;
}

IntegralAsymptotic integral_log_asymptotic_log(const SvfExpr& phi_in, double log_r) {
  const SvfExpr phi = validated(phi_in);
  if (!is_unbounded(phi)) {
    throw DomainError("integral_log_asymptotic: phi must be unbounded, got " + to_string(phi));
  }
  if (!std::isfinite(log_r)) throw DomainError("integral_log_asymptotic: r must be in (0, inf)");
  // g(v) = ln(phi(e^v) / (2 e^v)) - ln r, eventually decreasing in v.
  auto g = [&](double v) { return log_eval_extended(phi, v) - std::numbers::ln2 - v - log_r; };
  const double v_min = std::max(1.0, log_tau_min(phi));
  double v_hi = std::max(2.0 * v_min, -log_r);
  while (g(v_hi) >= 0.0) {
    v_hi *= 2.0;
    if (v_hi > 1e300) throw NoRoot("integral_log_asymptotic: phi(u)/(2u) never drops below r");
  }
  // Rightmost sign change on a grid from the top down, then bisection.
  constexpr int kGrid = 4096;
  double right = v_hi;
  double left = v_hi;
  bool found = false;
  for (int k = kGrid - 1; k >= 0; --k) {
    left = v_min + (v_hi - v_min) * k / kGrid;
    if (g(left) > 0.0) {
      found = true;
      break;
    }
    right = left;
  }
  if (!found) {
    throw NoRoot("integral_log_asymptotic: no root of phi(u)/(2u) = r with u > e (r too large)");
  }
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (left + right);
    if (mid <= left || mid >= right) break;
    (g(mid) > 0.0 ? left : right) = mid;
  }
  IntegralAsymptotic out;
  out.log_u = std::abs(g(left)) <= std::abs(g(right)) ? left : right;
  out.residual = std::expm1(g(out.log_u));
  // int_1^u phi(z) dz / z = (phi * ln)(u).
  out.value = -0.5 * convolve_numeric_log(phi, SvfExpr::log_power_of(1.0), out.log_u);
  return out;
}

double integral_log_asymptotic(const SvfExpr& phi, double r) {
  if (!(r > 0.0)) throw DomainError("integral_log_asymptotic: r must be > 0");
  return integral_log_asymptotic_log(phi, std::log(r)).value;
}

double expansion_coefficient(int k, double p) {
  if (k < 1) throw DomainError("expansion_coefficient: k must be >= 1");
  if (k == 1) return 1.0;
  double prod = 1.0;
  for (int m = 0; m <= k - 2; ++m) prod *= static_cast<double>(k) / p - m;
  return prod / std::tgamma(k + 1.0);
}

namespace {

constexpr double kPi = std::numbers::pi;

double factorial(int n) { return std::tgamma(n + 1.0); }

void check_tail(const SvfExpr& tail, const char* who) {
  if (tail.exp_coeff != 0.0 || tail.log_power != 0.0) {
    throw DomainError(std::string(who) +
                      ": the slowly varying tail may carry only a scale and iterated-log powers");
  }
}

// ln Phi(L) for a tail factor; L >= its tau_min.
double log_tail(const SvfExpr& tail, double L, const char* who) {
  if (!(L >= log_tau_min(tail))) {
    throw DomainError(std::string(who) + ": ln(1/eps) = " + std::to_string(L) +
                      " below the domain of the iterated logarithms");
  }
  return log_eval_svf_log(tail, L);
}

double negative_exp(double log_abs, const char* who) {
  if (!(log_abs <= 709.78)) throw OverflowError(std::string(who) + ": value overflows double");
  return -std::exp(log_abs);
}

void need_L(double L, double L_min, const char* who) {
  if (!(L > 0.0) || !(L >= L_min)) {
    throw DomainError(std::string(who) + ": ln(1/eps) = " + std::to_string(L) + " must be >= " +
                      std::to_string(L_min));
  }
}

}  // namespace

double formula_log_type(double alpha, const SvfExpr& tail_in, double L) {
  if (!(alpha >= 0.0)) throw DomainError("formula_log_type: alpha must be >= 0");
  const SvfExpr tail = validated(tail_in);
  check_tail(tail, "formula_log_type");
  if (alpha == 0.0 && !is_unbounded(tail)) {
    throw DomainError("formula_log_type: alpha = 0 needs a nondecreasing unbounded tail");
  }
  need_L(L, 0.0, "formula_log_type");
  const double log_phi = alpha * std::log(L) + log_tail(tail, L, "formula_log_type");
  return negative_exp(alpha * std::numbers::ln2 - std::log(alpha + 1.0) + log_phi + std::log(L),
                      "formula_log_type");
}

double formula_exp_type(double a, double p, double alpha, const SvfExpr& tail_in, double L) {
  if (!(p > 1.0)) throw DomainError("formula_exp_type: p must be > 1");
  if (!(a > 0.0)) throw DomainError("formula_exp_type: a must be > 0");
  if (!(alpha >= 0.0)) throw DomainError("formula_exp_type: alpha must be >= 0");
  const SvfExpr tail = validated(tail_in);
  check_tail(tail, "formula_exp_type");
  need_L(L, 0.0, "formula_exp_type");
  const double pc = p / (p - 1.0);
  const int terms = static_cast<int>(std::floor(pc + 1e-12));
  const double x = a * std::pow(2.0, -1.0 / pc) * std::pow(L, -1.0 / pc);
  double series = 0.0;
  for (int k = 1; k <= terms; ++k) series += expansion_coefficient(k, p) * std::pow(x, k);
  const double log_abs = (alpha - 1.0 / p) * std::numbers::ln2 + std::log(p) - std::log(a) +
                         2.0 * L * series + (alpha + 1.0 / pc) * std::log(L) +
                         log_tail(tail, L, "formula_exp_type");
  return negative_exp(log_abs, "formula_exp_type");
}

double formula_from_counting(const SvfExpr& phi_in, double L) {
  const SvfExpr phi = validated(phi_in);
  SvfExpr tail = phi;
  tail.exp_coeff = 0.0;
  tail.exp_root = 0.0;
  tail.log_power = 0.0;
  if (phi.exp_coeff == 0.0) return formula_log_type(phi.log_power, tail, L);
  return formula_exp_type(phi.exp_coeff, 1.0 / phi.exp_root, phi.log_power, tail, L);
}

namespace {

int checked_order(std::size_t d, const char* who) {
  if (d < 1) throw DomainError(std::string(who) + ": need at least one factor");
  return static_cast<int>(d);
}

int checked_order(int d, const char* who) {
  if (d < 1) throw DomainError(std::string(who) + ": d must be >= 1");
  return d;
}

struct Evaluator {
  double L;

  double operator()(const formula::LogType& f) const {
    return formula_log_type(f.alpha, f.tail, L);
  }
  double operator()(const formula::ExpType& f) const {
    return formula_exp_type(f.a, f.p, f.alpha, f.tail, L);
  }
  double operator()(const formula::StationaryLogPow& f) const {
    const int d = checked_order(f.C.size(), "stationary-logpow");
    if (!(f.p > 1.0)) throw DomainError("stationary-logpow: p must be > 1");
    need_L(L, 0.0, "stationary-logpow");
    double B = 0.0;
    double log_Cf = 0.0;
    for (double c : f.C) {
      if (!(c > 0.0)) throw DomainError("stationary-logpow: C_j must be > 0");
      B += std::pow(c, -1.0 / (f.p - 1.0));
      log_Cf += std::log(c) / (f.p - 1.0);
    }
    const double pc = f.p / (f.p - 1.0);
    const int terms = static_cast<int>(std::floor(pc + 1e-12));
    const double X = 2.0 * L / B;
    double series = 0.0;
    for (int k = 1; k <= terms; ++k) {
      series += expansion_coefficient(k, f.p) * std::pow(X, -k / pc);
    }
    const double log_pref = -0.5 * ((d + 1) * std::log(kPi) + std::log(B) + log_Cf +
                                    (d - 1) * std::log((f.p - 1.0) / 2.0));
    const double log_abs = std::log(f.p / 2.0) + log_pref + 2.0 * L * series +
                           (1.0 + (d - 3) / (2.0 * f.p)) * std::log(X);
    return negative_exp(log_abs, "stationary-logpow");
  }
  double operator()(const formula::StationaryPowLog& f) const {
    const int d = checked_order(f.C.size(), "stationary-powlog");
    if (!(f.q > 0.0 && f.q <= 1.0)) throw DomainError("stationary-powlog: need 0 < q <= 1");
    if (f.q == 1.0 && !(f.p < 0.0)) throw DomainError("stationary-powlog: q = 1 needs p < 0");
    need_L(L, std::numbers::e, "stationary-powlog");
    double log_Cf = 0.0;
    for (double c : f.C) {
      if (!(c > 0.0)) throw DomainError("stationary-powlog: C_j must be > 0");
      log_Cf += std::log(c) / d;
    }
    const double dq = d / f.q;
    const double log_abs = d * std::lgamma((f.q + 1.0) / f.q) - d * std::log(kPi) -
                           std::lgamma(dq + 2.0) +
                           dq * (std::numbers::ln2 + f.p * std::log(f.q) - log_Cf) +
                           (dq + 1.0) * std::log(L) - f.p * dq * std::log(std::log(L));
    return negative_exp(log_abs, "stationary-powlog");
  }
  double operator()(const formula::StationaryLinear& f) const {
    const int d = checked_order(f.C.size(), "stationary-linear");
    need_L(L, 0.0, "stationary-linear");
    double log_Cf = 0.0;
    for (double c : f.C) {
      if (!(c > 0.0)) throw DomainError("stationary-linear: C_j must be > 0");
      const double x = kPi / (2.0 * c);
      log_Cf += std::log(elliptic_K(1.0 / std::cosh(x))) - std::log(elliptic_K(std::tanh(x)));
    }
    const double log_abs = d * std::numbers::ln2 - d * std::log(kPi) -
                           std::log(factorial(d + 1)) - log_Cf + (d + 1) * std::log(L);
    return negative_exp(log_abs, "stationary-linear");
  }
  double operator()(const formula::StationaryLinLog& f) const {
    const int d = checked_order(f.d, "stationary-linlog");
    if (!(f.p > 0.0)) throw DomainError("stationary-linlog: p must be > 0");
    need_L(L, std::exp(std::numbers::e), "stationary-linlog");
    const double log_abs = -d * std::log(f.p) - std::log(factorial(d + 1)) +
                           (d + 1) * std::log(L) - d * std::log(std::log(std::log(L)));
    return negative_exp(log_abs, "stationary-linlog");
  }
  double operator()(const formula::StationaryPolyGrowth& f) const {
    const int d = checked_order(f.d, "stationary-polygrowth");
    if (!(f.q > 1.0)) throw DomainError("stationary-polygrowth: q must be > 1");
    need_L(L, std::numbers::e, "stationary-polygrowth");
    const double log_abs = d * (std::log(f.q) - std::log(f.q - 1.0)) -
                           std::log(factorial(d + 1)) + (d + 1) * std::log(L) -
                           d * std::log(std::log(L));
    return negative_exp(log_abs, "stationary-polygrowth");
  }
  double operator()(const formula::StationarySuperPoly& f) const {
    const int d = checked_order(f.d, "stationary-superpoly");
    need_L(L, std::numbers::e, "stationary-superpoly");
    const double log_abs =
        -std::log(factorial(d + 1)) + (d + 1) * std::log(L) - d * std::log(std::log(L));
    return negative_exp(log_abs, "stationary-superpoly");
  }
  double operator()(const formula::Homogeneous& f) const {
    const int d = checked_order(f.kernels.size(), "homogeneous");
    need_L(L, 0.0, "homogeneous");
    double log_Cf = 0.0;
    for (const HomogeneousKernelParams& k : f.kernels) {
      k.validate();
      log_Cf += std::log(k.c());
    }
    const double log_abs = 2 * d * (std::numbers::ln2 - std::log(kPi)) -
                           std::log(factorial(2 * d + 1)) - log_Cf + (2 * d + 1) * std::log(L);
    return negative_exp(log_abs, "homogeneous");
  }
  double self_similar(const std::vector<SelfSimilarMeasure>& ms, int smoothness,
                      const char* who) const {
    const int d = checked_order(ms.size(), who);
    if (smoothness < 0) throw DomainError(std::string(who) + ": smoothness must be >= 0");
    need_L(L, 0.0, who);
    double log_Cf = 0.0;
    for (const SelfSimilarMeasure& m : ms) {
      m.validate();
      const double shrink = m.contraction() * std::pow(m.delta, 2.0 * smoothness + 1.0);
      log_Cf += std::log(m.M - 1.0) - std::log(std::log(1.0 / shrink));
    }
    const double log_abs =
        d * std::numbers::ln2 + log_Cf - std::log(factorial(d + 1)) + (d + 1) * std::log(L);
    return negative_exp(log_abs, who);
  }
  double operator()(const formula::SelfSimilar& f) const {
    return self_similar(f.measures, 0, "selfsimilar");
  }
  double operator()(const formula::SelfSimilarIntegrated& f) const {
    return self_similar(f.measures, f.smoothness, "selfsimilar-integrated");
  }
  double operator()(const formula::Mixed& f) const {
    f.kernel.validate();
    need_L(L, std::exp(std::numbers::e), "mixed");
    const double log_abs = -std::log(6.0 * kPi * kPi * f.kernel.c()) + 4.0 * std::log(L) -
                           std::log(std::log(std::log(L)));
    return negative_exp(log_abs, "mixed");
  }
};

struct Namer {
  std::string operator()(const formula::LogType&) const { return "log-type"; }
  std::string operator()(const formula::ExpType&) const { return "exp-type"; }
  std::string operator()(const formula::StationaryLogPow&) const { return "stationary-logpow"; }
  std::string operator()(const formula::StationaryPowLog&) const { return "stationary-powlog"; }
  std::string operator()(const formula::StationaryLinear&) const { return "stationary-linear"; }
  std::string operator()(const formula::StationaryLinLog&) const { return "stationary-linlog"; }
  std::string operator()(const formula::StationaryPolyGrowth&) const {
    return "stationary-polygrowth";
  }
  std::string operator()(const formula::StationarySuperPoly&) const {
    return "stationary-superpoly";
  }
  std::string operator()(const formula::Homogeneous&) const { return "homogeneous"; }
  std::string operator()(const formula::SelfSimilar&) const { return "selfsimilar"; }
  std::string operator()(const formula::SelfSimilarIntegrated&) const {
    return "selfsimilar-integrated";
  }
  std::string operator()(const formula::Mixed&) const { return "mixed"; }
};

}  // namespace

double formula_catalog(const AsymptoticFormula& f, double log_inv_eps) {
  return std::visit(Evaluator{log_inv_eps}, f);
}

void validate_formula(const AsymptoticFormula& f) {
  // Every variant is defined for large enough L; evaluating there runs all
  // parameter checks without depending on the caller's grid.
  formula_catalog(f, 64.0);
}

std::string formula_name(const AsymptoticFormula& f) { return std::visit(Namer{}, f); }

}  // namespace sbl
