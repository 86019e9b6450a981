#pragma once

// ln P{ sum lambda_n xi_n^2 <= r } by three routes: the saddle point of the
// Laplace transform, exponentially tilted Monte Carlo, and closed-form
// logarithmic asymptotics driven by the counting function.

#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "smallball/marginal_spectra.hpp"
#include "smallball/svf.hpp"

namespace sbl {

struct ChiSquareSum {
  std::vector<double> weights;   ///< positive, nonincreasing
  double tail_correction = 0.0;  ///< sum of the weights dropped by truncation

  /// First N values of the sequence; tail_correction = seq.tail_bound(N).
  static ChiSquareSum from_sequence(const EigenSequence& seq, std::int64_t N);
  double mean() const;
  void validate() const;
};

struct SaddleResult {
  double u_star = 0.0;
  double ln_p_log = 0.0;      ///< Lambda(u*) + u* r
  double ln_p_refined = 0.0;  ///< ln_p_log - 1/2 ln(2 pi u*^2 V(u*))
  double residual = 0.0;      ///< sum lambda/(1 + 2 u* lambda) - r
  bool certified = false;     ///< tail_correction <= eta r
};

/// Solves sum lambda_n / (1 + 2 u lambda_n) = r by doubling a bracket from
/// 1/(2 lambda_1), bisection and a Newton polish.
SaddleResult saddle_log_prob(const ChiSquareSum& sum, double r, double eta = 1e-3);

/// Lambda(u) = -1/2 sum ln(1 + 2 u lambda_n).
double log_laplace(const ChiSquareSum& sum, double u);

struct TruncatedSaddle {
  SaddleResult result;
  std::int64_t N = 0;
  double ln_p_refined_half = 0.0;  ///< same evaluation at N/2
  bool certified = false;          ///< tail <= eta r and halving N moves ln P by < 1%
};

/// Doubles N from n_start until tail_bound(N) <= eta r (capped at
/// seq.n_max()), then evaluates the saddle at N and N/2.
TruncatedSaddle saddle_log_prob_auto(const EigenSequence& seq, double r, double eta = 1e-3,
                                     std::int64_t n_start = 1024);

struct McResult {
  double estimate = 0.0;
  double std_error = 0.0;
  double ln_estimate = 0.0;  ///< ln(estimate) without underflow
  double acceptance = 0.0;   ///< fraction of samples with S <= r
  std::int64_t samples = 0;
};

/// Importance-sampling estimate of P{S <= r} under the tilt u: xi_n ~
/// N(0, 1/(1 + 2 u lambda_n)), weight exp(Lambda(u) + u S) 1{S <= r}.
/// Samples are processed in fixed chunks reduced in chunk order, so the
/// result depends only on (seed, samples). threads < 0 reads
/// SMALLBALL_THREADS (0 = serial), defaulting to the hardware count.
McResult mc_tilted_prob(const ChiSquareSum& sum, double r, double u, std::int64_t samples,
                        std::uint64_t seed, int threads = -1);

struct IntegralAsymptotic {
  double value = 0.0;     ///< -1/2 int_1^u phi(z) dz / z
  double log_u = 0.0;     ///< ln u(r), rightmost root of phi(u) / (2u) = r
  double residual = 0.0;  ///< relative residual of the root equation
};

/// r given through ln r so that r = eps^2 with eps = e^-200 is routine.
IntegralAsymptotic integral_log_asymptotic_log(const SvfExpr& phi, double log_r);
double integral_log_asymptotic(const SvfExpr& phi, double r);

/// Coefficients of the expansion of u(r) for exponential-type counting
/// functions: c_1 = 1, c_k = (1/k!) prod_{m=0}^{k-2} (k/p - m).
double expansion_coefficient(int k, double p);

/// phi(tau) = ln^alpha(tau) Phi(ln tau) with Phi given by `tail` (a log-type
/// SvfExpr with log_power 0 carrying the scale and iterated-log powers).
/// Arguments are L = ln(1/eps).
double formula_log_type(double alpha, const SvfExpr& tail, double log_inv_eps);

/// phi(tau) = exp(a ln^{1/p} tau) ln^alpha(tau) Phi(ln tau).
double formula_exp_type(double a, double p, double alpha, const SvfExpr& tail,
                        double log_inv_eps);

/// Dispatches on the shape of phi: log-type to formula_log_type,
/// exponential-type to formula_exp_type.
double formula_from_counting(const SvfExpr& phi, double log_inv_eps);

namespace formula {
struct LogType { double alpha; SvfExpr tail; };
struct ExpType { double a; double p; double alpha; SvfExpr tail; };
/// Stationary sheets, G_j ~ C_j ln^p xi.
struct StationaryLogPow { double p; std::vector<double> C; };
/// G_j ~ C_j xi^q ln^p xi, 0 < q <= 1 (p < 0 when q = 1).
struct StationaryPowLog { double q; double p; std::vector<double> C; };
/// G_j ~ C_j xi.
struct StationaryLinear { std::vector<double> C; };
/// G_j ~ C_j xi ln^p xi, p > 0.
struct StationaryLinLog { double p; int d; };
/// ln G_j ~ q ln xi, q > 1.
struct StationaryPolyGrowth { double q; int d; };
struct StationarySuperPoly { int d; };
/// Homogeneous sheet with kernels s^b t^b / (s+t)^a.
struct Homogeneous { std::vector<HomogeneousKernelParams> kernels; };
/// Brownian sheet under a product of degenerately self-similar measures.
struct SelfSimilar { std::vector<SelfSimilarMeasure> measures; };
struct SelfSimilarIntegrated { std::vector<SelfSimilarMeasure> measures; int smoothness; };
/// Stationary process with density 1/Gamma(|xi|) tensored with a homogeneous kernel.
struct Mixed { HomogeneousKernelParams kernel; };
}  // namespace formula

using AsymptoticFormula =
    std::variant<formula::LogType, formula::ExpType, formula::StationaryLogPow,
                 formula::StationaryPowLog, formula::StationaryLinear, formula::StationaryLinLog,
                 formula::StationaryPolyGrowth, formula::StationarySuperPoly,
                 formula::Homogeneous, formula::SelfSimilar, formula::SelfSimilarIntegrated,
                 formula::Mixed>;

/// Throws DomainError when the parameters leave the variant's range.
void validate_formula(const AsymptoticFormula& f);

/// Right-hand side of the logarithmic small-ball asymptotic for the variant,
/// at L = ln(1/eps).
double formula_catalog(const AsymptoticFormula& f, double log_inv_eps);

std::string formula_name(const AsymptoticFormula& f);

}  // namespace sbl
