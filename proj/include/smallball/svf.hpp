#pragma once

// Slowly varying functions of the single-term form
//
//     f(tau) = C * exp(A * ln(tau)^rho) * ln(tau)^alpha
//                * (ln ln tau)^kappa * (ln ln ln tau)^lambda
//
// and their asymptotic convolution (f * g)(tau) = int_1^tau f(tau/s) dg(s).
//
// Arguments are usually astronomically large (tau = e^10000 is routine), so
// every evaluator has a variant taking L = ln(tau) directly.

#include <span>
#include <string>

namespace sbl {

struct SvfExpr {
  double scale = 1.0;            ///< C > 0
  double exp_coeff = 0.0;        ///< A >= 0; multiplies ln(tau)^rho in the exponent
  double exp_root = 0.0;         ///< rho = 1/p in (0,1) when A > 0, stored as 0 otherwise
  double log_power = 0.0;        ///< alpha >= 0
  double loglog_power = 0.0;     ///< kappa, any real
  double logloglog_power = 0.0;  ///< lambda, any real (only the triple-log families use it)

  /// Unit scale times ln(tau)^alpha.
  static SvfExpr log_power_of(double alpha, double scale = 1.0);
  /// C * exp(A ln^rho tau) * ln^alpha tau.
  static SvfExpr exp_log(double exp_coeff, double exp_root, double alpha = 0.0,
                         double scale = 1.0);
};

bool operator==(const SvfExpr& a, const SvfExpr& b);

/// Throws DomainError when a field is out of range. Returns the expression
/// with exp_root canonicalised to 0 when exp_coeff == 0.
SvfExpr validated(const SvfExpr& f);

/// ln(tau_min): 1 without iterated logs, e with a ln ln factor, e^e with a
/// triple log. On [tau_min, inf) every factor is >= 1 and well defined.
double log_tau_min(const SvfExpr& f);

/// True when f(tau) -> infinity.
bool is_unbounded(const SvfExpr& f);

double eval_svf(const SvfExpr& f, double tau);
double eval_svf_log(const SvfExpr& f, double log_tau);
/// ln f(tau) given ln tau; never overflows.
double log_eval_svf_log(const SvfExpr& f, double log_tau);

/// Continuous extension of f used as an integrand below tau_min: the iterated
/// logarithms are clamped at their value 1 (ln ln tau -> ln max(ln tau, e)).
/// Agrees with eval_svf_log for ln tau >= log_tau_min(f). Defined for L >= 0.
double log_eval_extended(const SvfExpr& f, double log_tau);

/// f(c tau) / f(tau), computed without forming tau.
double slow_variation_ratio(const SvfExpr& f, double c, double log_tau);

/// Closed-form asymptotic convolution. Both factors must be pure log-type
/// (exp_coeff == 0) or both exponential-type with the same exp_root.
SvfExpr convolve_closed(const SvfExpr& f, const SvfExpr& g);

struct QuadratureReport {
  double value = 0.0;
  double relative_change = 0.0;  ///< |I_n - I_{n/2}| / |I_n| at acceptance
  long intervals = 0;
};

/// Stieltjes integral int_1^tau f(tau/s) dg(s) on a uniform grid in ln s,
/// trapezoid weights, refined by doubling from 2^12 intervals until the
/// relative change drops below 1e-4.
QuadratureReport convolve_numeric_report(const SvfExpr& f, const SvfExpr& g,
                                         double log_tau);
double convolve_numeric_log(const SvfExpr& f, const SvfExpr& g, double log_tau);
double convolve_numeric(const SvfExpr& f, const SvfExpr& g, double tau);

std::string to_string(const SvfExpr& f);

}  // namespace sbl
