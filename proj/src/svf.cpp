#include "smallball/svf.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>
#include <vector>

#include "smallball/errors.hpp"

namespace sbl {
namespace {

constexpr double kMaxLogDouble = 709.78;
constexpr double kExpRootTolerance = 1e-14;

double checked_exp(double log_value, const char* what) {
  if (!(log_value <= kMaxLogDouble)) {
    throw OverflowError(std::string(what) + ": exponent " + std::to_string(log_value) +
                        " exceeds the double range");
  }
  return std::exp(log_value);
}

}  // namespace

SvfExpr SvfExpr::log_power_of(double alpha, double scale) {
  SvfExpr f;
  f.scale = scale;
  f.log_power = alpha;
  return validated(f);
}

SvfExpr SvfExpr::exp_log(double exp_coeff, double exp_root, double alpha, double scale) {
  SvfExpr f;
  f.scale = scale;
  f.exp_coeff = exp_coeff;
  f.exp_root = exp_root;
  f.log_power = alpha;
  return validated(f);
}

bool operator==(const SvfExpr& a, const SvfExpr& b) {
  return a.scale == b.scale && a.exp_coeff == b.exp_coeff && a.exp_root == b.exp_root &&
         a.log_power == b.log_power && a.loglog_power == b.loglog_power &&
         a.logloglog_power == b.logloglog_power;
}

SvfExpr validated(const SvfExpr& f) {
  auto finite = [](double x) { return std::isfinite(x); };
  if (!finite(f.scale) || f.scale <= 0.0) throw DomainError("SvfExpr: scale must be > 0");
  if (!finite(f.exp_coeff) || f.exp_coeff < 0.0)
    throw DomainError("SvfExpr: exp_coeff must be >= 0");
  if (!finite(f.log_power) || f.log_power < 0.0)
    throw DomainError("SvfExpr: log_power must be >= 0");
  if (!finite(f.loglog_power) || !finite(f.logloglog_power))
    throw DomainError("SvfExpr: iterated-log powers must be finite");
  SvfExpr out = f;
  if (f.exp_coeff == 0.0) {
    out.exp_root = 0.0;
  } else if (!(f.exp_root > 0.0 && f.exp_root < 1.0)) {
    throw DomainError("SvfExpr: exp_root must lie in (0,1) when exp_coeff > 0");
  }
  return out;
}

double log_tau_min(const SvfExpr& f) {
  if (f.logloglog_power != 0.0) return std::exp(std::numbers::e);
  if (f.loglog_power != 0.0) return std::numbers::e;
  return 1.0;
}

bool is_unbounded(const SvfExpr& f) {
  if (f.exp_coeff > 0.0 || f.log_power > 0.0) return true;
  if (f.loglog_power != 0.0) return f.loglog_power > 0.0;
  return f.logloglog_power > 0.0;
}

double log_eval_svf_log(const SvfExpr& f, double log_tau) {
  if (!(log_tau >= log_tau_min(f))) {
    throw DomainError("eval_svf: ln(tau) = " + std::to_string(log_tau) + " below ln(tau_min) = " +
                      std::to_string(log_tau_min(f)));
  }
  return log_eval_extended(f, log_tau);
}

double log_eval_extended(const SvfExpr& f, double log_tau) {
  if (!(log_tau >= 0.0)) throw DomainError("SvfExpr extension needs ln(tau) >= 0");
  const double L = log_tau;
  double out = std::log(f.scale);
  if (f.exp_coeff > 0.0) out += f.exp_coeff * std::pow(L, f.exp_root);
  if (f.log_power != 0.0) out += f.log_power * std::log(L);  // -inf at L = 0
  if (f.loglog_power != 0.0) out += f.loglog_power * std::log(std::log(std::max(L, std::numbers::e)));
  if (f.logloglog_power != 0.0) {
    const double floor = std::exp(std::numbers::e);
    out += f.logloglog_power * std::log(std::log(std::log(std::max(L, floor))));
  }
  return out;
}

double eval_svf_log(const SvfExpr& f, double log_tau) {
  return checked_exp(log_eval_svf_log(f, log_tau), "eval_svf");
}

double eval_svf(const SvfExpr& f, double tau) {
  if (!(tau > 0.0) || !std::isfinite(tau)) throw DomainError("eval_svf: tau must be finite and > 0");
  return eval_svf_log(f, std::log(tau));
}

double slow_variation_ratio(const SvfExpr& f, double c, double log_tau) {
  return std::exp(log_eval_svf_log(f, log_tau + std::log(c)) - log_eval_svf_log(f, log_tau));
}

SvfExpr convolve_closed(const SvfExpr& f_in, const SvfExpr& g_in) {
  const SvfExpr f = validated(f_in);
  const SvfExpr g = validated(g_in);
  SvfExpr out;
  out.loglog_power = f.loglog_power + g.loglog_power;
  out.logloglog_power = f.logloglog_power + g.logloglog_power;

  const bool f_exp = f.exp_coeff > 0.0;
  const bool g_exp = g.exp_coeff > 0.0;
  if (!f_exp && !g_exp) {
    // Log-power regime. A factor without a power of ln must carry its own
    // growth through a nondecreasing unbounded iterated-log tail.
    for (const SvfExpr* h : {&f, &g}) {
      if (h->log_power == 0.0 && !is_unbounded(*h)) {
        throw UnsupportedConvolution(
            "convolve_closed: a factor with log_power 0 must have a nondecreasing unbounded tail, "
            "got " + to_string(*h));
      }
    }
    const double a = f.log_power;
    const double b = g.log_power;
    out.log_power = a + b;
    out.scale = f.scale * g.scale *
                std::exp(std::lgamma(a + 1.0) + std::lgamma(b + 1.0) - std::lgamma(a + b + 1.0));
    return out;
  }
  if (f_exp && g_exp) {
    if (std::abs(f.exp_root - g.exp_root) > kExpRootTolerance) {
      throw UnsupportedConvolution("convolve_closed: exponential factors with different roots");
    }
    const double p = 1.0 / f.exp_root;
    const double p_conj = p / (p - 1.0);
    // exp_coeff holds a^{1/p'}; recover the additive parameters a, b.
    const double a = std::pow(f.exp_coeff, p_conj);
    const double b = std::pow(g.exp_coeff, p_conj);
    const double gamma = f.log_power + g.log_power + 1.0 / (2.0 * p);
    out.exp_root = f.exp_root;
    out.exp_coeff = std::pow(a + b, 1.0 / p_conj);
    out.log_power = gamma;
    const double log_factor = 0.5 * std::log(2.0 * std::numbers::pi / (p - 1.0)) +
                              (f.log_power + 0.5) * std::log(a) +
                              (g.log_power + 0.5) * std::log(b) - (gamma + 0.5) * std::log(a + b);
    out.scale = f.scale * g.scale * std::exp(log_factor);
    return out;
  }
  throw UnsupportedConvolution("convolve_closed: mixed log-power and exponential regimes");
}

namespace {

double stieltjes_trapezoid(const SvfExpr& f, const SvfExpr& g, double T, long n,
                           std::vector<double>& logf, std::vector<double>& logg) {
  logf.resize(n + 1);
  logg.resize(n + 1);
  const double h = T / static_cast<double>(n);
  for (long i = 0; i <= n; ++i) {
    const double s = (i == n) ? T : h * static_cast<double>(i);
    logf[i] = log_eval_extended(f, T - s);
    logg[i] = log_eval_extended(g, s);
  }
  const double shift_f = *std::max_element(logf.begin(), logf.end());
  const double shift_g = *std::max_element(logg.begin(), logg.end());
  double sum = 0.0;
  double f_prev = std::exp(logf[0] - shift_f);
  double g_prev = std::exp(logg[0] - shift_g);
  for (long i = 1; i <= n; ++i) {
    const double f_cur = std::exp(logf[i] - shift_f);
    const double g_cur = std::exp(logg[i] - shift_g);
    if (g_cur < g_prev * (1.0 - 1e-12)) {
      throw DomainError("convolve_numeric: integrator g decreases on [1, tau]");
    }
    sum += 0.5 * (f_prev + f_cur) * (g_cur - g_prev);
    f_prev = f_cur;
    g_prev = g_cur;
  }
  if (!(sum > 0.0)) return -std::numeric_limits<double>::infinity();
  return std::log(sum) + shift_f + shift_g;
}

}  // namespace

QuadratureReport convolve_numeric_report(const SvfExpr& f_in, const SvfExpr& g_in,
                                         double log_tau) {
  const SvfExpr f = validated(f_in);
  const SvfExpr g = validated(g_in);
  const double need = 2.0 * std::max(log_tau_min(f), log_tau_min(g));
  if (!(log_tau >= need)) {
    throw DomainError("convolve_numeric: need ln(tau) >= " + std::to_string(need) + ", got " +
                      std::to_string(log_tau));
  }
  constexpr long kFirst = 1L << 12;
  constexpr long kLast = 1L << 22;
  std::vector<double> logf;
  std::vector<double> logg;
  double prev = stieltjes_trapezoid(f, g, log_tau, kFirst, logf, logg);
  for (long n = 2 * kFirst; n <= kLast; n *= 2) {
    const double cur = stieltjes_trapezoid(f, g, log_tau, n, logf, logg);
    const double change = std::abs(std::expm1(prev - cur));
    if (change < 1e-4) {
      return {checked_exp(cur, "convolve_numeric"), change, n};
    }
    prev = cur;
  }
  throw Error("convolve_numeric: quadrature did not reach 1e-4 relative change by 2^22 intervals");
}

double convolve_numeric_log(const SvfExpr& f, const SvfExpr& g, double log_tau) {
  return convolve_numeric_report(f, g, log_tau).value;
}

double convolve_numeric(const SvfExpr& f, const SvfExpr& g, double tau) {
  if (!(tau > 1.0) || !std::isfinite(tau)) throw DomainError("convolve_numeric: tau must be > 1");
  return convolve_numeric_log(f, g, std::log(tau));
}

std::string to_string(const SvfExpr& f) {
  std::ostringstream os;
  os.precision(6);
  os << f.scale;
  if (f.exp_coeff > 0.0) os << "*exp(" << f.exp_coeff << "*L^" << f.exp_root << ")";
  if (f.log_power != 0.0) os << "*L^" << f.log_power;
  if (f.loglog_power != 0.0) os << "*(lnL)^" << f.loglog_power;
  if (f.logloglog_power != 0.0) os << "*(lnlnL)^" << f.logloglog_power;
  return os.str();
}

}  // namespace sbl
