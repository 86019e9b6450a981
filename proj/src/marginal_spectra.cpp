#include "smallball/marginal_spectra.hpp"

#include <cmath>
#include <numbers>
#include <sstream>
#include <utility>

#include "smallball/errors.hpp"

namespace sbl {

EigenSequence::EigenSequence(std::string name, LogEvaluator log_eval, std::int64_t n_max,
                             TailBound tail, std::optional<SvfExpr> counting_asym)
    : name_(std::move(name)),
      log_eval_(std::move(log_eval)),
      n_max_(n_max),
      tail_(std::move(tail)),
      counting_asym_(std::move(counting_asym)) {
  if (n_max_ < 1) throw InvalidParameters("EigenSequence '" + name_ + "': n_max must be >= 1");
}

EigenSequence EigenSequence::from_values(std::string name, std::vector<double> values,
                                         std::optional<SvfExpr> counting_asym) {
  if (values.empty()) throw InvalidParameters("EigenSequence '" + name + "': empty value list");
  auto data = std::make_shared<const std::vector<double>>(std::move(values));
  // Suffix sums give the exact tail of the finite list.
  auto suffix = std::make_shared<std::vector<double>>(data->size() + 1, 0.0);
  for (std::size_t i = data->size(); i-- > 0;) (*suffix)[i] = (*suffix)[i + 1] + (*data)[i];
  const auto n = static_cast<std::int64_t>(data->size());
  return EigenSequence(
      std::move(name),
      [data](double k) { return std::log((*data)[static_cast<std::size_t>(k) - 1]); }, n,
      [suffix, n](std::int64_t N) {
        if (N >= n) return 0.0;
        return (*suffix)[static_cast<std::size_t>(std::max<std::int64_t>(N, 0))];
      },
      std::move(counting_asym));
}

double EigenSequence::log_at(std::int64_t n) const {
  if (n < 1 || n > n_max_) {
    throw DomainError("EigenSequence '" + name_ + "': index " + std::to_string(n) +
                      " outside [1, " + std::to_string(n_max_) + "]");
  }
  return log_eval_(static_cast<double>(n));
}

double EigenSequence::operator()(std::int64_t n) const { return std::exp(log_at(n)); }

double EigenSequence::tail_bound(std::int64_t N) const { return tail_(N); }

std::vector<double> EigenSequence::values(std::int64_t count) const {
  std::vector<double> out(static_cast<std::size_t>(count));
  for (std::int64_t n = 1; n <= count; ++n) out[n - 1] = (*this)(n);
  return out;
}

std::vector<double> EigenSequence::log_values(std::int64_t count) const {
  std::vector<double> out(static_cast<std::size_t>(count));
  for (std::int64_t n = 1; n <= count; ++n) out[n - 1] = log_at(n);
  return out;
}

EigenSequence EigenSequence::truncated(std::int64_t n_max) const {
  if (n_max > n_max_) {
    throw DomainError("EigenSequence '" + name_ + "': cannot extend truncation");
  }
  return EigenSequence(name_, log_eval_, n_max, tail_, counting_asym_);
}

void EigenSequence::check_invariants() const {
  double prev = log_at(1);
  if (!std::isfinite(prev)) throw InvalidParameters(name_ + ": lambda_1 is not positive");
  for (std::int64_t n = 2; n <= n_max_; ++n) {
    const double cur = log_at(n);
    if (!std::isfinite(cur)) {
      throw InvalidParameters(name_ + ": lambda_" + std::to_string(n) + " is not positive");
    }
    if (cur > prev) {
      throw InvalidParameters(name_ + ": sequence increases at n = " + std::to_string(n));
    }
    prev = cur;
  }
}

namespace {

// sum_{n > N} lambda_n <= lambda_{N+1} + int_{N+1}^inf lambda(x) dx for a
// nonincreasing lambda; the integral is taken in v = ln x.
double integral_tail(const EigenSequence::LogEvaluator& log_eval, std::int64_t N) {
  const double x0 = static_cast<double>(N + 1);
  const double first = std::exp(log_eval(x0));
  constexpr double h = 1.0 / 32.0;
  double acc = 0.5 * first * x0 * h;
  for (int k = 1; k < 40000; ++k) {
    const double x = x0 * std::exp(h * k);
    const double term = std::exp(log_eval(x)) * x * h;
    acc += term;
    if (term < 1e-30 * acc || term == 0.0) break;
  }
  return first + acc;
}

}  // namespace

EigenSequence closed_form_eigs(ClosedFormProcess process, std::int64_t n_max) {
  const double pi = std::numbers::pi;
  if (process == ClosedFormProcess::wiener) {
    return EigenSequence(
        "wiener", [pi](double n) { return -2.0 * std::log(pi * (n - 0.5)); }, n_max,
        [pi](std::int64_t N) {
          if (N <= 0) return 0.5;
          return 1.0 / (pi * pi * (static_cast<double>(N) - 0.5));
        });
  }
  return EigenSequence(
      "bridge", [pi](double n) { return -2.0 * std::log(pi * n); }, n_max,
      [pi](std::int64_t N) {
        if (N <= 0) return 1.0 / 6.0;
        return 1.0 / (pi * pi * static_cast<double>(N));
      });
}

EigenSequence geometric_eigs(double log_first, double log_decay, std::int64_t n_max) {
  if (!(log_decay > 0.0)) throw InvalidParameters("geometric_eigs: log_decay must be > 0");
  std::ostringstream name;
  name << "geometric(" << log_first << "," << log_decay << ")";
  return EigenSequence(
      name.str(), [=](double n) { return log_first - log_decay * (n - 1.0); }, n_max,
      [=](std::int64_t N) {
        const double n = static_cast<double>(std::max<std::int64_t>(N, 0));
        return std::exp(log_first - log_decay * n) / -std::expm1(-log_decay);
      });
}

void validate_regime(const SpectralExponent& symbol) {
  const double xs[3] = {1e2, 1e4, 1e6};
  double g[3];
  double ratio[3];
  for (int i = 0; i < 3; ++i) {
    g[i] = symbol.G(xs[i]);
    ratio[i] = g[i] / xs[i];
  }
  if (!(g[0] <= g[1] && g[1] <= g[2])) {
    throw InvalidParameters("symbol '" + symbol.label + "' is not nondecreasing on [1e2, 1e6]");
  }
  bool ok = false;
  switch (symbol.regime) {
    case SymbolRegime::subexponential:
      ok = ratio[0] > ratio[1] && ratio[1] > ratio[2];
      break;
    case SymbolRegime::linear:
      ok = std::abs(ratio[2] / ratio[1] - 1.0) <= 0.1;
      break;
    case SymbolRegime::superlinear_convex:
      ok = ratio[0] < ratio[1] && ratio[1] < ratio[2];
      break;
  }
  if (!ok) {
    throw InvalidParameters("symbol '" + symbol.label +
                            "': sampled growth of G(xi)/xi disagrees with the regime tag");
  }
}

double widom_xi(const SpectralExponent& symbol, double n) {
  auto h = [&](double xi) { return symbol.G(xi) - 2.0 * n * std::log(n / xi); };
  double lo = n * 1e-12;
  double hi = n;
  if (!(h(lo) < 0.0) || !(h(hi) > 0.0)) {
    throw RootNotBracketed("widom_xi: G(xi) = 2n ln(n/xi) has no sign change on (0, n) for n = " +
                           std::to_string(n) + " (regime tag of '" + symbol.label + "'?)");
  }
  for (int it = 0; it < 400; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    (h(mid) < 0.0 ? lo : hi) = mid;
  }
  // Both ends are within one ulp; keep the one with the smaller residual.
  return std::abs(h(lo)) <= std::abs(h(hi)) ? lo : hi;
}

EigenSequence widom_eigs(const SpectralExponent& symbol, std::int64_t n_max,
                         std::optional<SvfExpr> counting_asym) {
  EigenSequence::LogEvaluator log_eval;
  const double pi = std::numbers::pi;
  switch (symbol.regime) {
    case SymbolRegime::subexponential:
      log_eval = [G = symbol.G, pi](double n) { return -G(pi * n); };
      break;
    case SymbolRegime::superlinear_convex:
      log_eval = [symbol](double n) { return -symbol.G(widom_xi(symbol, n)); };
      break;
    case SymbolRegime::linear:
      throw InvalidParameters("widom_eigs: linear symbols have only a counting asymptotic");
  }
  // Fail early on an inconsistent tag rather than at first use.
  log_eval(1.0);
  return EigenSequence("widom(" + symbol.label + ")", log_eval, n_max,
                       [log_eval](std::int64_t N) { return integral_tail(log_eval, N); },
                       std::move(counting_asym));
}

void HomogeneousKernelParams::validate() const {
  if (!(a > 0.0)) throw DomainError("homogeneous kernel: a must be > 0");
  if (!(c() > 0.0)) throw DomainError("homogeneous kernel: c = 2b - a + 1 must be > 0");
}

void SelfSimilarMeasure::validate_structure() const {
  constexpr double tol = 1e-12;
  if (M < 2) throw InvalidParameters("self-similar measure: M must be >= 2");
  if (m < 1 || m > M) throw InvalidParameters("self-similar measure: m must lie in [1, M]");
  if (!(delta > 0.0 && delta < 1.0)) {
    throw InvalidParameters("self-similar measure: delta must lie in (0,1)");
  }
  if (static_cast<int>(breakpoints.size()) != M + 1) {
    throw InvalidParameters("self-similar measure: need M+1 breakpoints");
  }
  if (static_cast<int>(levels.size()) != M) {
    throw InvalidParameters("self-similar measure: need M levels");
  }
  if (breakpoints.front() != 0.0 || breakpoints.back() != 1.0) {
    throw InvalidParameters("self-similar measure: breakpoints must start at 0 and end at 1");
  }
  for (int k = 0; k < M; ++k) {
    if (!(breakpoints[k] < breakpoints[k + 1])) {
      throw InvalidParameters("self-similar measure: breakpoints must increase");
    }
  }
  if (std::abs(levels.front()) > tol) {
    throw InvalidParameters("self-similar measure: beta_1 must be 0");
  }
  const double top = levels.back() + (m == M ? delta : 0.0);
  if (std::abs(top - 1.0) > tol) {
    throw InvalidParameters("self-similar measure: need [m = M] delta + beta_M = 1");
  }
}

void SelfSimilarMeasure::validate() const {
  validate_structure();
  for (int k = 0; k + 1 < M; ++k) {
    if (!(levels[k] < levels[k + 1])) {
      throw InvalidParameters("self-similar measure: levels must increase");
    }
  }
  if (m < M && !(delta * levels.back() + levels[m - 1] < levels[m])) {
    throw InvalidParameters("self-similar measure: need delta beta_M + beta_m < beta_{m+1}");
  }
}

double AtomSet::total_weight() const {
  double s = 0.0;
  for (const Atom& a : atoms) s += a.weight;
  return s;
}

AtomSet self_similar_atoms(const SelfSimilarMeasure& mu, int depth) {
  mu.validate_structure();
  if (depth < 0) throw InvalidParameters("self_similar_atoms: depth must be >= 0");
  const double a = mu.contraction();
  const double origin = mu.breakpoints[mu.m - 1];

  // Jump at breakpoint alpha_j (j = 2..M, 1-based): start level of interval
  // j minus end level of interval j-1; the self-similar interval ends at
  // beta_m + delta.
  std::vector<Atom> jumps;
  for (int j = 2; j <= mu.M; ++j) {
    const double left = mu.levels[j - 2] + (j - 1 == mu.m ? mu.delta : 0.0);
    const double jump = mu.levels[j - 1] - left;
    if (!(jump > 0.0)) {
      throw InvalidParameters("self_similar_atoms: iterate is not increasing at breakpoint " +
                              std::to_string(j) + " (jump " + std::to_string(jump) + ")");
    }
    jumps.push_back({mu.breakpoints[j - 1], jump});
  }

  AtomSet out;
  out.atoms.reserve(static_cast<std::size_t>(depth) * jumps.size());
  double scale = 1.0;
  for (int level = 0; level < depth; ++level) {
    for (Atom& j : jumps) {
      out.atoms.push_back({j.position, j.weight * scale});
      j.position = origin + a * j.position;
    }
    scale *= mu.delta;
  }
  out.residual_mass = scale;
  return out;
}

double elliptic_K(double k) {
  if (!(k >= 0.0 && k < 1.0)) throw DomainError("elliptic_K: need 0 <= k < 1");
  double a = 1.0;
  double b = std::sqrt((1.0 - k) * (1.0 + k));
  for (int it = 0; it < 64 && std::abs(a - b) > 4e-16 * a; ++it) {
    const double an = 0.5 * (a + b);
    b = std::sqrt(a * b);
    a = an;
  }
  return std::numbers::pi / (2.0 * a);
}

namespace {

struct CountingVisitor {
  SvfExpr operator()(const family::StationaryLogPow& f) const {
    if (!(f.C > 0.0 && f.p > 1.0)) throw DomainError("stationary-logpow: need C > 0, p > 1");
    return validated(SvfExpr::exp_log(std::pow(f.C, -1.0 / f.p), 1.0 / f.p, 0.0,
                                      1.0 / std::numbers::pi));
  }
  SvfExpr operator()(const family::StationaryPowLog& f) const {
    if (!(f.q > 0.0 && f.q <= 1.0 && f.C > 0.0)) {
      throw DomainError("stationary-powlog: need 0 < q <= 1, C > 0");
    }
    if (f.q == 1.0 && !(f.p < 0.0)) {
      throw DomainError("stationary-powlog: q = 1 needs p < 0 (Phi -> 0)");
    }
    SvfExpr out;
    out.scale = std::pow(std::pow(f.q, f.p) / f.C, 1.0 / f.q) / std::numbers::pi;
    out.log_power = 1.0 / f.q;
    out.loglog_power = -f.p / f.q;
    return validated(out);
  }
  SvfExpr operator()(const family::StationaryLinear& f) const {
    if (!(f.C > 0.0)) throw DomainError("stationary-linear: need C > 0");
    const double x = std::numbers::pi / (2.0 * f.C);
    const double coeff =
        elliptic_K(std::tanh(x)) / (std::numbers::pi * elliptic_K(1.0 / std::cosh(x)));
    return SvfExpr::log_power_of(1.0, coeff);
  }
  SvfExpr operator()(const family::StationaryLinLog& f) const {
    if (!(f.C > 0.0 && f.p > 0.0)) throw DomainError("stationary-linlog: need C > 0, p > 0");
    SvfExpr out;
    out.scale = 1.0 / (2.0 * f.p);
    out.log_power = 1.0;
    out.logloglog_power = -1.0;
    return validated(out);
  }
  SvfExpr operator()(const family::StationaryPolyGrowth& f) const {
    if (!(f.q > 1.0)) throw DomainError("stationary-polygrowth: need q > 1");
    SvfExpr out;
    out.scale = 1.0 / (2.0 - 2.0 / f.q);
    out.log_power = 1.0;
    out.loglog_power = -1.0;
    return validated(out);
  }
  SvfExpr operator()(const family::StationarySuperPoly&) const {
    SvfExpr out;
    out.scale = 0.5;
    out.log_power = 1.0;
    out.loglog_power = -1.0;
    return validated(out);
  }
  SvfExpr operator()(const family::StationaryGeneralSvf&) const {
    throw UnsupportedFamily(
        "stationary symbol with a general slowly varying factor: only the power-log particular "
        "cases have a closed-form counting function");
  }
  SvfExpr operator()(const family::Homogeneous& f) const {
    f.kernel.validate();
    return SvfExpr::log_power_of(
        2.0, 1.0 / (2.0 * std::numbers::pi * std::numbers::pi * f.kernel.c()));
  }
  SvfExpr operator()(const family::SelfSimilar& f) const {
    f.measure.validate();
    const double coeff =
        (f.measure.M - 1) / std::log(1.0 / (f.measure.contraction() * f.measure.delta));
    return SvfExpr::log_power_of(1.0, coeff);
  }
  SvfExpr operator()(const family::SelfSimilarIntegrated& f) const {
    f.measure.validate();
    if (f.smoothness < 0) throw DomainError("selfsimilar-integrated: smoothness must be >= 0");
    const double shrink =
        f.measure.contraction() * std::pow(f.measure.delta, 2.0 * f.smoothness + 1.0);
    return SvfExpr::log_power_of(1.0, (f.measure.M - 1) / std::log(1.0 / shrink));
  }
};

struct NameVisitor {
  std::string operator()(const family::StationaryLogPow&) const { return "stationary-logpow"; }
  std::string operator()(const family::StationaryPowLog&) const { return "stationary-powlog"; }
  std::string operator()(const family::StationaryLinear&) const { return "stationary-linear"; }
  std::string operator()(const family::StationaryLinLog&) const { return "stationary-linlog"; }
  std::string operator()(const family::StationaryPolyGrowth&) const {
    return "stationary-polygrowth";
  }
  std::string operator()(const family::StationarySuperPoly&) const {
    return "stationary-superpoly";
  }
  std::string operator()(const family::StationaryGeneralSvf&) const {
    return "stationary-general-svf";
  }
  std::string operator()(const family::Homogeneous&) const { return "homogeneous"; }
  std::string operator()(const family::SelfSimilar&) const { return "selfsimilar"; }
  std::string operator()(const family::SelfSimilarIntegrated&) const {
    return "selfsimilar-integrated";
  }
};

}  // namespace

SvfExpr marginal_counting_asym(const MarginalFamily& fam) {
  return std::visit(CountingVisitor{}, fam);
}

std::string family_name(const MarginalFamily& fam) { return std::visit(NameVisitor{}, fam); }

}  // namespace sbl
