#pragma once

// Marginal eigenvalue sequences: closed-form Karhunen-Loeve spectra, Widom
// asymptotics for stationary processes, degenerately self-similar measures,
// and the asymptotic counting functions N(t) ~ phi(1/t) of every family used
// by the small-ball formulas.

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "smallball/svf.hpp"

namespace sbl {

/// Nonincreasing positive sequence lambda_1 >= lambda_2 >= ... evaluated on
/// demand up to a truncation index. Values are also available in log form,
/// which the tensor code uses so products of many tiny factors neither
/// underflow nor pick up rounding at exact ties.
class EigenSequence {
 public:
  using LogEvaluator = std::function<double(double)>;  ///< n -> ln(lambda_n), n >= 1
  using TailBound = std::function<double(std::int64_t)>;

  EigenSequence(std::string name, LogEvaluator log_eval, std::int64_t n_max, TailBound tail,
                std::optional<SvfExpr> counting_asym = std::nullopt);

  /// Finite spectrum given explicitly (sorted nonincreasing, positive).
  /// The sequence is complete: the tail beyond the list is zero.
  static EigenSequence from_values(std::string name, std::vector<double> values,
                                   std::optional<SvfExpr> counting_asym = std::nullopt);

  const std::string& name() const { return name_; }
  std::int64_t n_max() const { return n_max_; }
  double operator()(std::int64_t n) const;
  double log_at(std::int64_t n) const;
  /// Upper estimate of sum_{n > N} lambda_n over the untruncated sequence.
  double tail_bound(std::int64_t N) const;
  /// True when nothing lies beyond n_max.
  bool complete() const { return tail_bound(n_max_) == 0.0; }
  const std::optional<SvfExpr>& counting_asym() const { return counting_asym_; }

  /// First `count` values (count <= n_max).
  std::vector<double> values(std::int64_t count) const;
  std::vector<double> log_values(std::int64_t count) const;
  /// Same sequence with a smaller truncation index.
  EigenSequence truncated(std::int64_t n_max) const;
  /// Scans 1..n_max; throws InvalidParameters on a non-positive or increasing entry.
  void check_invariants() const;

 private:
  std::string name_;
  LogEvaluator log_eval_;
  std::int64_t n_max_;
  TailBound tail_;
  std::optional<SvfExpr> counting_asym_;
};

enum class ClosedFormProcess { wiener, bridge };

/// Wiener: (pi (n - 1/2))^-2. Bridge: (pi n)^-2. Both on [0,1], Lebesgue measure.
EigenSequence closed_form_eigs(ClosedFormProcess process, std::int64_t n_max);

/// lambda_n = exp(log_first - log_decay (n-1)); log values stay exact for
/// integer parameters, so ties between products are exact too.
EigenSequence geometric_eigs(double log_first, double log_decay, std::int64_t n_max);

enum class SymbolRegime { subexponential, linear, superlinear_convex };

/// Spectral density h(xi) = exp(-G(xi)) of a stationary process.
struct SpectralExponent {
  std::function<double(double)> G;
  SymbolRegime regime = SymbolRegime::subexponential;
  std::string label;
};

/// Samples G at 1e2, 1e4, 1e6 and throws InvalidParameters when it is not
/// nondecreasing there or the growth of G(xi)/xi disagrees with the regime tag.
void validate_regime(const SpectralExponent& symbol);

/// Solves G(xi) = 2n ln(n/xi) for xi in (0, n) by bisection.
double widom_xi(const SpectralExponent& symbol, double n);

/// Widom eigenvalue asymptotics: exp(-G(pi n)) for subexponential symbols,
/// exp(-G(xi(n))) for convex superlinear ones. The linear regime has no
/// eigenvalue formula here and is rejected with InvalidParameters.
EigenSequence widom_eigs(const SpectralExponent& symbol, std::int64_t n_max,
                         std::optional<SvfExpr> counting_asym = std::nullopt);

/// Kernel s^b t^b / (s+t)^a on [0,1].
struct HomogeneousKernelParams {
  double a = 1.0;
  double b = 0.5;
  double c() const { return 2.0 * b - a + 1.0; }
  void validate() const;
};

struct SelfSimilarMeasure {
  int M = 2;
  int m = 1;  ///< 1-based index of the self-similar interval
  double delta = 0.5;
  std::vector<double> breakpoints;  ///< alpha_1 = 0 < ... < alpha_{M+1} = 1
  std::vector<double> levels;       ///< beta_1 .. beta_M

  double contraction() const { return breakpoints.at(m) - breakpoints.at(m - 1); }  ///< a
  double singular_point() const { return breakpoints.at(m - 1) / (1.0 - contraction()); }
  /// Checks shapes, 0 < delta < 1, ordering of breakpoints, and conditions on
  /// the levels (beta_1 = 0, endpoint normalisation). Ordering of levels is
  /// left to self_similar_atoms, which detects it as loss of monotonicity.
  void validate_structure() const;
  /// validate_structure plus the level inequalities.
  void validate() const;
};

struct Atom {
  double position;
  double weight;
};

struct AtomSet {
  std::vector<Atom> atoms;
  double residual_mass = 1.0;  ///< mass of the absolutely continuous remainder
  double total_weight() const;
};

/// Jumps of f_depth where f_{k+1} = S[f_k], f_0(t) = t. The similarity term
/// delta f(a^-1 (t - alpha_m)) acts on [alpha_m, alpha_{m+1}] only; elsewhere
/// the iterate is the step level beta_k. Atoms are listed level by level.
AtomSet self_similar_atoms(const SelfSimilarMeasure& mu, int depth);

/// Complete elliptic integral of the first kind K(k), 0 <= k < 1, by AGM.
double elliptic_K(double k);

// Marginal families with a known asymptotic counting function.
namespace family {
struct StationaryLogPow { double C; double p; };        ///< G ~ C ln^p xi, p > 1
struct StationaryPowLog { double q; double C; double p; };  ///< G ~ C xi^q ln^p xi
struct StationaryLinear { double C; };                   ///< G ~ C xi
struct StationaryLinLog { double C; double p; };         ///< G ~ C xi ln^p xi, convex
struct StationaryPolyGrowth { double q; };               ///< ln G ~ q ln xi, q > 1
struct StationarySuperPoly {};                           ///< ln G / ln xi -> inf
/// G ~ xi^q Phi(xi) (q <= 1) or xi Phi(xi) for a general slowly varying Phi.
struct StationaryGeneralSvf { double q; };
struct Homogeneous { HomogeneousKernelParams kernel; };
struct SelfSimilar { SelfSimilarMeasure measure; };
struct SelfSimilarIntegrated { SelfSimilarMeasure measure; int smoothness; };
}  // namespace family

using MarginalFamily =
    std::variant<family::StationaryLogPow, family::StationaryPowLog, family::StationaryLinear,
                 family::StationaryLinLog, family::StationaryPolyGrowth,
                 family::StationarySuperPoly, family::StationaryGeneralSvf, family::Homogeneous,
                 family::SelfSimilar, family::SelfSimilarIntegrated>;

/// N(t) ~ phi(1/t); returns phi as an SvfExpr (its argument tau = 1/t, so
/// ln tau = ln(1/t)).
SvfExpr marginal_counting_asym(const MarginalFamily& fam);

std::string family_name(const MarginalFamily& fam);

}  // namespace sbl
