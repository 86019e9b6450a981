#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "smallball/errors.hpp"
#include "smallball/marginal_spectra.hpp"
#include "smallball/nystrom.hpp"

using namespace sbl;

namespace {

constexpr double kPi = std::numbers::pi;

SelfSimilarMeasure half_measure() {
  SelfSimilarMeasure mu;
  mu.M = 2;
  mu.m = 1;
  mu.delta = 0.5;
  mu.breakpoints = {0.0, 0.5, 1.0};
  mu.levels = {0.0, 1.0};
  return mu;
}

SpectralExponent log_square() {
  return {[](double x) { return std::pow(std::log(x), 2.0); }, SymbolRegime::subexponential,
          "ln^2"};
}

SpectralExponent square() {
  return {[](double x) { return x * x; }, SymbolRegime::superlinear_convex, "xi^2"};
}

std::int64_t count_above(const EigenSequence& seq, double t) {
  std::int64_t n = 0;
  while (n < seq.n_max() && seq(n + 1) > t) ++n;
  return n;
}

}  // namespace

TEST(ClosedForm, FirstEigenvaluesAgainstNystrom) {
  const Quadrature grid = midpoint_grid(0.0, 1.0, 2000);
  const auto w = nystrom_eigs(wiener_kernel, grid);
  const auto b = nystrom_eigs(bridge_kernel, grid);
  const auto W = closed_form_eigs(ClosedFormProcess::wiener, 10);
  const auto B = closed_form_eigs(ClosedFormProcess::bridge, 10);
  EXPECT_NEAR(W(1), 4.0 / (kPi * kPi), 1e-15);
  EXPECT_NEAR(B(1), 1.0 / (kPi * kPi), 1e-15);
  EXPECT_NEAR(w[0], W(1), 1e-3);
  EXPECT_NEAR(b[0], B(1), 1e-3);
  for (int n = 2; n <= 5; ++n) {
    EXPECT_NEAR(w[n - 1], W(n), 1e-3 * W(n)) << n;
    EXPECT_NEAR(b[n - 1], B(n), 1e-3 * B(n)) << n;
  }
}

TEST(ClosedForm, StrictlyDecreasingAndTail) {
  const auto W = closed_form_eigs(ClosedFormProcess::wiener, 1000);
  for (int n = 1; n < 1000; ++n) EXPECT_GT(W(n) / W(n + 1), 1.0);
  EXPECT_NO_THROW(W.check_invariants());
  double sum = 0.0;
  for (int n = 1; n <= 1000; ++n) sum += W(n);
  // The full trace of min(s,t) on [0,1] is 1/2.
  EXPECT_NEAR(sum + W.tail_bound(1000), 0.5, 1e-6);
  EXPECT_GE(sum + W.tail_bound(1000), 0.5);
  EXPECT_THROW(W(1001), DomainError);
  EXPECT_THROW(W(0), DomainError);
}

TEST(EigenSequenceType, InvariantsAndTruncation) {
  EXPECT_THROW(EigenSequence::from_values("x", {1.0, 2.0}).check_invariants(), InvalidParameters);
  EXPECT_THROW(EigenSequence::from_values("x", {1.0, -1.0}).check_invariants(), InvalidParameters);
  const auto seq = EigenSequence::from_values("x", {4.0, 2.0, 1.0});
  EXPECT_TRUE(seq.complete());
  EXPECT_DOUBLE_EQ(seq.tail_bound(0), 7.0);
  EXPECT_DOUBLE_EQ(seq.tail_bound(1), 3.0);
  const auto g = geometric_eigs(0.0, 1.0, 50);
  EXPECT_FALSE(g.complete());
  EXPECT_EQ(g.truncated(10).n_max(), 10);
  EXPECT_THROW(g.truncated(60), DomainError);
  EXPECT_NEAR(g.tail_bound(0), 1.0 / (1.0 - std::exp(-1.0)), 1e-14);
}

TEST(Widom, SubexponentialDirectSubstitution) {
  const auto seq = widom_eigs(log_square(), 100);
  EXPECT_NEAR(seq(1), 0.269710393704598807542, 1e-12);
}

TEST(Widom, SuperlinearBisection) {
  const SpectralExponent G = square();
  const double xi = widom_xi(G, 10.0);
  EXPECT_LE(std::abs(xi * xi - 20.0 * std::log(10.0 / xi)), 1e-9);
  EXPECT_NEAR(xi, 4.18, 0.01);
  for (double n : {1.0, 2.0, 7.0, 100.0, 1e4, 1e6}) {
    const double x = widom_xi(G, n);
    EXPECT_LT(x, n);
    EXPECT_LE(std::abs(x * x - 2.0 * n * std::log(n / x)), 1e-9 * std::max(1.0, x * x)) << n;
  }
  const auto seq = widom_eigs(G, 2000);
  EXPECT_NO_THROW(seq.check_invariants());
}

TEST(Widom, RegimeChecks) {
  SpectralExponent lin{[](double x) { return 2.0 * x; }, SymbolRegime::subexponential, "2xi"};
  EXPECT_THROW(validate_regime(lin), InvalidParameters);
  lin.regime = SymbolRegime::linear;
  EXPECT_NO_THROW(validate_regime(lin));
  EXPECT_THROW(widom_eigs(lin, 10), InvalidParameters);
  SpectralExponent wrong = square();
  wrong.regime = SymbolRegime::subexponential;
  EXPECT_THROW(validate_regime(wrong), InvalidParameters);
  SpectralExponent flat{[](double) { return 1e9; }, SymbolRegime::superlinear_convex, "const"};
  EXPECT_THROW(widom_xi(flat, 1.0), RootNotBracketed);
}

TEST(Widom, CountingMatchesLogPowAsymptotic) {
  const double C = 1.0;
  const double p = 2.0;
  const auto seq = widom_eigs(log_square(), 200000);
  const SvfExpr phi = marginal_counting_asym(family::StationaryLogPow{C, p});
  double previous = 1e300;
  for (std::int64_t n : {10000, 100000}) {
    const double t = seq(n);
    const double empirical = static_cast<double>(count_above(seq, t * (1.0 - 1e-12)));
    const double ratio = empirical / eval_svf_log(phi, -std::log(t));
    EXPECT_GE(ratio, 0.7);
    EXPECT_LE(ratio, 1.3);
    EXPECT_LE(std::abs(ratio - 1.0), previous + 1e-9);
    previous = std::abs(ratio - 1.0);
  }
}

TEST(CountingAsym, PublishedConstants) {
  HomogeneousKernelParams k{1.0, 0.5};
  const SvfExpr h = marginal_counting_asym(family::Homogeneous{k});
  EXPECT_EQ(h.log_power, 2.0);
  EXPECT_NEAR(h.scale, 1.0 / (2.0 * kPi * kPi), 1e-15);

  const SvfExpr s = marginal_counting_asym(family::SelfSimilar{half_measure()});
  EXPECT_EQ(s.log_power, 1.0);
  EXPECT_NEAR(s.scale, 1.0 / std::log(4.0), 1e-15);
  EXPECT_NEAR(s.scale, 0.7213, 1e-4);

  const SvfExpr lin = marginal_counting_asym(family::StationaryLinear{10.0});
  EXPECT_NEAR(lin.scale, 0.154352179915501132890813655906, 1e-12);

  const SvfExpr logpow = marginal_counting_asym(family::StationaryLogPow{4.0, 2.0});
  EXPECT_NEAR(logpow.scale, 1.0 / kPi, 1e-15);
  EXPECT_NEAR(logpow.exp_coeff, 0.5, 1e-15);
  EXPECT_EQ(logpow.exp_root, 0.5);

  const SvfExpr poly = marginal_counting_asym(family::StationaryPolyGrowth{3.0});
  EXPECT_NEAR(poly.scale, 0.75, 1e-15);
  EXPECT_EQ(poly.loglog_power, -1.0);

  const SvfExpr linlog = marginal_counting_asym(family::StationaryLinLog{1.0, 2.0});
  EXPECT_NEAR(linlog.scale, 0.25, 1e-15);
  EXPECT_EQ(linlog.logloglog_power, -1.0);

  const SvfExpr integ =
      marginal_counting_asym(family::SelfSimilarIntegrated{half_measure(), 1});
  EXPECT_NEAR(integ.scale, 1.0 / std::log(16.0), 1e-15);
}

TEST(CountingAsym, Rejections) {
  EXPECT_THROW(marginal_counting_asym(family::StationaryGeneralSvf{0.5}), UnsupportedFamily);
  EXPECT_THROW(marginal_counting_asym(family::StationaryLogPow{1.0, 1.0}), DomainError);
  EXPECT_THROW(marginal_counting_asym(family::StationaryPowLog{1.0, 1.0, 1.0}), DomainError);
  EXPECT_THROW(marginal_counting_asym(family::Homogeneous{{1.0, -0.5}}), DomainError);
}

TEST(EllipticK, KnownValues) {
  EXPECT_NEAR(elliptic_K(0.0), kPi / 2.0, 1e-15);
  EXPECT_NEAR(elliptic_K(1.0 / std::sqrt(2.0)), 1.8540746773013719184, 1e-12);
  EXPECT_NEAR(elliptic_K(0.3), 1.6080486199305127998, 1e-12);
  EXPECT_LT(elliptic_K(0.3), elliptic_K(0.6));
  EXPECT_LT(elliptic_K(0.6), elliptic_K(0.9));
  EXPECT_NEAR(elliptic_K(0.9), 2.2805491384227703325, 1e-12);
  EXPECT_THROW(elliptic_K(1.0), DomainError);
  EXPECT_THROW(elliptic_K(-0.1), DomainError);
}

TEST(EllipticK, LegendreRelationAtSelfComplementaryModulus) {
  // With k = k' = 1/sqrt(2) the Legendre relation reads 2KE - K^2 = pi/2.
  // E is taken from the AGM with the running sum of squared half-differences.
  const double k = 1.0 / std::sqrt(2.0);
  double a = 1.0, b = std::sqrt(1.0 - k * k), c = k, sum = 0.5 * c * c, pow2 = 0.5;
  for (int i = 0; i < 30 && c > 1e-18; ++i) {
    const double an = 0.5 * (a + b);
    c = 0.5 * (a - b);
    b = std::sqrt(a * b);
    a = an;
    pow2 *= 2.0;
    sum += pow2 * c * c;
  }
  const double K = elliptic_K(k);
  const double E = K * (1.0 - sum);
  EXPECT_NEAR(E, 1.3506438810476755025, 1e-12);
  EXPECT_NEAR(2.0 * K * E - K * K, kPi / 2.0, 1e-12);
}

TEST(SelfSimilar, StructureChecks) {
  EXPECT_NO_THROW(half_measure().validate());
  SelfSimilarMeasure mu = half_measure();
  mu.delta = 1.0;
  EXPECT_THROW(mu.validate(), InvalidParameters);
  mu = half_measure();
  mu.levels = {0.1, 1.0};
  EXPECT_THROW(mu.validate(), InvalidParameters);
  mu = half_measure();
  mu.breakpoints = {0.0, 0.6, 0.5};
  EXPECT_THROW(mu.validate(), InvalidParameters);
  mu = half_measure();
  mu.m = 2;  // m = M needs delta + beta_M = 1
  EXPECT_THROW(mu.validate(), InvalidParameters);
  mu.levels = {0.0, 0.5};
  EXPECT_NO_THROW(mu.validate());
  EXPECT_EQ(half_measure().singular_point(), 0.0);
}

TEST(SelfSimilar, GeometricAtoms) {
  const AtomSet atoms = self_similar_atoms(half_measure(), 3);
  ASSERT_EQ(atoms.atoms.size(), 3u);
  const double pos[] = {0.5, 0.25, 0.125};
  for (int i = 0; i < 3; ++i) {
    EXPECT_DOUBLE_EQ(atoms.atoms[i].position, pos[i]);
    EXPECT_DOUBLE_EQ(atoms.atoms[i].weight, pos[i]);
  }
  EXPECT_DOUBLE_EQ(atoms.residual_mass, 0.125);
  EXPECT_DOUBLE_EQ(atoms.total_weight() + atoms.residual_mass, 1.0);
}

TEST(SelfSimilar, Exhaustion) {
  SelfSimilarMeasure three;
  three.M = 3;
  three.m = 2;
  three.delta = 0.25;
  three.breakpoints = {0.0, 0.3, 0.6, 1.0};
  three.levels = {0.0, 0.4, 1.0};
  for (const SelfSimilarMeasure& mu : {half_measure(), three}) {
    EXPECT_LE(self_similar_atoms(mu, 0).total_weight(), 1.0);
    const double w4 = self_similar_atoms(mu, 4).total_weight();
    const AtomSet a8 = self_similar_atoms(mu, 8);
    EXPECT_GT(a8.total_weight(), w4);
    EXPECT_LE(a8.total_weight(), 1.0 + 1e-15);
    for (const Atom& a : a8.atoms) {
      EXPECT_GT(a.position, 0.0);
      EXPECT_LE(a.position, 1.0);
      EXPECT_GT(a.weight, 0.0);
    }
  }
}

TEST(SelfSimilar, NonMonotoneIterateRejected) {
  // Satisfies the structural checks but violates delta beta_M + beta_m < beta_{m+1}:
  // the iterate steps down at alpha_{m+1}.
  SelfSimilarMeasure mu;
  mu.M = 3;
  mu.m = 2;
  mu.delta = 0.5;
  mu.breakpoints = {0.0, 0.3, 0.6, 1.0};
  mu.levels = {0.0, 0.6, 1.0};
  EXPECT_NO_THROW(mu.validate_structure());
  EXPECT_THROW(mu.validate(), InvalidParameters);
  EXPECT_THROW(self_similar_atoms(mu, 3), InvalidParameters);
}
