#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <numbers>
#include <sstream>

#include "smallball/errors.hpp"
#include "smallball/lab.hpp"
#include "smallball/smallball.hpp"
#include "smallball/tensor_spectrum.hpp"

using namespace sbl;

namespace {

constexpr double kPi = std::numbers::pi;

ChiSquareSum single(double lambda) { return ChiSquareSum{{lambda}, 0.0}; }

ChiSquareSum exp_weights(int n) {
  ChiSquareSum s;
  for (int k = 1; k <= n; ++k) s.weights.push_back(std::exp(-static_cast<double>(k)));
  return s;
}

SvfExpr ln_pow(double a, double scale = 1.0) { return SvfExpr::log_power_of(a, scale); }

SelfSimilarMeasure half_measure() {
  SelfSimilarMeasure mu;
  mu.breakpoints = {0.0, 0.5, 1.0};
  mu.levels = {0.0, 1.0};
  return mu;
}

}  // namespace

TEST(Saddle, SingleWeightClosedForm) {
  // For one weight the refined estimate is
  // 1/2 ln r + (1 - r)/2 - 1/2 ln pi - ln(1 - r); its gap to the exact
  // ln erf(sqrt(r/2)) tends to (1 - ln 2)/2 as r -> 0.
  const double r = 0.01;
  const SaddleResult s = saddle_log_prob(single(1.0), r);
  EXPECT_NEAR(s.u_star, (1.0 / r - 1.0) / 2.0, 1e-9);
  const double closed = 0.5 * std::log(r) + 0.5 * (1.0 - r) - 0.5 * std::log(kPi) - std::log1p(-r);
  EXPECT_NEAR(s.ln_p_refined, closed, 1e-10);
  const double truth = std::log(std::erf(std::sqrt(0.005)));
  EXPECT_NEAR(truth, -2.5300420015472, 1e-12);
  EXPECT_NEAR(s.ln_p_refined - truth, 0.1601423, 1e-6);
  const double tiny = 1e-8;
  const double gap = saddle_log_prob(single(1.0), tiny).ln_p_refined -
                     std::log(std::erf(std::sqrt(tiny / 2.0)));
  EXPECT_NEAR(gap, 0.5 * (1.0 - std::numbers::ln2), 1e-6);
}

TEST(Saddle, NearTheMean) {
  const ChiSquareSum s = exp_weights(30);
  const double mean = s.mean();
  const SaddleResult near = saddle_log_prob(s, mean * (1.0 - 1e-9));
  EXPECT_LT(near.u_star, 1e-6);
  EXPECT_NEAR(near.ln_p_log, 0.0, 1e-12);
  EXPECT_THROW(saddle_log_prob(s, mean), DomainError);
  EXPECT_THROW(saddle_log_prob(s, 0.0), DomainError);
  EXPECT_THROW(saddle_log_prob(s, -1.0), DomainError);
}

TEST(Saddle, MonotoneInRadiusAndResidual) {
  const ChiSquareSum s = exp_weights(200);
  double last_lnp = -1e300;
  double last_u = 1e300;
  for (double r : {1e-4, 3e-4, 1e-3, 3e-3, 1e-2, 3e-2, 1e-1}) {
    const SaddleResult res = saddle_log_prob(s, r);
    EXPECT_GT(res.ln_p_refined, last_lnp) << r;
    EXPECT_LT(res.u_star, last_u) << r;
    EXPECT_LE(std::abs(res.residual), 1e-10 * r);
    EXPECT_LE(res.ln_p_refined, 0.0);
    last_lnp = res.ln_p_refined;
    last_u = res.u_star;
  }
}

TEST(Saddle, TruncationCertificate) {
  const ChiSquareSum s{{1.0, 0.5}, 1e-3};
  EXPECT_FALSE(saddle_log_prob(s, 0.1, 1e-3).certified);
  EXPECT_TRUE(saddle_log_prob(s, 0.1, 1e-2).certified);
  const auto W = closed_form_eigs(ClosedFormProcess::wiener, 1 << 20);
  const TruncatedSaddle t = saddle_log_prob_auto(W, 0.02 * 0.02);
  EXPECT_TRUE(t.certified);
  EXPECT_LE(W.tail_bound(t.N), 1e-3 * 0.02 * 0.02);
  EXPECT_LT(std::abs(t.ln_p_refined_half - t.result.ln_p_refined),
            0.01 * std::abs(t.result.ln_p_refined));
  const auto short_W = closed_form_eigs(ClosedFormProcess::wiener, 2048);
  EXPECT_FALSE(saddle_log_prob_auto(short_W, 0.02 * 0.02).certified);
}

TEST(MonteCarlo, NaiveAtZeroTilt) {
  // Median of chi-square(1): P{xi^2 <= 0.454936...} = 1/2.
  const double median = 0.45493642311957283;
  const McResult mc = mc_tilted_prob(single(1.0), median, 0.0, 40000, 11);
  EXPECT_NEAR(mc.estimate, 0.5, 3.0 * mc.std_error);
  EXPECT_NEAR(mc.acceptance, mc.estimate, 1e-15);
}

TEST(MonteCarlo, SingleWeightAgainstErf) {
  const double r = 0.01;
  const SaddleResult s = saddle_log_prob(single(1.0), r);
  const McResult mc = mc_tilted_prob(single(1.0), r, s.u_star, 100000, 3);
  EXPECT_NEAR(mc.estimate, std::erf(std::sqrt(r / 2.0)), 3.0 * mc.std_error);
}

TEST(MonteCarlo, AgainstSaddleExpWeights) {
  const ChiSquareSum w = exp_weights(200);
  const double r = 1e-3;
  const SaddleResult s = saddle_log_prob(w, r);
  const McResult mc = mc_tilted_prob(w, r, s.u_star, 20000, 5);
  EXPECT_LE(std::abs(mc.ln_estimate - s.ln_p_refined),
            std::max(3.0 * mc.std_error / mc.estimate, 0.2));
}

TEST(MonteCarlo, ReproducibleAcrossThreads) {
  const ChiSquareSum w = exp_weights(50);
  const SaddleResult s = saddle_log_prob(w, 1e-2);
  const McResult a = mc_tilted_prob(w, 1e-2, s.u_star, 20000, 99, 0);
  const McResult b = mc_tilted_prob(w, 1e-2, s.u_star, 20000, 99, 3);
  const McResult c = mc_tilted_prob(w, 1e-2, s.u_star, 20000, 99, 0);
  EXPECT_EQ(a.estimate, b.estimate);
  EXPECT_EQ(a.std_error, b.std_error);
  EXPECT_EQ(a.estimate, c.estimate);
  const McResult d = mc_tilted_prob(w, 1e-2, s.u_star, 20000, 100, 0);
  EXPECT_NE(a.estimate, d.estimate);
}

TEST(MonteCarlo, PooledSeedsBracketSaddle) {
  // Many comparable weights: the saddle estimate is accurate, so pooled MC
  // over ten seeds must cover it.
  ChiSquareSum w;
  for (int k = 1; k <= 300; ++k) w.weights.push_back(1.0 / (1.0 + 0.01 * k));
  const double r = 0.5 * w.mean();
  const SaddleResult s = saddle_log_prob(w, r);
  double sum = 0.0, var = 0.0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const McResult mc = mc_tilted_prob(w, r, s.u_star, 4000, seed);
    sum += mc.estimate;
    var += mc.std_error * mc.std_error;
  }
  const double pooled = sum / 10.0;
  const double pooled_se = std::sqrt(var) / 10.0;
  EXPECT_LE(std::abs(std::log(pooled) - s.ln_p_refined), 3.0 * pooled_se / pooled);
}

TEST(MonteCarlo, Preconditions) {
  EXPECT_THROW(mc_tilted_prob(single(1.0), 1e-14, 0.0, 10000, 1), DegenerateTilt);
  EXPECT_THROW(mc_tilted_prob(single(1.0), 0.01, -1.0, 10000, 1), DomainError);
  EXPECT_THROW(mc_tilted_prob(single(1.0), 0.01, 1.0, 999, 1), InvalidParameters);
}

TEST(IntegralAsymptotic, LogCase) {
  const double log_r = -10.0;
  const IntegralAsymptotic ia = integral_log_asymptotic_log(ln_pow(1.0), log_r);
  // ln u / (2u) = r at the root.
  EXPECT_NEAR(std::log(ia.log_u) - std::numbers::ln2 - ia.log_u, log_r, 1e-10);
  EXPECT_LE(std::abs(ia.residual), 1e-10);
  EXPECT_NEAR(ia.value, -ia.log_u * ia.log_u / 4.0, 1e-4 * std::abs(ia.value));
  EXPECT_NEAR(integral_log_asymptotic(ln_pow(1.0), std::exp(log_r)), ia.value, 1e-9);
}

TEST(IntegralAsymptotic, AgainstLogTypeAtOneHundred) {
  const double L = 100.0;
  const double ratio =
      integral_log_asymptotic_log(ln_pow(1.0), -2.0 * L).value / formula_log_type(1.0, {}, L);
  EXPECT_NEAR(ratio, 1.0, 0.1);
}

TEST(IntegralAsymptotic, Rejections) {
  EXPECT_THROW(integral_log_asymptotic_log(ln_pow(0.0), -10.0), DomainError);
  SvfExpr bounded = ln_pow(0.0);
  bounded.loglog_power = -1.0;
  EXPECT_THROW(integral_log_asymptotic_log(bounded, -10.0), DomainError);
}

TEST(Formulas, LogType) {
  EXPECT_NEAR(formula_log_type(1.0, {}, 10.0), -100.0, 1e-12);
  EXPECT_NEAR(formula_log_type(2.0, {}, 10.0), -4000.0 / 3.0, 1e-10);
  EXPECT_THROW(formula_log_type(0.0, {}, 10.0), DomainError);
  SvfExpr grows;
  grows.loglog_power = 1.0;
  EXPECT_NO_THROW(formula_log_type(0.0, grows, 10.0));
  EXPECT_THROW(formula_log_type(1.0, ln_pow(1.0), 10.0), DomainError);
}

TEST(Formulas, ExpansionCoefficients) {
  EXPECT_EQ(expansion_coefficient(1, 2.0), 1.0);
  EXPECT_NEAR(expansion_coefficient(2, 2.0), 0.5, 1e-15);
  EXPECT_NEAR(expansion_coefficient(2, 1.5), 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(expansion_coefficient(3, 1.5), 1.0 / 3.0, 1e-15);
}

TEST(Formulas, ExpTypeSingleTermDisplay) {
  const double a = 1.3, p = 3.0, alpha = 0.5, L = 40.0;
  const double pc = p / (p - 1.0);
  const double display = -std::pow(2.0, -1.0 / p) * p / a * std::exp(a * std::pow(2.0 * L, 1.0 / p)) *
                         std::pow(2.0 * L, alpha) * std::pow(L, 1.0 / pc);
  EXPECT_NEAR(formula_exp_type(a, p, alpha, {}, L) / display, 1.0, 1e-13);
  EXPECT_THROW(formula_exp_type(a, 1.0, alpha, {}, L), DomainError);
  EXPECT_THROW(formula_exp_type(0.0, p, alpha, {}, L), DomainError);
}

TEST(Formulas, ExpTypeAScaling) {
  // p = 2: exponent 2L (x + x^2 / 2) with x = a / sqrt(2 L).
  const double L = 30.0;
  auto expanded = [&](double a) {
    const double x = a / std::sqrt(2.0 * L);
    return -std::pow(2.0, -0.5) * 2.0 / a * std::exp(2.0 * L * (x + 0.5 * x * x)) * std::sqrt(L);
  };
  const double ratio = formula_exp_type(2.0, 2.0, 0.0, {}, L) / formula_exp_type(1.0, 2.0, 0.0, {}, L);
  EXPECT_NEAR(ratio / (expanded(2.0) / expanded(1.0)), 1.0, 1e-13);
}

TEST(Formulas, CatalogExamples) {
  const double L = 20.0;
  EXPECT_NEAR(formula_catalog(formula::StationaryPolyGrowth{3.0, 2}, L),
              -(3.0 / 8.0) * std::pow(L, 3) / std::pow(std::log(L), 2), 1e-9);
  EXPECT_NEAR(formula_catalog(formula::Homogeneous{{{1.0, 0.5}}}, L),
              -(4.0 / (6.0 * kPi * kPi)) * std::pow(L, 3), 1e-9);
  EXPECT_NEAR(formula_catalog(formula::SelfSimilar{{half_measure()}}, L),
              -L * L / std::log(4.0), 1e-10);
  EXPECT_NEAR(formula_catalog(formula::Mixed{{1.0, 0.5}}, L),
              -std::pow(L, 4) / (6.0 * kPi * kPi * std::log(std::log(L))), 1e-8);
}

TEST(Formulas, DomainChecks) {
  EXPECT_THROW(formula_catalog(formula::StationaryLinLog{1.0, 2}, 10.0), DomainError);
  EXPECT_NO_THROW(formula_catalog(formula::StationaryLinLog{1.0, 2}, 16.0));
  EXPECT_THROW(formula_catalog(formula::Mixed{{1.0, 0.5}}, 15.0), DomainError);
  EXPECT_THROW(formula_catalog(formula::StationaryPolyGrowth{1.0, 2}, 10.0), DomainError);
  EXPECT_THROW(formula_catalog(formula::StationaryPowLog{1.0, 0.5, {1.0}}, 10.0), DomainError);
  EXPECT_THROW(formula_catalog(formula::Homogeneous{{{1.0, -0.5}}}, 10.0), DomainError);
  EXPECT_THROW(validate_formula(formula::StationaryLogPow{1.0, {1.0}}), DomainError);
  EXPECT_EQ(formula_name(formula::SelfSimilarIntegrated{{half_measure()}, 1}),
            "selfsimilar-integrated");
}

TEST(Formulas, CatalogAgreesWithCountingRoute) {
  // Each sheet formula equals the log-type or exp-type formula applied to
  // the convolved marginal counting functions.
  struct Case {
    AsymptoticFormula f;
    std::vector<MarginalFamily> marginals;
    double L;
  };
  SelfSimilarMeasure three;
  three.M = 3;
  three.m = 2;
  three.delta = 0.25;
  three.breakpoints = {0.0, 0.3, 0.6, 1.0};
  three.levels = {0.0, 0.4, 1.0};
  const std::vector<Case> cases = {
      {formula::StationaryLogPow{2.0, {1.0, 3.0}},
       {family::StationaryLogPow{1.0, 2.0}, family::StationaryLogPow{3.0, 2.0}}, 40.0},
      {formula::StationaryLogPow{1.5, {2.0}}, {family::StationaryLogPow{2.0, 1.5}}, 25.0},
      {formula::StationaryPowLog{0.5, 1.0, {1.0, 2.0}},
       {family::StationaryPowLog{0.5, 1.0, 1.0}, family::StationaryPowLog{0.5, 2.0, 1.0}}, 30.0},
      {formula::StationaryLinear{{1.0, 4.0, 0.5}},
       {family::StationaryLinear{1.0}, family::StationaryLinear{4.0}, family::StationaryLinear{0.5}},
       12.0},
      {formula::StationaryLinLog{2.0, 2},
       {family::StationaryLinLog{1.0, 2.0}, family::StationaryLinLog{5.0, 2.0}}, 50.0},
      {formula::StationaryPolyGrowth{3.0, 3},
       {family::StationaryPolyGrowth{3.0}, family::StationaryPolyGrowth{3.0},
        family::StationaryPolyGrowth{3.0}},
       20.0},
      {formula::StationarySuperPoly{2}, {family::StationarySuperPoly{}, family::StationarySuperPoly{}},
       20.0},
      {formula::Homogeneous{{{1.0, 0.5}, {2.0, 1.0}}},
       {family::Homogeneous{{1.0, 0.5}}, family::Homogeneous{{2.0, 1.0}}}, 15.0},
      {formula::SelfSimilar{{half_measure(), three}},
       {family::SelfSimilar{half_measure()}, family::SelfSimilar{three}}, 15.0},
      {formula::SelfSimilarIntegrated{{half_measure(), three}, 1},
       {family::SelfSimilarIntegrated{half_measure(), 1}, family::SelfSimilarIntegrated{three, 1}},
       15.0},
      {formula::Mixed{{1.0, 0.5}},
       {family::StationaryLinLog{1.0, 1.0}, family::Homogeneous{{1.0, 0.5}}}, 30.0},
  };
  for (const Case& c : cases) {
    std::vector<SvfExpr> phis;
    for (const MarginalFamily& m : c.marginals) phis.push_back(marginal_counting_asym(m));
    const double via_counting = formula_from_counting(tensor_counting_asym(phis), c.L);
    const double catalog = formula_catalog(c.f, c.L);
    EXPECT_NEAR(catalog / via_counting, 1.0, 1e-12) << formula_name(c.f);
  }
}

TEST(Formulas, GoldenFile) {
  std::ifstream in(std::string(SMALLBALL_DATA_DIR) + "/formula_goldens.json");
  ASSERT_TRUE(in.good());
  const auto goldens = nlohmann::json::parse(in);
  ASSERT_GE(goldens.size(), 36u);
  std::map<std::string, int> per_variant;
  for (const auto& g : goldens) {
    const AsymptoticFormula f = lab::parse_formula(g["formula"], "/formula");
    const double L = g["log_inv_eps"].get<double>();
    const double want = g["value"].get<double>();
    EXPECT_NEAR(formula_catalog(f, L) / want, 1.0, 1e-10) << g["formula"].dump();
    ++per_variant[formula_name(f)];
  }
  EXPECT_EQ(per_variant.size(), 12u);
  for (const auto& [name, n] : per_variant) EXPECT_GE(n, 3) << name;
}
