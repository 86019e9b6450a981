#include <gtest/gtest.h>

#include <algorithm>
#include <boost/multiprecision/cpp_dec_float.hpp>
#include <cmath>
#include <numbers>
#include <vector>

#include "smallball/errors.hpp"
#include "smallball/nystrom.hpp"

using namespace sbl;
using Big = boost::multiprecision::cpp_dec_float_50;

namespace {

// Cyclic Jacobi in 50-digit arithmetic: an oracle whose absolute error is far
// below the smallest eigenvalues exercised here.
std::vector<double> jacobi_eigs_50(std::vector<std::vector<Big>> A) {
  const std::size_t n = A.size();
  for (int sweep = 0; sweep < 60; ++sweep) {
    Big off = 0;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) off += A[p][q] * A[p][q];
    if (off < Big("1e-180")) break;
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        if (A[p][q] == 0) continue;
        const Big theta = (A[q][q] - A[p][p]) / (2 * A[p][q]);
        const Big t = (theta >= 0 ? Big(1) : Big(-1)) / (abs(theta) + sqrt(theta * theta + 1));
        const Big c = 1 / sqrt(t * t + 1);
        const Big s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const Big akp = A[k][p], akq = A[k][q];
          A[k][p] = c * akp - s * akq;
          A[k][q] = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const Big apk = A[p][k], aqk = A[q][k];
          A[p][k] = c * apk - s * aqk;
          A[q][k] = s * apk + c * aqk;
        }
      }
    }
  }
  std::vector<double> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(static_cast<double>(A[i][i]));
  std::sort(out.rbegin(), out.rend());
  return out;
}

}  // namespace

TEST(Nystrom, TraceIdentity) {
  const Quadrature grid = midpoint_grid(0.0, 1.0, 300);
  const Quadrature lg = log_graded_grid(40.0, 300);
  struct Case {
    Kernel k;
    const Quadrature* q;
  };
  const Case cases[] = {{wiener_kernel, &grid},
                        {bridge_kernel, &grid},
                        {homogeneous_kernel({2.0, 1.0}), &grid},
                        {homogeneous_kernel({1.0, 0.5}), &lg}};
  for (const Case& c : cases) {
    const auto eigs = nystrom_eigs(c.k, *c.q);
    double sum = 0.0, trace = 0.0;
    for (double e : eigs) sum += e;
    for (std::size_t i = 0; i < c.q->nodes.size(); ++i) {
      trace += c.q->weights[i] * c.k(c.q->nodes[i], c.q->nodes[i]);
    }
    EXPECT_NEAR(sum, trace, 1e-10 * trace);
    EXPECT_TRUE(std::is_sorted(eigs.rbegin(), eigs.rend()));
  }
}

TEST(Nystrom, WienerLeadingEigenvalue) {
  const auto eigs = nystrom_eigs(wiener_kernel, midpoint_grid(0.0, 1.0, 2000));
  EXPECT_NEAR(eigs[0], 4.0 / (std::numbers::pi * std::numbers::pi), 1e-3);
}

TEST(Nystrom, IndefiniteKernelRejected) {
  const Kernel sq = [](double s, double t) { return (s - t) * (s - t); };
  EXPECT_THROW(nystrom_eigs(sq, midpoint_grid(0.0, 1.0, 50)), NotPSD);
}

TEST(Nystrom, GridShapes) {
  const Quadrature g = log_graded_grid(10.0, 5);
  ASSERT_EQ(g.nodes.size(), 5u);
  EXPECT_NEAR(g.nodes[0], std::exp(-1.0), 1e-15);
  EXPECT_NEAR(g.weights[0], 2.0 * std::exp(-1.0), 1e-15);
  const Quadrature m = midpoint_grid(0.0, 1.0, 4);
  EXPECT_DOUBLE_EQ(m.nodes[0], 0.125);
  EXPECT_DOUBLE_EQ(m.weights[3], 0.25);
}

TEST(CauchyLike, MatchesFiftyDigitJacobi) {
  const int n = 40;
  std::vector<double> a(n), g(n);
  for (int i = 0; i < n; ++i) {
    a[i] = std::pow(10.0, 0.075 * i);  // three decades, 40 nodes
    g[i] = std::sqrt(a[i]) * (1.0 + 0.1 * i);
  }
  std::vector<std::vector<Big>> A(n, std::vector<Big>(n));
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) A[i][j] = Big(g[i]) * Big(g[j]) / (Big(a[i]) + Big(a[j]));
  const auto oracle = jacobi_eigs_50(A);
  const auto fast = cauchy_like_eigs(a, g, 0.0);
  ASSERT_EQ(fast.size(), oracle.size());
  // Relative accuracy holds far below lambda_1 * machine epsilon.
  EXPECT_LT(oracle.back() / oracle.front(), 1e-20);
  for (int i = 0; i < n; ++i) EXPECT_NEAR(fast[i] / oracle[i], 1.0, 1e-11) << "i=" << i;
}

TEST(CauchyLike, AgreesWithDenseOnHomogeneousKernel) {
  const HomogeneousKernelParams k{1.0, 0.5};
  const Quadrature q = log_graded_grid(30.0, 200);
  const auto accurate = homogeneous_accurate_eigs(k, q, 0.0);
  const auto dense = nystrom_eigs(homogeneous_kernel(k), q);
  for (int i = 0; i < 10; ++i) EXPECT_NEAR(accurate[i] / dense[i], 1.0, 1e-10) << i;
  EXPECT_THROW(homogeneous_accurate_eigs({2.0, 1.0}, q), InvalidParameters);
}

TEST(CountingSlope, RecoversPowerLaw) {
  std::vector<double> eigs;
  const double c = 0.05;
  for (int k = 1; k <= 300; ++k) eigs.push_back(std::exp(-std::sqrt(k / c)));
  EXPECT_NEAR(counting_slope(eigs, 20, 200, 2), c, 1e-10);
  std::vector<double> geo;
  for (int k = 1; k <= 50; ++k) geo.push_back(std::exp(-2.0 * k));
  EXPECT_NEAR(counting_slope(geo, 5, 40, 1), 0.5, 1e-12);
}
