#include "smallball/nystrom.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

#include "smallball/errors.hpp"

namespace sbl {

Quadrature midpoint_grid(double lo, double hi, int N) {
  if (N < 1 || !(hi > lo)) throw InvalidParameters("midpoint_grid: need N >= 1 and hi > lo");
  Quadrature q;
  const double h = (hi - lo) / N;
  q.nodes.resize(N);
  q.weights.assign(N, h);
  for (int i = 0; i < N; ++i) q.nodes[i] = lo + (i + 0.5) * h;
  return q;
}

Quadrature log_graded_grid(double x_max, int N) {
  if (N < 1 || !(x_max > 0.0)) throw InvalidParameters("log_graded_grid: need N >= 1, x_max > 0");
  Quadrature q;
  const double h = x_max / N;
  q.nodes.resize(N);
  q.weights.resize(N);
  for (int i = 0; i < N; ++i) {
    q.nodes[i] = std::exp(-(i + 0.5) * h);
    q.weights[i] = h * q.nodes[i];
  }
  return q;
}

Quadrature atom_quadrature(const AtomSet& atoms) {
  Quadrature q;
  for (const Atom& a : atoms.atoms) {
    q.nodes.push_back(a.position);
    q.weights.push_back(a.weight);
  }
  return q;
}

double wiener_kernel(double s, double t) { return std::min(s, t); }

double bridge_kernel(double s, double t) { return std::min(s, t) - s * t; }

Kernel homogeneous_kernel(const HomogeneousKernelParams& params) {
  params.validate();
  return [params](double s, double t) {
    if (s <= 0.0 && t <= 0.0) return 0.0;
    return std::pow(s * t, params.b) / std::pow(s + t, params.a);
  };
}

namespace {

std::vector<double> sorted_desc(std::vector<double> v) {
  std::sort(v.begin(), v.end(), std::greater<>());
  return v;
}

}  // namespace

std::vector<double> nystrom_eigs(const Kernel& kernel, const Quadrature& quad) {
  const auto n = static_cast<Eigen::Index>(quad.nodes.size());
  if (n == 0 || quad.weights.size() != quad.nodes.size()) {
    throw InvalidParameters("nystrom_eigs: empty or mismatched quadrature");
  }
  Eigen::MatrixXd A(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j <= i; ++j) {
      const double v = std::sqrt(quad.weights[i] * quad.weights[j]) *
                       kernel(quad.nodes[i], quad.nodes[j]);
      A(i, j) = v;
      A(j, i) = v;
    }
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(A, Eigen::EigenvaluesOnly);
  if (solver.info() != Eigen::Success) throw Error("nystrom_eigs: eigensolver did not converge");
  std::vector<double> eigs(solver.eigenvalues().data(), solver.eigenvalues().data() + n);
  eigs = sorted_desc(std::move(eigs));
  if (eigs.back() < -1e-6 * std::max(eigs.front(), 0.0)) {
    throw NotPSD("nystrom_eigs: eigenvalue " + std::to_string(eigs.back()) +
                 " below -1e-6 lambda_1 = " + std::to_string(eigs.front()));
  }
  return eigs;
}

namespace {

// Two-sided cyclic Jacobi on a symmetric positive definite matrix (row
// major, K x K). Rotations are skipped when |h_pq| <= tol sqrt(h_pp h_qq),
// which preserves small eigenvalues to high relative accuracy whenever the
// matrix is a well-conditioned matrix scaled on both sides by a diagonal.
std::vector<double> relative_jacobi(std::vector<double>& H, int K) {
  constexpr double tol = 1e-15;
  auto at = [&](int i, int j) -> double& { return H[static_cast<std::size_t>(i) * K + j]; };
  for (int sweep = 0; sweep < 80; ++sweep) {
    bool rotated = false;
    for (int p = 0; p + 1 < K; ++p) {
      for (int q = p + 1; q < K; ++q) {
        const double hpq = at(p, q);
        if (std::abs(hpq) <= tol * std::sqrt(at(p, p) * at(q, q))) continue;
        rotated = true;
        const double theta = (at(q, q) - at(p, p)) / (2.0 * hpq);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (int k = 0; k < K; ++k) {
          const double hp = at(k, p);
          const double hq = at(k, q);
          at(k, p) = c * hp - s * hq;
          at(k, q) = s * hp + c * hq;
        }
        for (int k = 0; k < K; ++k) {
          const double hp = at(p, k);
          const double hq = at(q, k);
          at(p, k) = c * hp - s * hq;
          at(q, k) = s * hp + c * hq;
        }
      }
    }
    if (!rotated) break;
  }
  std::vector<double> out(K);
  for (int i = 0; i < K; ++i) out[i] = at(i, i);
  return out;
}

}  // namespace

std::vector<double> cauchy_like_eigs(const std::vector<double>& a_in,
                                     const std::vector<double>& g_in, double pivot_floor) {
  const int N = static_cast<int>(a_in.size());
  if (N == 0 || g_in.size() != a_in.size()) {
    throw InvalidParameters("cauchy_like_eigs: empty or mismatched generators");
  }
  for (double v : a_in) {
    if (!(v > 0.0)) throw InvalidParameters("cauchy_like_eigs: nodes a_i must be > 0");
  }
  std::vector<double> a = a_in;
  std::vector<double> g = g_in;
  std::vector<char> active(N, 1);
  std::vector<std::vector<double>> columns;  // L(:, k), full length N
  std::vector<double> d;

  for (int k = 0; k < N; ++k) {
    int p = -1;
    double dp = -1.0;
    for (int i = 0; i < N; ++i) {
      if (!active[i]) continue;
      const double di = g[i] * g[i] / (2.0 * a[i]);
      if (di > dp) {
        dp = di;
        p = i;
      }
    }
    if (p < 0 || (!d.empty() && dp < pivot_floor * d.front()) || dp <= 0.0) break;
    d.push_back(dp);
    std::vector<double> col(N, 0.0);
    const double ap = a[p];
    const double gp = g[p];
    for (int i = 0; i < N; ++i) {
      if (active[i]) col[i] = 2.0 * ap * g[i] / (gp * (a[i] + ap));
    }
    columns.push_back(std::move(col));
    active[p] = 0;
    // Schur complement of a Cauchy-like matrix is Cauchy-like with
    // generators scaled by (a_i - a_p) / (a_i + a_p).
    for (int i = 0; i < N; ++i) {
      if (active[i]) g[i] *= (a[i] - ap) / (a[i] + ap);
    }
  }

  const int K = static_cast<int>(d.size());
  // H = sqrt(D) L^T L sqrt(D) has the nonzero eigenvalues of L D L^T.
  std::vector<double> H(static_cast<std::size_t>(K) * K);
  for (int i = 0; i < K; ++i) {
    for (int j = 0; j <= i; ++j) {
      const std::vector<double>& ci = columns[i];
      const std::vector<double>& cj = columns[j];
      double s = 0.0;
      for (int r = 0; r < N; ++r) s += ci[r] * cj[r];
      const double v = std::sqrt(d[i]) * s * std::sqrt(d[j]);
      H[static_cast<std::size_t>(i) * K + j] = v;
      H[static_cast<std::size_t>(j) * K + i] = v;
    }
  }
  return sorted_desc(relative_jacobi(H, K));
}

std::vector<double> homogeneous_accurate_eigs(const HomogeneousKernelParams& params,
                                              const Quadrature& quad, double pivot_floor) {
  params.validate();
  if (params.a != 1.0) {
    throw InvalidParameters("homogeneous_accurate_eigs: only a = 1 has Cauchy structure");
  }
  const std::size_t n = quad.nodes.size();
  std::vector<double> a(n);
  std::vector<double> g(n);
  // sqrt(w_i w_j) (s_i s_j)^b / (s_i + s_j) = g_i g_j / (1/s_i + 1/s_j)
  // with g_i = sqrt(w_i) s_i^(b-1).
  for (std::size_t i = 0; i < n; ++i) {
    const double s = quad.nodes[i];
    if (!(s > 0.0)) throw InvalidParameters("homogeneous_accurate_eigs: nodes must be > 0");
    a[i] = 1.0 / s;
    g[i] = std::sqrt(quad.weights[i]) * std::pow(s, params.b - 1.0);
  }
  return cauchy_like_eigs(a, g, pivot_floor);
}

double counting_slope(const std::vector<double>& eigs, int first, int last, int power) {
  if (first < 1 || last <= first || last > static_cast<int>(eigs.size())) {
    throw InvalidParameters("counting_slope: need 1 <= first < last <= eigenvalue count");
  }
  const int n = last - first + 1;
  double sx = 0.0;
  double sy = 0.0;
  std::vector<double> xs(n);
  for (int k = first; k <= last; ++k) {
    const double lam = eigs[k - 1];
    if (!(lam > 0.0)) throw DomainError("counting_slope: nonpositive eigenvalue in range");
    xs[k - first] = std::pow(std::log(1.0 / lam), power);
    sx += xs[k - first];
    sy += k;
  }
  const double mx = sx / n;
  const double my = sy / n;
  double sxy = 0.0;
  double sxx = 0.0;
  for (int k = first; k <= last; ++k) {
    const double dx = xs[k - first] - mx;
    sxy += dx * (k - my);
    sxx += dx * dx;
  }
  return sxy / sxx;
}

}  // namespace sbl
