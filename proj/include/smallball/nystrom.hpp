#pragma once

// Nystrom discretisation of covariance operators: eigenvalues of
// [sqrt(w_i w_j) K(x_i, x_j)] for a quadrature rule or an atomic measure.

#include <functional>
#include <vector>

#include "smallball/marginal_spectra.hpp"

namespace sbl {

struct Quadrature {
  std::vector<double> nodes;
  std::vector<double> weights;
};

/// Midpoint rule with N equal cells on [lo, hi].
Quadrature midpoint_grid(double lo, double hi, int N);

/// Midpoint rule in x = ln(1/s) on [0, x_max] with N cells, mapped back to
/// s in (0,1): nodes s_i = exp(-(i+1/2)h), weights h s_i. Resolves the
/// scale-invariant behaviour of homogeneous kernels near 0.
Quadrature log_graded_grid(double x_max, int N);

/// Atoms as a quadrature rule (positions as nodes, masses as weights).
Quadrature atom_quadrature(const AtomSet& atoms);

using Kernel = std::function<double(double, double)>;

double wiener_kernel(double s, double t);
double bridge_kernel(double s, double t);
Kernel homogeneous_kernel(const HomogeneousKernelParams& params);

/// Dense symmetric eigenvalues, sorted nonincreasing. Throws NotPSD when an
/// eigenvalue is below -1e-6 lambda_1.
std::vector<double> nystrom_eigs(const Kernel& kernel, const Quadrature& quad);

/// Eigenvalues of the Cauchy-like matrix g_i g_j / (a_i + a_j) (a_i > 0),
/// accurate to small relative error even for entries far below the
/// largest eigenvalue times machine epsilon. Pivoted LDL^T on the
/// displacement generators, stopped once the pivot drops below
/// pivot_floor * d_1, followed by two-sided Jacobi with a relative stopping
/// criterion. Sorted nonincreasing.
std::vector<double> cauchy_like_eigs(const std::vector<double>& a, const std::vector<double>& g,
                                     double pivot_floor = 1e-40);

/// Nystrom eigenvalues of s^b t^b / (s + t) on a quadrature with positive
/// nodes, through cauchy_like_eigs. Requires params.a == 1.
std::vector<double> homogeneous_accurate_eigs(const HomogeneousKernelParams& params,
                                              const Quadrature& quad,
                                              double pivot_floor = 1e-40);

/// Least-squares slope of k against ln(1/lambda_k)^power over indices
/// first..last (1-based, inclusive); N(lambda_k) = k counts eigenvalues
/// >= lambda_k.
double counting_slope(const std::vector<double>& eigs, int first, int last, int power);

}  // namespace sbl
