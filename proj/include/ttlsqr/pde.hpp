#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "ttlsqr/kron_op.hpp"
#include "ttlsqr/lsqr.hpp"

namespace ttlsqr {

enum class PdeVariant { convection, variable_coefficient };

/// Finite-difference problem on the unit cube with n interior nodes per
/// direction, h = 1/(n+1), homogeneous Dirichlet data and f = 1.
struct PdeProblem {
  std::size_t n;
  PdeVariant variant;
  KronSumOperator op;
  TtTensor rhs;
};

/// (1/h^2) tridiag(-1, 2, -1).
Matrix laplacian_1d(std::size_t n);
/// Centered first difference of c(x) u_x: row k holds -+c(x_k)/(2h) at k-+1.
Matrix convection_1d(std::size_t n, const std::function<double(double)>& c);
/// Flux-form second difference of (a u_x)_x with a taken at the cell midpoints.
Matrix diffusion_1d(std::size_t n, const std::function<double(double)>& a);

/// -Laplace(u) + 2 exp(1-x) u_x = 1; the convection sits in the mode-1 factor.
PdeProblem build_convection_problem(std::size_t n);

/// (a u_x)_x + (a u_y)_y + (a u_z)_z + u_x = 1 with a(x) = -exp(-x) unless
/// `a` overrides it.
PdeProblem build_variable_coefficient_problem(std::size_t n,
                                              std::function<double(double)> a = {});

struct StudyOptions {
  std::vector<double> tolerances{1e-4, 1e-6, 1e-8};
  /// Empty entry means no cap.
  std::vector<std::optional<std::size_t>> ranks{std::size_t{50}};
  std::size_t max_iters = 3000;
  bool use_preconditioner = true;
  std::size_t true_residual_every = 10;
  /// Stop once the recurrence estimate sits this factor below the explicit
  /// residual (the iteration has decoupled from the true residual); 0 disables.
  double stagnation_gap = 1e-2;
};

struct StudyRun {
  double tolerance;
  std::optional<std::size_t> max_rank;
  SolveResult result;
  /// Smallest explicit relative residual observed.
  double stagnation_level;
  double final_true_residual;
};

/// One preconditioned TT-LSQR run per (tolerance, rank) pair, in that nesting order.
std::vector<StudyRun> run_convergence_study(const PdeProblem& problem, const StudyOptions& opts,
                                            const std::function<void(const StudyRun&)>& on_run = {});

} // namespace ttlsqr
