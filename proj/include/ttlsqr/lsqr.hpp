#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "ttlsqr/kron_op.hpp"
#include "ttlsqr/tt_tensor.hpp"

namespace ttlsqr {

/// Bidiagonalization and Givens quantities after an iteration, plus the
/// current TT iterates.
struct LsqrState {
  double alpha = 0.0;
  double beta = 0.0;
  double rho = 0.0;
  double rho_bar = 0.0;
  double phi = 0.0;
  double phi_bar = 0.0;
  double c = 1.0;
  double s = 0.0;
  double theta = 0.0;
  TtTensor u;
  TtTensor v;
  TtTensor x;
  TtTensor g;
  std::size_t iteration = 0;
};

struct TraceRecord {
  std::size_t iter = 0;
  /// phi_bar / beta_1.
  double resid_est = 0.0;
  /// phi_bar * alpha * |c| / ||L^T f||.
  double ne_resid_est = 0.0;
  /// Explicit ||L^T (f - L x)|| / ||L^T f||, when computed.
  std::optional<double> ne_resid_true;
  /// Explicit ||f - L x|| / ||f||, when computed.
  std::optional<double> resid_true;
  std::size_t max_rank = 0;
  double seconds = 0.0;
};

struct LsqrTrace {
  std::vector<TraceRecord> records;
  double beta1 = 0.0;
  double alpha1 = 0.0;
};

enum class SolveStatus { converged, max_iters, breakdown, stopped };

std::string to_string(SolveStatus status);

struct SolveOptions {
  double round_tol = 1e-4;
  std::optional<std::size_t> max_rank;
  std::size_t max_iters = 200;
  double ne_resid_tol = 1e-4;
  bool use_preconditioner = false;
  /// Compute the explicit residuals every this many iterations (0: never).
  std::size_t true_residual_every = 0;
  /// Called after every iteration; returning false stops the solve.
  std::function<bool(const LsqrState&, const TraceRecord&)> on_iterate;
};

struct SolveResult {
  TtTensor x;
  LsqrTrace trace;
  SolveStatus status = SolveStatus::max_iters;
  std::size_t iterations = 0;
};

/// Absolute (phi_bar, phi_bar * alpha * |c|).
std::pair<double, double> estimate_residuals(const LsqrState& state);

/// TT-LSQR on min ||f - L x||. With `precond` the iteration runs on L M^{-1}
/// and returns M^{-1} y. With `x0` it solves for a correction z on the
/// residual f - L x0 and returns round(x0 + z). x = 0 is returned when
/// ||L^T f|| <= 1e-14 * frobenius_bound(l, precond) * ||f||.
SolveResult tt_lsqr(const KronSumOperator& l, const TtTensor& f, const SolveOptions& opts,
                    const Preconditioner* precond = nullptr, const TtTensor* x0 = nullptr);

/// ||f - L x||.
double residual_norm(const KronSumOperator& l, const TtTensor& f, const TtTensor& x);

/// Explicit residual quantities of x: (||f - L x||, ||L^T (f - L x)||).
std::pair<double, double> true_residuals(const KronSumOperator& l, const TtTensor& f, const TtTensor& x);

using MatVec = std::function<Vector(const Vector&)>;

struct VectorLsqrResult {
  Vector x;
  std::size_t iterations = 0;
  bool converged = false;
  double resid_est = 0.0;
  double ne_resid_est = 0.0;
};

/// Classical LSQR; stops once the normal-equation residual estimate drops
/// below tol * ||A^T f||. `observer` sees every iterate.
VectorLsqrResult vector_lsqr(const MatVec& apply, const MatVec& apply_transpose, const Vector& f,
                             double tol, std::size_t max_iters,
                             const std::function<void(std::size_t, const Vector&)>& observer = {});
/// Here ||A^T f|| <= 1e-14 ||A||_F ||f|| counts as zero and returns x = 0.
VectorLsqrResult vector_lsqr(const Matrix& a, const Vector& f, double tol, std::size_t max_iters,
                             const std::function<void(std::size_t, const Vector&)>& observer = {});

} // namespace ttlsqr
