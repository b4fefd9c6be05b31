#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "ttlsqr/kron_op.hpp"
#include "ttlsqr/lsqr.hpp"

namespace ttlsqr {

/// Subsampled randomized Hadamard transform S = scale * J H D on R^n.
///
/// D holds random signs, H is the unnormalized +-1 Walsh-Hadamard transform
/// on the zero-padded length n_hat = 2^ceil(log2 n), J keeps s distinct rows.
/// With scale = 1/sqrt(s), E[S^T S] = I.
class Sketcher {
public:
  Sketcher(std::size_t n, std::size_t s, std::uint64_t seed);

  std::size_t input_dim() const noexcept { return n_; }
  std::size_t output_dim() const noexcept { return s_; }
  std::size_t padded_dim() const noexcept { return padded_; }
  std::uint64_t seed() const noexcept { return seed_; }
  double scale() const noexcept { return scale_; }
  const std::vector<double>& sign_diagonal() const noexcept { return signs_; }
  const std::vector<std::size_t>& sampled_rows() const noexcept { return rows_; }

  /// s x k result for an n x k input.
  Matrix apply(const Matrix& a) const;
  Vector apply(const Vector& a) const;

private:
  std::size_t n_;
  std::size_t s_;
  std::size_t padded_;
  std::uint64_t seed_;
  double scale_;
  std::vector<double> signs_;
  std::vector<std::size_t> rows_;
};

/// In-place unnormalized fast Walsh-Hadamard transform; length must be a power of two.
void fwht(std::span<double> x);

/// 2 * d * m_bar.
std::size_t default_sketch_size(std::size_t modes, std::size_t m_bar);

struct SketchedProblem {
  KronSumOperator op;
  TtTensor rhs;
};

/// Sketch every A_j^(i) with one sketcher; all modes must share the row size.
KronSumOperator sketch_operator(const Sketcher& sk, const KronSumOperator& l);

/// Sketch every A_j^(i) and each RHS factor with the same sketcher.
SketchedProblem sketch_problem(const Sketcher& sk, const KronSumOperator& l,
                               std::span<const Vector> rhs_factors);

struct TwoPassOptions {
  std::size_t sketch_size = 0; ///< 0 selects default_sketch_size
  std::uint64_t seed = 0;
  std::size_t sketch_iters = 30;
  std::size_t refine_iters = 2;
};

struct TwoPassResult {
  TtTensor x;
  TtTensor x0;
  SolveResult sketched;
  std::optional<SolveResult> refined;
  double sketch_seconds = 0.0;
  double refine_seconds = 0.0;
};

/// Solve the sketched problem, then refine on min_z ||(f - L x0) - L z||.
/// The default size takes m_bar = num_terms * m_1.
TwoPassResult two_pass_solve(const KronSumOperator& l, std::span<const Vector> rhs_factors,
                             const SolveOptions& opts, const TwoPassOptions& two_pass);

/// Same, reusing an operator already sketched by `sk` (only the RHS is sketched here).
TwoPassResult two_pass_solve(const KronSumOperator& l, const Sketcher& sk, const KronSumOperator& sketched,
                             std::span<const Vector> rhs_factors, const SolveOptions& opts,
                             std::size_t sketch_iters, std::size_t refine_iters);

} // namespace ttlsqr
