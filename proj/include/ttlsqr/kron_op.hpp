#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <variant>
#include <vector>

#include <Eigen/Sparse>

#include "ttlsqr/tt_tensor.hpp"

namespace ttlsqr {

using SparseMatrix = Eigen::SparseMatrix<double>;

/// Identity placeholder; products with it are skipped.
struct Identity {
  std::size_t size;
};

/// One A_j^(i). Dense, compressed sparse column, or identity.
class ModeMatrix {
public:
  ModeMatrix(Matrix dense);
  ModeMatrix(SparseMatrix sparse);
  ModeMatrix(Identity identity);

  std::size_t rows() const noexcept;
  std::size_t cols() const noexcept;
  bool is_identity() const noexcept { return std::holds_alternative<Identity>(storage_); }
  bool is_sparse() const noexcept { return std::holds_alternative<SparseMatrix>(storage_); }

  /// A * b, or A^T * b when `transpose` is set.
  Matrix apply(const Matrix& b, bool transpose = false) const;
  Matrix to_dense() const;
  double frobenius_norm() const;

private:
  std::variant<Matrix, SparseMatrix, Identity> storage_;
};

/// L = sum_i A_d^(i) x ... x A_1^(i); terms[i][j] is A_j^(i), n_j x m_j.
class KronSumOperator {
public:
  explicit KronSumOperator(std::vector<std::vector<ModeMatrix>> terms);

  std::size_t num_terms() const noexcept { return terms_.size(); }
  std::size_t num_modes() const noexcept { return terms_.front().size(); }
  const ModeMatrix& term(std::size_t i, std::size_t j) const { return terms_.at(i).at(j); }
  const std::vector<std::size_t>& row_sizes() const noexcept { return rows_; }
  const std::vector<std::size_t>& col_sizes() const noexcept { return cols_; }

  /// Per-term products without the summation; entry i is x with every mode
  /// multiplied by A_j^(i) (or its transpose).
  std::vector<TtTensor> term_images(const TtTensor& x, bool transpose) const;

  /// Unrounded sum_i term_i(x) + sum_k extra_k.
  TtTensor apply_plus(const TtTensor& x, bool transpose, std::span<const WeightedTensor> extra) const;
  /// round(sum_i term_i(x) + sum_k extra_k) in one recompression.
  Rounded round_apply_plus(const TtTensor& x, bool transpose, std::span<const WeightedTensor> extra,
                           double round_tol, std::optional<std::size_t> max_rank) const;

  /// round(L x). round_tol = 0 with no cap returns the exact, unrounded sum.
  TtTensor apply(const TtTensor& x, double round_tol, std::optional<std::size_t> max_rank = {}) const;
  TtTensor apply_adjoint(const TtTensor& y, double round_tol,
                         std::optional<std::size_t> max_rank = {}) const;

  Vector apply_dense(const Vector& x, bool transpose = false) const;

private:
  std::vector<std::vector<ModeMatrix>> terms_;
  std::vector<std::size_t> rows_;
  std::vector<std::size_t> cols_;
};

/// Kronecker sum as one dense (prod n_j) x (prod m_j) matrix.
Matrix op_to_dense(const KronSumOperator& l, std::size_t element_cap = kDenseElementCap);

/// M = R_d x ... x R_1 with the best-conditioned QR factor per mode.
struct Preconditioner {
  std::vector<Matrix> mode_factors;
  std::vector<std::size_t> chosen_term_index;
  /// condition_estimates[j][i] = kappa(R_j^(i)).
  std::vector<std::vector<double>> condition_estimates;
};

Preconditioner build_preconditioner(const KronSumOperator& l);

/// Upper-triangular QR factor with nonnegative diagonal.
Matrix triangular_factor(const Matrix& a);

/// M^{-1} x, or M^{-T} x when `transpose` is set.
TtTensor precondition_solve(const Preconditioner& p, const TtTensor& x, bool transpose = false);

/// sum_i prod_j ||A_j^(i) R_j^{-1}||_F, an upper bound on ||L M^{-1}||_2
/// (R_j = I without a preconditioner).
double frobenius_bound(const KronSumOperator& l, const Preconditioner* p = nullptr);

} // namespace ttlsqr
