#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "ttlsqr/error.hpp"

namespace ttlsqr {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Default element cap for dense reconstructions (test oracles only).
inline constexpr std::size_t kDenseElementCap = 1'000'000;

/// One 3-way core G_k of shape left_rank x mode_size x right_rank.
///
/// Storage is column-major in (left, mode, right), so the left unfolding
/// (left*mode x right) and the right unfolding (left x mode*right) are both
/// plain views of the same buffer.
class TtCore {
public:
  TtCore(std::size_t left_rank, std::size_t mode_size, std::size_t right_rank);
  TtCore(std::size_t left_rank, std::size_t mode_size, std::size_t right_rank,
         std::vector<double> values);

  std::size_t left_rank() const noexcept { return left_; }
  std::size_t mode_size() const noexcept { return mode_; }
  std::size_t right_rank() const noexcept { return right_; }
  std::size_t size() const noexcept { return values_.size(); }

  double operator()(std::size_t a, std::size_t i, std::size_t b) const {
    return values_[a + left_ * (i + mode_ * b)];
  }
  double& operator()(std::size_t a, std::size_t i, std::size_t b) {
    return values_[a + left_ * (i + mode_ * b)];
  }

  std::span<const double> values() const noexcept { return values_; }
  std::span<double> values() noexcept { return values_; }

  Eigen::Map<const Matrix> left_unfolding() const;
  Eigen::Map<Matrix> left_unfolding();
  Eigen::Map<const Matrix> right_unfolding() const;
  Eigen::Map<Matrix> right_unfolding();

  /// Matrix G_k(:, i, :) of shape left_rank x right_rank.
  Matrix slice(std::size_t i) const;

  /// Mode unfolding: mode_size x (left_rank*right_rank), column a + left*b.
  Matrix mode_unfolding() const;
  static TtCore from_mode_unfolding(const Matrix& unfolding, std::size_t left_rank,
                                    std::size_t right_rank);

private:
  std::size_t left_;
  std::size_t mode_;
  std::size_t right_;
  std::vector<double> values_;
};

/// A d-mode tensor in tensor-train format. Immutable after construction; the
/// constructor enforces r_0 = r_d = 1, the rank chain, and finite values.
class TtTensor {
public:
  /// Scalar zero (one 1x1x1 core); a placeholder for later assignment.
  TtTensor();
  explicit TtTensor(std::vector<TtCore> cores);

  /// All-zero tensor with rank-1 cores.
  static TtTensor zeros(std::span<const std::size_t> mode_sizes);

  std::size_t num_modes() const noexcept { return cores_.size(); }
  const TtCore& core(std::size_t k) const { return cores_.at(k); }
  const std::vector<TtCore>& cores() const noexcept { return cores_; }

  std::vector<std::size_t> mode_sizes() const;
  /// r_0 .. r_d (d+1 entries).
  std::vector<std::size_t> ranks() const;
  std::size_t max_rank() const;
  /// Number of stored reals, sum_k r_{k-1} n_k r_k.
  std::size_t storage() const;

private:
  std::vector<TtCore> cores_;
};

struct RoundingReport {
  std::vector<std::size_t> input_ranks;
  std::vector<std::size_t> output_ranks;
  /// Frobenius norm of the discarded singular values at each of the d-1 cuts.
  std::vector<double> truncation_errors;
  double tolerance_used = 0.0;
  std::optional<std::size_t> max_rank_used;
  double input_norm = 0.0;
  double output_norm = 0.0;
};

struct Rounded {
  TtTensor tensor;
  RoundingReport report;
};

/// Dense d-way array, first index fastest (matches vec() and the Kronecker
/// ordering A_d x ... x A_1).
struct DenseTensor {
  std::vector<std::size_t> shape;
  std::vector<double> data;

  std::size_t linear_index(std::span<const std::size_t> index) const;
  double frobenius_norm() const;
};

TtTensor rank_one(std::span<const Vector> factors);

Rounded tt_svd(const DenseTensor& a, double tolerance, std::optional<std::size_t> max_rank = {});
DenseTensor to_dense(const TtTensor& x, std::size_t element_cap = kDenseElementCap);

double evaluate(const TtTensor& x, std::span<const std::size_t> index);

/// alpha*x + y with concatenated cores; interior ranks add, nothing is truncated.
TtTensor axpy(double alpha, const TtTensor& x, const TtTensor& y);

struct WeightedTensor {
  double weight;
  const TtTensor* tensor;
};
/// sum_i w_i x_i with block-structured cores (ranks add up).
TtTensor linear_combination(std::span<const WeightedTensor> terms);

TtTensor scale(const TtTensor& x, double alpha);
double inner(const TtTensor& x, const TtTensor& y);
double norm(const TtTensor& x);

/// Truncated TT-SVD recompression with per-bond budget
/// tolerance*||x||/sqrt(d-1). Every bond is truncated by an SVD while all
/// other cores are orthonormal, so the Frobenius error is at most
/// tolerance*||x|| when no max_rank cap bites. Tolerance 0 still drops
/// roundoff-level tails.
Rounded round(const TtTensor& x, double tolerance, std::optional<std::size_t> max_rank = {});

/// round(sum_i w_i x_i) without forming the block-structured sum cores.
Rounded round_sum(std::span<const WeightedTensor> terms, double tolerance,
                  std::optional<std::size_t> max_rank = {});

/// x x_mode m, where m is p x n_mode.
TtTensor mode_product(const TtTensor& x, std::size_t mode, const Matrix& m);

/// Replace core `mode` by f(unfolding) where unfolding is n x (r_{k-1} r_k);
/// f may change the row count.
template <class Fn>
TtTensor transform_mode(const TtTensor& x, std::size_t mode, Fn&& f) {
  require(mode < x.num_modes(), ErrorCode::invalid_argument, "mode out of range");
  std::vector<TtCore> cores = x.cores();
  const TtCore& c = cores[mode];
  Matrix out = f(c.mode_unfolding());
  require(out.cols() == static_cast<Eigen::Index>(c.left_rank() * c.right_rank()),
          ErrorCode::dimension_mismatch, "mode transform changed the column count");
  cores[mode] = TtCore::from_mode_unfolding(out, c.left_rank(), c.right_rank());
  return TtTensor(std::move(cores));
}

} // namespace ttlsqr
