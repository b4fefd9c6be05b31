#include "ttlsqr/kron_op.hpp"

#include <cmath>
#include <limits>
#include <string>

namespace ttlsqr {

namespace {

/// Multiply mode `n` of a (left x n x right) column-major block by A (or A^T).
std::vector<double> mode_multiply(const double* in, std::size_t left, std::size_t n, std::size_t right,
                                  const ModeMatrix& a, bool transpose) {
  const std::size_t p = transpose ? a.cols() : a.rows();
  std::vector<double> out(left * p * right);
  const auto l = static_cast<Eigen::Index>(left);
  const auto nn = static_cast<Eigen::Index>(n);
  const auto pp = static_cast<Eigen::Index>(p);
  if (left == 1) {
    Eigen::Map<const Matrix> x(in, nn, static_cast<Eigen::Index>(right));
    Eigen::Map<Matrix>(out.data(), pp, static_cast<Eigen::Index>(right)) = a.apply(x, transpose);
    return out;
  }
  // Each right-slab X_b (left x n) maps to X_b * op(A)^T.
  for (std::size_t b = 0; b < right; ++b) {
    Eigen::Map<const Matrix> x(in + left * n * b, l, nn);
    Matrix xt = x.transpose();
    Eigen::Map<Matrix>(out.data() + left * p * b, l, pp) = a.apply(xt, transpose).transpose();
  }
  return out;
}

Matrix kron(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index j = 0; j < a.cols(); ++j)
    for (Eigen::Index i = 0; i < a.rows(); ++i)
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return out;
}

} // namespace

// ---------------------------------------------------------------------------
// ModeMatrix

ModeMatrix::ModeMatrix(Matrix dense) : storage_(std::move(dense)) {
  const auto& m = std::get<Matrix>(storage_);
  require(m.rows() > 0 && m.cols() > 0, ErrorCode::invalid_argument, "mode matrix must be nonempty");
  require(m.allFinite(), ErrorCode::numerical, "mode matrix contains non-finite values");
}

ModeMatrix::ModeMatrix(SparseMatrix sparse) : storage_(std::move(sparse)) {
  auto& m = std::get<SparseMatrix>(storage_);
  require(m.rows() > 0 && m.cols() > 0, ErrorCode::invalid_argument, "mode matrix must be nonempty");
  m.makeCompressed();
  for (Eigen::Index k = 0; k < m.nonZeros(); ++k)
    require(std::isfinite(m.valuePtr()[k]), ErrorCode::numerical,
            "mode matrix contains non-finite values");
}

ModeMatrix::ModeMatrix(Identity identity) : storage_(identity) {
  require(identity.size > 0, ErrorCode::invalid_argument, "identity size must be positive");
}

std::size_t ModeMatrix::rows() const noexcept {
  if (const auto* d = std::get_if<Matrix>(&storage_))
    return static_cast<std::size_t>(d->rows());
  if (const auto* s = std::get_if<SparseMatrix>(&storage_))
    return static_cast<std::size_t>(s->rows());
  return std::get<Identity>(storage_).size;
}

std::size_t ModeMatrix::cols() const noexcept {
  if (const auto* d = std::get_if<Matrix>(&storage_))
    return static_cast<std::size_t>(d->cols());
  if (const auto* s = std::get_if<SparseMatrix>(&storage_))
    return static_cast<std::size_t>(s->cols());
  return std::get<Identity>(storage_).size;
}

Matrix ModeMatrix::apply(const Matrix& b, bool transpose) const {
  const std::size_t inner = transpose ? rows() : cols();
  require(static_cast<std::size_t>(b.rows()) == inner, ErrorCode::dimension_mismatch,
          "mode matrix product dimension mismatch");
  if (const auto* d = std::get_if<Matrix>(&storage_))
    return transpose ? Matrix(d->transpose() * b) : Matrix(*d * b);
  if (const auto* s = std::get_if<SparseMatrix>(&storage_))
    return transpose ? Matrix(s->transpose() * b) : Matrix(*s * b);
  return b;
}

Matrix ModeMatrix::to_dense() const {
  if (const auto* d = std::get_if<Matrix>(&storage_))
    return *d;
  if (const auto* s = std::get_if<SparseMatrix>(&storage_))
    return Matrix(*s);
  const auto n = static_cast<Eigen::Index>(std::get<Identity>(storage_).size);
  return Matrix::Identity(n, n);
}

double ModeMatrix::frobenius_norm() const {
  if (const auto* d = std::get_if<Matrix>(&storage_))
    return d->norm();
  if (const auto* s = std::get_if<SparseMatrix>(&storage_))
    return s->norm();
  return std::sqrt(static_cast<double>(std::get<Identity>(storage_).size));
}

// ---------------------------------------------------------------------------
// KronSumOperator

KronSumOperator::KronSumOperator(std::vector<std::vector<ModeMatrix>> terms) : terms_(std::move(terms)) {
  require(!terms_.empty(), ErrorCode::invalid_argument, "operator needs at least one term");
  const std::size_t d = terms_.front().size();
  require(d >= 1, ErrorCode::invalid_argument, "operator needs at least one mode");
  for (const auto& t : terms_)
    require(t.size() == d, ErrorCode::dimension_mismatch, "every term needs one matrix per mode");
  for (std::size_t j = 0; j < d; ++j) {
    rows_.push_back(terms_[0][j].rows());
    cols_.push_back(terms_[0][j].cols());
    for (std::size_t i = 1; i < terms_.size(); ++i)
      require(terms_[i][j].rows() == rows_[j] && terms_[i][j].cols() == cols_[j],
              ErrorCode::dimension_mismatch,
              "term " + std::to_string(i) + " mode " + std::to_string(j) + " has a different shape");
  }
}

std::vector<TtTensor> KronSumOperator::term_images(const TtTensor& x, bool transpose) const {
  const auto& expected = transpose ? rows_ : cols_;
  require(x.mode_sizes() == expected, ErrorCode::dimension_mismatch,
          "tensor mode sizes do not match the operator");
  std::vector<TtTensor> out;
  out.reserve(terms_.size());
  for (const auto& term : terms_) {
    std::vector<TtCore> cores;
    cores.reserve(x.num_modes());
    for (std::size_t j = 0; j < x.num_modes(); ++j) {
      const TtCore& c = x.core(j);
      if (term[j].is_identity()) {
        cores.push_back(c);
        continue;
      }
      auto values = mode_multiply(c.values().data(), c.left_rank(), c.mode_size(), c.right_rank(),
                                  term[j], transpose);
      const std::size_t p = transpose ? term[j].cols() : term[j].rows();
      cores.emplace_back(c.left_rank(), p, c.right_rank(), std::move(values));
    }
    out.emplace_back(std::move(cores));
  }
  return out;
}

TtTensor KronSumOperator::apply_plus(const TtTensor& x, bool transpose,
                                     std::span<const WeightedTensor> extra) const {
  const auto images = term_images(x, transpose);
  std::vector<WeightedTensor> parts;
  parts.reserve(images.size() + extra.size());
  for (const auto& t : images)
    parts.push_back({1.0, &t});
  parts.insert(parts.end(), extra.begin(), extra.end());
  return linear_combination(parts);
}

Rounded KronSumOperator::round_apply_plus(const TtTensor& x, bool transpose,
                                          std::span<const WeightedTensor> extra, double round_tol,
                                          std::optional<std::size_t> max_rank) const {
  const auto images = term_images(x, transpose);
  std::vector<WeightedTensor> parts;
  parts.reserve(images.size() + extra.size());
  for (const auto& t : images)
    parts.push_back({1.0, &t});
  parts.insert(parts.end(), extra.begin(), extra.end());
  return round_sum(parts, round_tol, max_rank);
}

TtTensor KronSumOperator::apply(const TtTensor& x, double round_tol,
                                std::optional<std::size_t> max_rank) const {
  if (round_tol == 0.0 && !max_rank)
    return apply_plus(x, false, {});
  return round_apply_plus(x, false, {}, round_tol, max_rank).tensor;
}

TtTensor KronSumOperator::apply_adjoint(const TtTensor& y, double round_tol,
                                        std::optional<std::size_t> max_rank) const {
  if (round_tol == 0.0 && !max_rank)
    return apply_plus(y, true, {});
  return round_apply_plus(y, true, {}, round_tol, max_rank).tensor;
}

Vector KronSumOperator::apply_dense(const Vector& x, bool transpose) const {
  const auto& in_sizes = transpose ? rows_ : cols_;
  const auto& out_sizes = transpose ? cols_ : rows_;
  std::size_t in_total = 1, out_total = 1;
  for (std::size_t j = 0; j < num_modes(); ++j) {
    in_total *= in_sizes[j];
    out_total *= out_sizes[j];
  }
  require(static_cast<std::size_t>(x.size()) == in_total, ErrorCode::dimension_mismatch,
          "vector length does not match the operator");
  Vector y = Vector::Zero(static_cast<Eigen::Index>(out_total));
  for (const auto& term : terms_) {
    std::vector<double> cur(x.data(), x.data() + x.size());
    std::vector<std::size_t> shape = in_sizes;
    for (std::size_t j = 0; j < num_modes(); ++j) {
      if (term[j].is_identity())
        continue;
      std::size_t left = 1, right = 1;
      for (std::size_t k = 0; k < j; ++k)
        left *= shape[k];
      for (std::size_t k = j + 1; k < shape.size(); ++k)
        right *= shape[k];
      cur = mode_multiply(cur.data(), left, shape[j], right, term[j], transpose);
      shape[j] = out_sizes[j];
    }
    y += Eigen::Map<const Vector>(cur.data(), static_cast<Eigen::Index>(cur.size()));
  }
  return y;
}

Matrix op_to_dense(const KronSumOperator& l, std::size_t element_cap) {
  std::size_t rows = 1, cols = 1;
  for (std::size_t j = 0; j < l.num_modes(); ++j) {
    rows *= l.row_sizes()[j];
    cols *= l.col_sizes()[j];
  }
  require(rows <= element_cap && cols <= element_cap && rows * cols <= element_cap,
          ErrorCode::limit_exceeded, "dense operator exceeds the element cap");
  Matrix out = Matrix::Zero(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (std::size_t i = 0; i < l.num_terms(); ++i) {
    Matrix acc = l.term(i, 0).to_dense();
    for (std::size_t j = 1; j < l.num_modes(); ++j)
      acc = kron(l.term(i, j).to_dense(), acc);
    out += acc;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Preconditioner

Matrix triangular_factor(const Matrix& a) {
  require(a.rows() >= a.cols(), ErrorCode::invalid_argument,
          "QR factor needs at least as many rows as columns");
  Eigen::HouseholderQR<Matrix> qr(a);
  Matrix r = qr.matrixQR().topRows(a.cols()).triangularView<Eigen::Upper>();
  for (Eigen::Index k = 0; k < r.rows(); ++k)
    if (r(k, k) < 0.0)
      r.row(k) *= -1.0;
  return r;
}

Preconditioner build_preconditioner(const KronSumOperator& l) {
  Preconditioner p;
  for (std::size_t j = 0; j < l.num_modes(); ++j) {
    const auto m = static_cast<Eigen::Index>(l.col_sizes()[j]);
    require(l.row_sizes()[j] >= l.col_sizes()[j], ErrorCode::invalid_argument,
            "mode " + std::to_string(j) + " has fewer rows than columns");
    std::vector<double> kappas;
    std::vector<Matrix> factors;
    for (std::size_t i = 0; i < l.num_terms(); ++i) {
      const ModeMatrix& a = l.term(i, j);
      if (a.is_identity()) {
        factors.push_back(Matrix::Identity(m, m));
        kappas.push_back(1.0);
        continue;
      }
      const Matrix dense = a.to_dense();
      Matrix r = triangular_factor(dense);
      const double scale = dense.norm();
      for (Eigen::Index k = 0; k < m; ++k)
        require(r(k, k) > 1e-12 * scale, ErrorCode::numerical,
                "mode " + std::to_string(j) + " term " + std::to_string(i) +
                    " is rank deficient; no QR preconditioner");
      Eigen::JacobiSVD<Matrix> svd(r);
      const Vector& s = svd.singularValues();
      kappas.push_back(s(0) / s(m - 1));
      factors.push_back(std::move(r));
    }
    std::size_t best = 0;
    for (std::size_t i = 1; i < kappas.size(); ++i)
      if (kappas[i] < kappas[best])
        best = i;
    p.mode_factors.push_back(std::move(factors[best]));
    p.chosen_term_index.push_back(best);
    p.condition_estimates.push_back(std::move(kappas));
  }
  return p;
}

TtTensor precondition_solve(const Preconditioner& p, const TtTensor& x, bool transpose) {
  require(p.mode_factors.size() == x.num_modes(), ErrorCode::dimension_mismatch,
          "preconditioner mode count does not match the tensor");
  TtTensor out = x;
  for (std::size_t j = 0; j < x.num_modes(); ++j) {
    const Matrix& r = p.mode_factors[j];
    require(r.rows() == static_cast<Eigen::Index>(x.core(j).mode_size()), ErrorCode::dimension_mismatch,
            "preconditioner factor size does not match mode " + std::to_string(j));
    for (Eigen::Index k = 0; k < r.rows(); ++k)
      require(r(k, k) != 0.0, ErrorCode::numerical, "singular preconditioner diagonal");
    if (r.isIdentity(0.0))
      continue;
    out = transform_mode(out, j, [&](const Matrix& u) -> Matrix {
      if (transpose)
        return r.transpose().triangularView<Eigen::Lower>().solve(u);
      return r.triangularView<Eigen::Upper>().solve(u);
    });
  }
  return out;
}

double frobenius_bound(const KronSumOperator& l, const Preconditioner* p) {
  std::vector<Matrix> inverses;
  if (p)
    for (const Matrix& r : p->mode_factors)
      inverses.push_back(r.triangularView<Eigen::Upper>().solve(Matrix::Identity(r.rows(), r.cols())));
  double total = 0.0;
  for (std::size_t i = 0; i < l.num_terms(); ++i) {
    double prod = 1.0;
    for (std::size_t j = 0; j < l.num_modes(); ++j) {
      const ModeMatrix& a = l.term(i, j);
      if (!p)
        prod *= a.frobenius_norm();
      else if (a.is_identity())
        prod *= inverses[j].norm();
      else
        prod *= a.apply(inverses[j]).norm();
    }
    total += prod;
  }
  return total;
}

} // namespace ttlsqr
