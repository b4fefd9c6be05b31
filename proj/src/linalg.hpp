#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>

#include <Eigen/Dense>
#include <Eigen/SVD>

namespace ttlsqr::detail {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

struct ThinQr {
  Matrix q;
  Matrix r;
};

inline ThinQr thin_qr(const Matrix& m) {
  const Eigen::Index k = std::min(m.rows(), m.cols());
  Eigen::HouseholderQR<Matrix> qr(m);
  ThinQr out;
  out.q = qr.householderQ() * Matrix::Identity(m.rows(), k);
  out.r = qr.matrixQR().topRows(k).triangularView<Eigen::Upper>();
  return out;
}

inline Matrix r_factor(const Matrix& m) {
  const Eigen::Index k = std::min(m.rows(), m.cols());
  Eigen::HouseholderQR<Matrix> qr(m);
  return qr.matrixQR().topRows(k).triangularView<Eigen::Upper>();
}

/// Relative tolerances below this are treated as this; singular values at
/// roundoff level are otherwise never dropped.
inline constexpr double kToleranceFloor = 16.0 * std::numeric_limits<double>::epsilon();

inline double cut_budget(double tolerance, double norm, std::size_t modes) {
  const double cuts = modes > 1 ? static_cast<double>(modes - 1) : 1.0;
  return std::max(tolerance, kToleranceFloor) * norm / std::sqrt(cuts);
}

/// Smallest r >= 1 whose discarded tail energy is at most delta^2, then
/// capped. `discarded` receives the Frobenius norm of the dropped tail.
inline std::size_t choose_rank(const Vector& s, double delta, std::optional<std::size_t> max_rank,
                               double& discarded) {
  const auto n = static_cast<std::size_t>(s.size());
  Vector tail(n + 1);
  tail(static_cast<Eigen::Index>(n)) = 0.0;
  for (std::size_t j = n; j-- > 0;)
    tail(static_cast<Eigen::Index>(j)) =
        tail(static_cast<Eigen::Index>(j + 1)) + s(static_cast<Eigen::Index>(j)) * s(static_cast<Eigen::Index>(j));
  std::size_t r = n;
  while (r > 1 && tail(static_cast<Eigen::Index>(r - 1)) <= delta * delta)
    --r;
  if (max_rank)
    r = std::min(r, *max_rank);
  r = std::max<std::size_t>(r, 1);
  discarded = std::sqrt(tail(static_cast<Eigen::Index>(r)));
  return r;
}

/// m ~= left * right after a rank truncation.
struct Truncation {
  Matrix left;
  Matrix right;
  std::size_t rank = 0;
  double discarded = 0.0;
};

/// Gram eigendecompositions are accurate enough above this relative tolerance.
inline constexpr double kGramTolerance = 1e-5;
/// ... and only pay off on strongly rectangular matrices.
inline constexpr Eigen::Index kGramAspect = 8;

namespace gram {

// Orthonormalizes the rows of b in place (CholeskyQR2); b_in = l * b_out.
inline bool orthonormalize_rows(Matrix& b, Matrix& l) {
  l = Matrix::Identity(b.rows(), b.rows());
  for (int pass = 0; pass < 2; ++pass) {
    Matrix s = Matrix::Zero(b.rows(), b.rows());
    s.selfadjointView<Eigen::Lower>().rankUpdate(b);
    Eigen::LLT<Matrix> llt(s.selfadjointView<Eigen::Lower>());
    if (llt.info() != Eigen::Success)
      return false;
    const Matrix lp = llt.matrixL();
    llt.matrixL().solveInPlace(b);
    l = l * lp;
  }
  return true;
}

// Descending singular values and left singular vectors of a wide matrix via m m^T.
inline void left_singular(const Matrix& m, Vector& s, Matrix& u) {
  Matrix g = Matrix::Zero(m.rows(), m.rows());
  g.selfadjointView<Eigen::Lower>().rankUpdate(m);
  Eigen::SelfAdjointEigenSolver<Matrix> es(g.selfadjointView<Eigen::Lower>());
  s = es.eigenvalues().reverse().cwiseMax(0.0).cwiseSqrt();
  u = es.eigenvectors().rowwise().reverse();
}

} // namespace gram

inline bool use_gram(Eigen::Index rows, Eigen::Index cols, double tolerance) {
  return tolerance >= kGramTolerance && std::max(rows, cols) >= kGramAspect * std::min(rows, cols);
}

/// Truncation with `right` having orthonormal rows (the norm moves left).
inline Truncation truncate_rows(const Matrix& m, double delta, std::optional<std::size_t> max_rank,
                                double tolerance) {
  Truncation t;
  if (use_gram(m.rows(), m.cols(), tolerance) && m.rows() < m.cols()) {
    Vector s;
    Matrix u;
    gram::left_singular(m, s, u);
    t.rank = choose_rank(s, delta, max_rank, t.discarded);
    const auto r = static_cast<Eigen::Index>(t.rank);
    Matrix b = u.leftCols(r).transpose() * m;
    Matrix l;
    if (gram::orthonormalize_rows(b, l)) {
      t.left = u.leftCols(r) * l;
      t.right = std::move(b);
      return t;
    }
  }
  Eigen::BDCSVD<Matrix> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vector& s = svd.singularValues();
  t.rank = choose_rank(s, delta, max_rank, t.discarded);
  const auto r = static_cast<Eigen::Index>(t.rank);
  t.left = svd.matrixU().leftCols(r) * s.head(r).asDiagonal();
  t.right = svd.matrixV().leftCols(r).transpose();
  return t;
}

/// Truncation with `left` having orthonormal columns (the norm moves right).
inline Truncation truncate_cols(const Matrix& m, double delta, std::optional<std::size_t> max_rank,
                                double tolerance) {
  if (use_gram(m.rows(), m.cols(), tolerance) && m.rows() > m.cols()) {
    Truncation t = truncate_rows(m.transpose(), delta, max_rank, tolerance);
    return {t.right.transpose(), t.left.transpose(), t.rank, t.discarded};
  }
  Truncation t;
  Eigen::BDCSVD<Matrix> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vector& s = svd.singularValues();
  t.rank = choose_rank(s, delta, max_rank, t.discarded);
  const auto r = static_cast<Eigen::Index>(t.rank);
  t.left = svd.matrixU().leftCols(r);
  t.right = s.head(r).asDiagonal() * svd.matrixV().leftCols(r).transpose();
  return t;
}

} // namespace ttlsqr::detail
