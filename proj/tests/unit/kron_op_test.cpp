#include <gtest/gtest.h>

#include <random>

#include "frozen_values.hpp"
#include "test_support.hpp"
#include "ttlsqr/kron_op.hpp"

using namespace ttlsqr;
using namespace testing_support;

namespace {

Matrix with_condition(Eigen::Index rows, Eigen::Index cols, double kappa, std::mt19937_64& rng) {
  const Eigen::HouseholderQR<Matrix> qu(gaussian(rows, cols, rng));
  const Eigen::HouseholderQR<Matrix> qv(gaussian(cols, cols, rng));
  const Matrix u = qu.householderQ() * Matrix::Identity(rows, cols);
  const Matrix v = qv.householderQ() * Matrix::Identity(cols, cols);
  Vector s = Vector::LinSpaced(cols, kappa, 1.0);
  return u * s.asDiagonal() * v.transpose();
}

} // namespace

TEST(Apply, IdentityOperator) {
  std::mt19937_64 rng(1);
  const TtTensor x = random_tt({3, 4, 5}, {1, 2, 2, 1}, rng);
  std::vector<std::vector<ModeMatrix>> t{{ModeMatrix(Identity{3}), ModeMatrix(Identity{4}), ModeMatrix(Identity{5})}};
  const KronSumOperator l(std::move(t));
  EXPECT_LE(rel_diff(dense_vec(l.apply(x, 1e-12)), dense_vec(x)), 1e-14);
  EXPECT_LE(rel_diff(dense_vec(l.apply_adjoint(x, 1e-12)), dense_vec(x)), 1e-14);
}

TEST(Apply, FrozenOracle) {
  std::vector<std::vector<Matrix>> terms(2);
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 3; ++j)
      terms[i].push_back(det_matrix(4, 2, 10 * i + j));
  const KronSumOperator l = make_operator(terms);
  const TtTensor x({det_core(1, 2, 2, 50), det_core(2, 2, 2, 51), det_core(2, 2, 1, 52)});
  const Vector y = dense_vec(l.apply(x, 0.0));
  EXPECT_NEAR(y(0), frozen::kApplyEntries[0], 1e-15);
  EXPECT_NEAR(y(17), frozen::kApplyEntries[1], 1e-15);
  EXPECT_NEAR(y(63), frozen::kApplyEntries[2], 1e-15);
  EXPECT_NEAR(y.norm(), frozen::kApplyNorm, 1e-14);
  EXPECT_LE(rel_diff(y, kron_sum_dense(terms) * dense_vec(x)), 1e-13);
}

TEST(Apply, RanksGrowByTermCount) {
  std::mt19937_64 rng(2);
  const auto terms = random_terms(3, {4, 4, 4}, {4, 4, 4}, rng);
  const KronSumOperator l = make_operator(terms);
  const TtTensor x = random_tt({4, 4, 4}, {1, 2, 2, 1}, rng);
  EXPECT_EQ(l.apply(x, 0.0).ranks(), (std::vector<std::size_t>{1, 6, 6, 1}));
}

TEST(Apply, DenseCrossCheckFiveSeeds) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    std::mt19937_64 rng(100 + seed);
    const auto terms = random_terms(2, {3, 4, 2}, {2, 3, 2}, rng);
    const KronSumOperator l = make_operator(terms);
    const TtTensor x = random_tt({2, 3, 2}, {1, 2, 2, 1}, rng);
    const Matrix a = op_to_dense(l);
    EXPECT_LE(rel_diff(a, kron_sum_dense(terms)), 1e-14);
    EXPECT_LE(rel_diff(dense_vec(l.apply(x, 0.0)), a * dense_vec(x)), 1e-13);
    const TtTensor y = random_tt({3, 4, 2}, {1, 2, 2, 1}, rng);
    EXPECT_LE(rel_diff(dense_vec(l.apply_adjoint(y, 0.0)), a.transpose() * dense_vec(y)), 1e-13);
    EXPECT_LE(rel_diff(l.apply_dense(dense_vec(x)), a * dense_vec(x)), 1e-13);
  }
}

TEST(Apply, SparseAndDenseAgree) {
  std::mt19937_64 rng(3);
  Matrix a = gaussian(5, 3, rng);
  a(1, 1) = a(3, 0) = 0.0;
  const Matrix b = gaussian(4, 4, rng);
  std::vector<std::vector<ModeMatrix>> dense{{ModeMatrix(a), ModeMatrix(b)}};
  std::vector<std::vector<ModeMatrix>> sparse{{ModeMatrix(SparseMatrix(a.sparseView())), ModeMatrix(b)}};
  const KronSumOperator ld(std::move(dense)), ls(std::move(sparse));
  EXPECT_TRUE(ls.term(0, 0).is_sparse());
  const TtTensor x = random_tt({3, 4}, {1, 2, 1}, rng);
  EXPECT_LE(rel_diff(dense_vec(ld.apply(x, 0.0)), dense_vec(ls.apply(x, 0.0))), 1e-14);
  EXPECT_LE(rel_diff(dense_vec(ld.apply_adjoint(ld.apply(x, 0.0), 0.0)),
                     dense_vec(ls.apply_adjoint(ls.apply(x, 0.0), 0.0))),
            1e-13);
}

TEST(Apply, ShapeChecks) {
  std::mt19937_64 rng(4);
  EXPECT_THROW(make_operator({{gaussian(3, 2, rng)}, {gaussian(3, 3, rng)}}), Error);
  EXPECT_THROW(make_operator({{gaussian(3, 2, rng)}, {gaussian(3, 2, rng), gaussian(2, 2, rng)}}), Error);
  const KronSumOperator l = make_operator({{gaussian(3, 2, rng), gaussian(3, 2, rng)}});
  EXPECT_THROW(l.apply(random_tt({3, 2}, {1, 1, 1}, rng), 0.0), Error);
}

TEST(OpToDense, IdentityBlocks) {
  std::vector<std::vector<ModeMatrix>> t{{ModeMatrix(Matrix(Matrix::Identity(2, 2))), ModeMatrix(Identity{3})}};
  EXPECT_EQ(op_to_dense(KronSumOperator(std::move(t))), Matrix::Identity(6, 6));
}

TEST(OpToDense, HandExpandedTwoByTwo) {
  Matrix a1(2, 2), a2(2, 2), b1(2, 2), b2(2, 2);
  a1 << 1, 2, 3, 4;
  a2 << 0, 1, 1, 0;
  b1 << 2, 0, 0, 2;
  b2 << 1, 1, 0, 1;
  // a2 x a1 + b2 x b1, expanded by hand.
  Matrix expected(4, 4);
  expected << 2, 0, 3, 2,
              0, 2, 3, 6,
              1, 2, 2, 0,
              3, 4, 0, 2;
  EXPECT_EQ(op_to_dense(make_operator({{a1, a2}, {b1, b2}})), expected);
}

TEST(OpToDense, ElementCap) {
  std::vector<std::vector<ModeMatrix>> t{{ModeMatrix(Identity{200}), ModeMatrix(Identity{200})}};
  EXPECT_THROW(op_to_dense(KronSumOperator(std::move(t))), Error);
}

TEST(Properties, AdjointAndLinearity) {
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<std::size_t> dim(1, 4), ell(1, 3), modes(1, 3), rank(1, 3);
  std::normal_distribution<double> nd;
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t d = modes(rng);
    std::vector<std::size_t> rows(d), cols(d), rx(d + 1, 1), ry(d + 1, 1);
    for (std::size_t j = 0; j < d; ++j) {
      rows[j] = dim(rng);
      cols[j] = dim(rng);
    }
    for (std::size_t k = 1; k < d; ++k) {
      rx[k] = rank(rng);
      ry[k] = rank(rng);
    }
    const KronSumOperator l = make_operator(random_terms(ell(rng), rows, cols, rng));
    const TtTensor x = random_tt(cols, rx, rng), x2 = random_tt(cols, rx, rng);
    const TtTensor y = random_tt(rows, ry, rng);
    const double lhs = inner(l.apply(x, 0.0), y);
    const double rhs = inner(x, l.apply_adjoint(y, 0.0));
    const double scale = norm(l.apply(x, 0.0)) * norm(y) + norm(x) * norm(l.apply_adjoint(y, 0.0));
    EXPECT_LE(std::abs(lhs - rhs), 1e-11 * scale);
    const double alpha = nd(rng);
    const Vector combo = dense_vec(l.apply(axpy(alpha, x, x2), 0.0));
    const Vector parts = alpha * dense_vec(l.apply(x, 0.0)) + dense_vec(l.apply(x2, 0.0));
    EXPECT_LE((combo - parts).norm(), 1e-11 * std::max(1.0, parts.norm()));
  }
}

TEST(Preconditioner, SingleTermFactorIsR) {
  const Matrix a = det_matrix(6, 3, 300);
  const Preconditioner p = build_preconditioner(make_operator({{a}}));
  const Matrix r = p.mode_factors[0];
  EXPECT_TRUE(r.isUpperTriangular(1e-15));
  EXPECT_GE(r.diagonal().minCoeff(), 0.0);
  EXPECT_LE(rel_diff(r.transpose() * r, a.transpose() * a), 1e-13);
  EXPECT_NEAR(p.condition_estimates[0][0], frozen::kConditionNumbers[0], 1e-12);
}

TEST(Preconditioner, FrozenConditionNumbers) {
  const KronSumOperator l = make_operator({{det_matrix(6, 3, 300)}, {det_matrix(6, 3, 301)}, {det_matrix(6, 3, 302)}});
  const Preconditioner p = build_preconditioner(l);
  for (int i = 0; i < 3; ++i)
    EXPECT_NEAR(p.condition_estimates[0][i], frozen::kConditionNumbers[i], 1e-12);
  EXPECT_EQ(p.chosen_term_index[0], 1u);
}

TEST(Preconditioner, PicksBetterConditionedTerm) {
  std::mt19937_64 rng(6);
  const Matrix bad = with_condition(8, 3, 1e3, rng), good = with_condition(8, 3, 2.0, rng);
  const Matrix other = gaussian(5, 2, rng);
  const Preconditioner p = build_preconditioner(make_operator({{bad, other}, {good, other}}));
  EXPECT_EQ(p.chosen_term_index[0], 1u);
  EXPECT_NEAR(p.condition_estimates[0][0], 1e3, 1e-8);
  EXPECT_NEAR(p.condition_estimates[0][1], 2.0, 1e-12);
}

TEST(Preconditioner, OrthonormalColumnsGiveIdentity) {
  std::mt19937_64 rng(7);
  const Eigen::HouseholderQR<Matrix> qr(gaussian(6, 3, rng));
  const Matrix q = qr.householderQ() * Matrix::Identity(6, 3);
  const Preconditioner p = build_preconditioner(make_operator({{q, q}}));
  for (const auto& r : p.mode_factors)
    EXPECT_LE((r - Matrix::Identity(3, 3)).norm(), 1e-14);
  EXPECT_NEAR(p.condition_estimates[0][0], 1.0, 1e-14);
}

TEST(Preconditioner, SolveInvertsModeFactors) {
  std::mt19937_64 rng(8);
  const KronSumOperator l = make_operator(random_terms(2, {6, 5, 4}, {3, 2, 4}, rng));
  const Preconditioner p = build_preconditioner(l);
  const TtTensor x = random_tt({3, 2, 4}, {1, 2, 2, 1}, rng);
  TtTensor y = precondition_solve(p, x);
  for (std::size_t j = 0; j < 3; ++j)
    y = mode_product(y, j, p.mode_factors[j]);
  EXPECT_LE(rel_diff(dense_vec(y), dense_vec(x)), 1e-11);

  const Matrix m = kron_sum_dense({p.mode_factors});
  EXPECT_LE(rel_diff(dense_vec(precondition_solve(p, x)), m.triangularView<Eigen::Upper>().solve(dense_vec(x))),
            1e-11);
  EXPECT_LE(rel_diff(dense_vec(precondition_solve(p, x, true)),
                     Matrix(m.transpose()).triangularView<Eigen::Lower>().solve(dense_vec(x))),
            1e-11);
}

TEST(Preconditioner, IdentityFactorsLeaveTensorUnchanged) {
  std::mt19937_64 rng(9);
  Preconditioner p;
  p.mode_factors = {Matrix::Identity(3, 3), Matrix::Identity(4, 4)};
  const TtTensor x = random_tt({3, 4}, {1, 2, 1}, rng);
  EXPECT_LE(rel_diff(dense_vec(precondition_solve(p, x)), dense_vec(x)), 1e-15);
}

TEST(Preconditioner, SingleTermPreconditionedMatrixIsOrthonormal) {
  std::mt19937_64 rng(10);
  const std::vector<Matrix> mats{gaussian(5, 3, rng), gaussian(4, 2, rng)};
  const KronSumOperator l = make_operator({mats});
  const Preconditioner p = build_preconditioner(l);
  const Matrix a = op_to_dense(l);
  const Matrix m = kron_sum_dense({p.mode_factors});
  const Matrix pre = a * m.inverse();
  EXPECT_LE((pre.transpose() * pre - Matrix::Identity(pre.cols(), pre.cols())).norm(), 1e-12);
  const Eigen::JacobiSVD<Matrix> s0(a), s1(pre);
  const double k0 = s0.singularValues()(0) / s0.singularValues().tail(1)(0);
  const double k1 = s1.singularValues()(0) / s1.singularValues().tail(1)(0);
  EXPECT_LE(k1, k0 * (1 + 1e-8));
}

TEST(Preconditioner, RankDeficientTermRejected) {
  Matrix a = Matrix::Zero(4, 2);
  a(0, 0) = 1.0;
  EXPECT_THROW(build_preconditioner(make_operator({{a}})), Error);
}
