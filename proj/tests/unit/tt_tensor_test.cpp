#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "frozen_values.hpp"
#include "test_support.hpp"
#include "ttlsqr/io.hpp"
#include "ttlsqr/tt_tensor.hpp"

using namespace ttlsqr;
using namespace testing_support;

namespace {

DenseTensor dense_of(const std::vector<std::size_t>& shape, const Vector& v) {
  DenseTensor d;
  d.shape = shape;
  d.data.assign(v.data(), v.data() + v.size());
  return d;
}

Vector outer3(const Vector& a, const Vector& b, const Vector& c) {
  Vector out(a.size() * b.size() * c.size());
  Eigen::Index idx = 0;
  for (Eigen::Index k = 0; k < c.size(); ++k)
    for (Eigen::Index j = 0; j < b.size(); ++j)
      for (Eigen::Index i = 0; i < a.size(); ++i)
        out(idx++) = a(i) * b(j) * c(k);
  return out;
}

} // namespace

TEST(RankOne, AllOnesFactors) {
  const std::vector<Vector> f(3, Vector::Ones(2));
  const TtTensor x = rank_one(f);
  EXPECT_EQ(x.ranks(), (std::vector<std::size_t>{1, 1, 1, 1}));
  for (double v : to_dense(x).data)
    EXPECT_EQ(v, 1.0);
}

TEST(RankOne, ScalarFactors) {
  const std::vector<Vector> f{Vector::Constant(1, 2.0), Vector::Constant(1, 3.0), Vector::Constant(1, 5.0)};
  const auto d = to_dense(rank_one(f));
  ASSERT_EQ(d.data.size(), 1u);
  EXPECT_EQ(d.data[0], 30.0);
}

TEST(RankOne, MatchesOuterProduct) {
  std::mt19937_64 rng(3);
  const std::vector<Vector> f{gaussian_vector(4, rng), gaussian_vector(4, rng), gaussian_vector(4, rng)};
  const Vector expected = outer3(f[0], f[1], f[2]);
  const Vector got = dense_vec(rank_one(f));
  for (Eigen::Index i = 0; i < expected.size(); ++i)
    EXPECT_NEAR(got(i), expected(i), 1e-14);
}

TEST(TtSvd, OuterProductHasRankOne) {
  std::mt19937_64 rng(4);
  const Vector v = outer3(gaussian_vector(3, rng), gaussian_vector(4, rng), gaussian_vector(5, rng));
  const auto r = tt_svd(dense_of({3, 4, 5}, v), 0.0);
  EXPECT_EQ(r.tensor.ranks(), (std::vector<std::size_t>{1, 1, 1, 1}));
  EXPECT_LE((dense_vec(r.tensor) - v).norm(), 1e-12 * v.norm());
}

TEST(TtSvd, RandomReconstruction) {
  std::mt19937_64 rng(5);
  const Vector v = gaussian_vector(64, rng);
  const auto r = tt_svd(dense_of({4, 4, 4}, v), 0.0);
  EXPECT_LE((dense_vec(r.tensor) - v).norm(), 1e-12 * v.norm());
}

TEST(TtSvd, RecoversPrescribedRanks) {
  std::mt19937_64 rng(6);
  const TtTensor x = random_tt({4, 5, 6}, {1, 2, 3, 1}, rng);
  const auto r = tt_svd(to_dense(x), 0.0);
  EXPECT_EQ(r.tensor.ranks(), (std::vector<std::size_t>{1, 2, 3, 1}));
  EXPECT_LE(rel_diff(dense_vec(r.tensor), dense_vec(x)), 1e-12);
}

TEST(TtSvd, FrozenUnfoldingSpectrum) {
  const Vector v = det_vector(60, 400);
  const auto full = tt_svd(dense_of({4, 5, 3}, v), 0.0);
  EXPECT_EQ(full.tensor.ranks(), (std::vector<std::size_t>{1, 4, 3, 1}));
  // A cap of 2 on the first bond discards sigma_3, sigma_4 of the first unfolding.
  const auto capped = tt_svd(dense_of({4, 5, 3}, v), 0.0, 2);
  const double tail = std::hypot(frozen::kUnfolding1Singular[2], frozen::kUnfolding1Singular[3]);
  EXPECT_NEAR(capped.report.truncation_errors[0], tail, 1e-12);
  EXPECT_NEAR(full.report.input_norm, v.norm(), 1e-13);
  double s2 = 0.0;
  for (double s : frozen::kUnfolding2Singular)
    s2 += s * s;
  EXPECT_NEAR(std::sqrt(s2), v.norm(), 1e-12);
}

TEST(TtSvd, ToleranceControlsError) {
  std::mt19937_64 rng(7);
  const Vector v = gaussian_vector(5 * 6 * 4 * 3, rng);
  for (double tol : {0.3, 0.1, 1e-2}) {
    const auto r = tt_svd(dense_of({5, 6, 4, 3}, v), tol);
    EXPECT_LE((dense_vec(r.tensor) - v).norm(), tol * v.norm() * (1 + 1e-12));
  }
}

TEST(ToDense, ElementCapEnforced) {
  const std::vector<Vector> f(3, Vector::Ones(200));
  EXPECT_THROW(to_dense(rank_one(f)), Error);
  EXPECT_NO_THROW(to_dense(rank_one(f), 8'000'000));
}

TEST(ToDense, SingleModeIsTheVector) {
  const Vector v = det_vector(7, 1);
  EXPECT_EQ(dense_vec(rank_one(std::vector<Vector>{v})), v);
}

TEST(ToDense, RoundTripThroughTtSvd) {
  std::mt19937_64 rng(8);
  const TtTensor x = random_tt({3, 4, 2, 3}, {1, 2, 3, 2, 1}, rng);
  const auto r = tt_svd(to_dense(x), 0.0);
  EXPECT_LE(rel_diff(dense_vec(r.tensor), dense_vec(x)), 1e-12);
}

TEST(Evaluate, MatchesDenseEntries) {
  std::mt19937_64 rng(9);
  const DenseTensor a = dense_of({3, 4, 5}, gaussian_vector(60, rng));
  const TtTensor x = tt_svd(a, 0.0).tensor;
  for (std::size_t k = 0; k < 5; ++k)
    for (std::size_t j = 0; j < 4; ++j)
      for (std::size_t i = 0; i < 3; ++i) {
        const std::vector<std::size_t> idx{i, j, k};
        EXPECT_NEAR(evaluate(x, idx), a.data[a.linear_index(idx)], 1e-12);
      }
  const std::vector<std::size_t> idx{1, 2, 3};
  EXPECT_EQ(evaluate(scale(x, 0.0), idx), 0.0);
  EXPECT_EQ(evaluate(rank_one(std::vector<Vector>(3, Vector::Ones(4))), idx), 1.0);
}

TEST(Axpy, RanksAdd) {
  std::mt19937_64 rng(10);
  const TtTensor x = random_tt({3, 4, 5}, {1, 2, 2, 1}, rng);
  const TtTensor y = random_tt({3, 4, 5}, {1, 3, 1, 1}, rng);
  EXPECT_EQ(axpy(1.0, x, y).ranks(), (std::vector<std::size_t>{1, 5, 3, 1}));
}

TEST(Axpy, Cancellation) {
  std::mt19937_64 rng(11);
  const TtTensor x = random_tt({3, 4, 5}, {1, 2, 2, 1}, rng);
  EXPECT_LE(dense_vec(axpy(-1.0, x, x)).cwiseAbs().maxCoeff(), 1e-14 * norm(x));
}

TEST(Axpy, DenseOracle) {
  std::mt19937_64 rng(12);
  const TtTensor x = random_tt({3, 4, 5}, {1, 2, 3, 1}, rng);
  const TtTensor y = random_tt({3, 4, 5}, {1, 3, 2, 1}, rng);
  EXPECT_LE(rel_diff(dense_vec(axpy(2.0, x, y)), 2.0 * dense_vec(x) + dense_vec(y)), 1e-12);
}

TEST(Axpy, ShapeMismatchRejected) {
  std::mt19937_64 rng(13);
  const TtTensor x = random_tt({3, 4}, {1, 2, 1}, rng);
  const TtTensor y = random_tt({3, 5}, {1, 2, 1}, rng);
  try {
    axpy(1.0, x, y);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::dimension_mismatch);
  }
}

TEST(LinearCombination, DenseOracle) {
  std::mt19937_64 rng(14);
  const TtTensor a = random_tt({2, 3, 4}, {1, 2, 2, 1}, rng);
  const TtTensor b = random_tt({2, 3, 4}, {1, 1, 3, 1}, rng);
  const TtTensor c = random_tt({2, 3, 4}, {1, 2, 1, 1}, rng);
  const std::vector<WeightedTensor> terms{{0.5, &a}, {-2.0, &b}, {3.0, &c}};
  const Vector expected = 0.5 * dense_vec(a) - 2.0 * dense_vec(b) + 3.0 * dense_vec(c);
  const TtTensor sum = linear_combination(terms);
  EXPECT_EQ(sum.ranks(), (std::vector<std::size_t>{1, 5, 6, 1}));
  EXPECT_LE(rel_diff(dense_vec(sum), expected), 1e-12);
  EXPECT_LE(rel_diff(dense_vec(round_sum(terms, 1e-13).tensor), expected), 1e-12);
}

TEST(Scale, IdentityZeroAndDense) {
  std::mt19937_64 rng(15);
  const TtTensor x = random_tt({3, 4, 5}, {1, 2, 2, 1}, rng);
  const TtTensor one = scale(x, 1.0);
  for (std::size_t k = 0; k < 3; ++k) {
    const auto a = x.core(k).values();
    const auto b = one.core(k).values();
    EXPECT_TRUE(std::equal(a.begin(), a.end(), b.begin(), b.end()));
  }
  EXPECT_EQ(norm(scale(x, 0.0)), 0.0);
  EXPECT_LE(rel_diff(dense_vec(scale(x, -3.0)), -3.0 * dense_vec(x)), 1e-14);
}

TEST(Inner, SelfInnerIsSquaredNorm) {
  std::mt19937_64 rng(16);
  const TtTensor x = random_tt({3, 4, 5}, {1, 3, 2, 1}, rng);
  const double n = norm(x);
  EXPECT_NEAR(inner(x, x), n * n, 1e-12 * n * n);
}

TEST(Inner, OrthogonalFactors) {
  Vector e1 = Vector::Zero(3), e2 = Vector::Zero(3);
  e1(0) = 1.0;
  e2(1) = 1.0;
  const Vector w = det_vector(4, 3);
  EXPECT_EQ(inner(rank_one(std::vector<Vector>{e1, w, w}), rank_one(std::vector<Vector>{e2, w, w})), 0.0);
}

TEST(Inner, DenseOracle) {
  std::mt19937_64 rng(17);
  const TtTensor x = random_tt({3, 4, 5}, {1, 2, 3, 1}, rng);
  const TtTensor y = random_tt({3, 4, 5}, {1, 3, 2, 1}, rng);
  const double expected = dense_vec(x).dot(dense_vec(y));
  EXPECT_NEAR(inner(x, y), expected, 1e-12 * std::abs(expected));
}

TEST(Inner, BilinearSymmetricCauchySchwarz) {
  std::mt19937_64 rng(18);
  for (int trial = 0; trial < 20; ++trial) {
    const TtTensor x = random_tt({2, 3, 4}, {1, 2, 2, 1}, rng);
    const TtTensor y = random_tt({2, 3, 4}, {1, 3, 1, 1}, rng);
    const TtTensor z = random_tt({2, 3, 4}, {1, 1, 2, 1}, rng);
    const double xy = inner(x, y);
    EXPECT_NEAR(xy, inner(y, x), 1e-12 * norm(x) * norm(y));
    EXPECT_LE(std::abs(xy), norm(x) * norm(y) * (1 + 1e-12));
    const double lhs = inner(axpy(2.5, x, z), y);
    EXPECT_NEAR(lhs, 2.5 * xy + inner(z, y), 1e-11 * (norm(x) + norm(z)) * norm(y));
  }
}

TEST(Norm, UnitFactorsAndHomogeneity) {
  Vector a = det_vector(3, 1), b = det_vector(4, 2), c = det_vector(5, 3);
  a.normalize();
  b.normalize();
  c.normalize();
  EXPECT_NEAR(norm(rank_one(std::vector<Vector>{a, b, c})), 1.0, 1e-15);
  std::mt19937_64 rng(19);
  const TtTensor x = random_tt({3, 4, 5}, {1, 2, 2, 1}, rng);
  EXPECT_NEAR(norm(scale(x, -7.0)), 7.0 * norm(x), 1e-14 * 7.0 * norm(x));
  EXPECT_NEAR(norm(x), dense_vec(x).norm(), 1e-12 * norm(x));
  EXPECT_EQ(norm(TtTensor::zeros(std::vector<std::size_t>{3, 4})), 0.0);
}

TEST(Round, DuplicateSumReturnsToOriginalRanks) {
  std::mt19937_64 rng(20);
  const TtTensor x = random_tt({3, 4, 5, 3}, {1, 2, 3, 2, 1}, rng);
  const auto r = round(axpy(1.0, x, x), 1e-12);
  EXPECT_EQ(r.tensor.ranks(), x.ranks());
  EXPECT_LE(rel_diff(dense_vec(r.tensor), 2.0 * dense_vec(x)), 1e-12);
}

TEST(Round, ToleranceBound) {
  std::mt19937_64 rng(21);
  const TtTensor x = random_tt({4, 5, 4, 3}, {1, 4, 5, 3, 1}, rng);
  const auto r = round(x, 1e-4);
  EXPECT_LE((dense_vec(r.tensor) - dense_vec(x)).norm(), 1e-4 * norm(x));
}

TEST(Round, RankCapReportsError) {
  std::mt19937_64 rng(22);
  const TtTensor x = random_tt({4, 4, 4}, {1, 2, 2, 1}, rng);
  const auto r = round(x, 0.0, 1);
  EXPECT_EQ(r.tensor.ranks(), (std::vector<std::size_t>{1, 1, 1, 1}));
  EXPECT_GT(r.report.truncation_errors[0], 0.0);
  EXPECT_EQ(r.report.max_rank_used, std::optional<std::size_t>{1});
  EXPECT_EQ(r.report.input_ranks, x.ranks());
}

TEST(Round, Idempotent) {
  std::mt19937_64 rng(23);
  for (int trial = 0; trial < 10; ++trial) {
    const TtTensor x = random_tt({3, 4, 5, 4}, {1, 3, 4, 3, 1}, rng);
    for (double tol : {1e-1, 1e-3}) {
      const auto once = round(x, tol);
      const auto twice = round(once.tensor, tol);
      EXPECT_EQ(twice.tensor.ranks(), once.tensor.ranks());
    }
  }
}

TEST(Round, ZeroTensorStaysZero) {
  const TtTensor z = TtTensor::zeros(std::vector<std::size_t>{3, 4, 5});
  const auto r = round(z, 1e-8);
  EXPECT_EQ(norm(r.tensor), 0.0);
  EXPECT_EQ(r.tensor.max_rank(), 1u);
}

TEST(Storage, SumOfCoreSizes) {
  std::mt19937_64 rng(24);
  const TtTensor x = random_tt({3, 4, 5}, {1, 2, 3, 1}, rng);
  EXPECT_EQ(x.storage(), 1u * 3 * 2 + 2u * 4 * 3 + 3u * 5 * 1);
}

TEST(Construction, BrokenRankChainRejected) {
  std::vector<TtCore> cores{TtCore(1, 3, 2), TtCore(3, 4, 1)};
  EXPECT_THROW(TtTensor(std::move(cores)), Error);
  std::vector<TtCore> open{TtCore(2, 3, 1)};
  EXPECT_THROW(TtTensor(std::move(open)), Error);
  EXPECT_THROW(TtCore(1, 2, 1, {1.0, NAN}), Error);
  EXPECT_THROW(TtCore(1, 2, 2, {1.0, 2.0}), Error);
}

TEST(ModeProduct, IdentityAndRankOne) {
  std::mt19937_64 rng(25);
  const TtTensor x = random_tt({3, 4, 5}, {1, 2, 2, 1}, rng);
  EXPECT_LE(rel_diff(dense_vec(mode_product(x, 1, Matrix::Identity(4, 4))), dense_vec(x)), 1e-15);
  const std::vector<Vector> f{det_vector(3, 1), det_vector(4, 2), det_vector(5, 3)};
  const Matrix m = det_matrix(6, 4, 4);
  const TtTensor y = mode_product(rank_one(f), 1, m);
  EXPECT_EQ(y.ranks(), (std::vector<std::size_t>{1, 1, 1, 1}));
  EXPECT_LE(rel_diff(dense_vec(y), outer3(f[0], m * f[1], f[2])), 1e-14);
}

TEST(ModeProduct, DenseOracleEveryMode) {
  std::mt19937_64 rng(26);
  const std::vector<std::size_t> sizes{3, 4, 5};
  const TtTensor x = random_tt(sizes, {1, 2, 3, 1}, rng);
  const Vector v = dense_vec(x);
  for (std::size_t mode = 0; mode < 3; ++mode) {
    const Matrix m = gaussian(2, static_cast<Eigen::Index>(sizes[mode]), rng);
    std::vector<Matrix> factors{Matrix::Identity(3, 3), Matrix::Identity(4, 4), Matrix::Identity(5, 5)};
    factors[mode] = m;
    const Matrix k = kron_sum_dense({factors});
    EXPECT_LE(rel_diff(dense_vec(mode_product(x, mode, m)), k * v), 1e-12);
  }
}

TEST(Json, RoundTripIsExact) {
  std::mt19937_64 rng(27);
  const TtTensor x = random_tt({3, 4, 2}, {1, 2, 3, 1}, rng);
  const TtTensor y = tt_from_json(tt_to_json(x));
  ASSERT_EQ(y.ranks(), x.ranks());
  for (std::size_t k = 0; k < 3; ++k) {
    const auto a = x.core(k).values();
    const auto b = y.core(k).values();
    EXPECT_TRUE(std::equal(a.begin(), a.end(), b.begin(), b.end()));
  }
}

TEST(Json, RowMajorCoreLayout) {
  TtCore c(2, 2, 1);
  c(0, 0, 0) = 1.0;
  c(0, 1, 0) = 2.0;
  c(1, 0, 0) = 3.0;
  c(1, 1, 0) = 4.0;
  TtCore last(1, 1, 1, {1.0});
  TtCore first(1, 1, 2, {1.0, 1.0});
  const std::string json = tt_to_json(TtTensor({first, c, last}));
  EXPECT_NE(json.find("[1.0,2.0,3.0,4.0]"), std::string::npos) << json;
}

TEST(Json, MalformedDocumentsRejected) {
  EXPECT_THROW(tt_from_json("{"), Error);
  EXPECT_THROW(tt_from_json(R"({"mode_sizes":[2],"tt_ranks":[1,1],"cores":[[1.0]]})"), Error);
  EXPECT_THROW(tt_from_json(R"({"mode_sizes":[2],"tt_ranks":[1,2],"cores":[[1.0,2.0]]})"), Error);
}
