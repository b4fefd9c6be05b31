#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "frozen_values.hpp"
#include "test_support.hpp"
#include "ttlsqr/io.hpp"
#include "ttlsqr/lsqr.hpp"
#include "ttlsqr/pde.hpp"

using namespace ttlsqr;
using namespace testing_support;

namespace {

struct FrozenInstance {
  std::vector<std::vector<Matrix>> terms;
  KronSumOperator op;
  std::vector<Vector> rhs_factors;
  TtTensor rhs;
};

FrozenInstance frozen_instance() {
  std::vector<std::vector<Matrix>> terms(2);
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 3; ++j)
      terms[i].push_back(det_matrix(5, 2, 100 + 10 * i + j));
  std::vector<Vector> f;
  for (int j = 0; j < 3; ++j)
    f.push_back(det_vector(5, 200 + j));
  KronSumOperator op = make_operator(terms);
  TtTensor rhs = rank_one(f);
  return {terms, std::move(op), f, std::move(rhs)};
}

SolveOptions exact_options(std::size_t iters) {
  SolveOptions o;
  o.round_tol = 1e-14;
  o.max_iters = iters;
  o.ne_resid_tol = 0.0;
  return o;
}

} // namespace

TEST(TtLsqr, ZeroRhs) {
  const auto inst = frozen_instance();
  const TtTensor f = TtTensor::zeros(std::vector<std::size_t>{5, 5, 5});
  const SolveResult r = tt_lsqr(inst.op, f, exact_options(10));
  EXPECT_EQ(r.status, SolveStatus::converged);
  EXPECT_EQ(r.iterations, 0u);
  EXPECT_EQ(norm(r.x), 0.0);
  EXPECT_EQ(r.x.mode_sizes(), (std::vector<std::size_t>{2, 2, 2}));
}

TEST(TtLsqr, FrozenLeastSquaresSolution) {
  const auto inst = frozen_instance();
  SolveOptions o = exact_options(60);
  o.ne_resid_tol = 1e-12;
  const SolveResult r = tt_lsqr(inst.op, inst.rhs, o);
  const Vector expected = Eigen::Map<const Vector>(frozen::kLsqSolution, 8);
  EXPECT_LE(rel_diff(dense_vec(r.x), expected), 1e-8);
  EXPECT_LE(r.iterations, 60u);
  EXPECT_NEAR(residual_norm(inst.op, inst.rhs, r.x), frozen::kLsqResidual, 1e-9);
}

TEST(TtLsqr, IteratesMatchVectorLsqr) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 6; ++trial) {
    std::uniform_int_distribution<std::size_t> dim(2, 4), cols(1, 2), ell(1, 3);
    const std::size_t d = 2 + trial % 2;
    std::vector<std::size_t> n(d), m(d);
    for (std::size_t j = 0; j < d; ++j) {
      n[j] = dim(rng) + 1;
      m[j] = cols(rng);
    }
    const auto terms = random_terms(ell(rng), n, m, rng);
    const KronSumOperator l = make_operator(terms);
    const Matrix a = kron_sum_dense(terms);
    std::vector<Vector> fs;
    for (std::size_t j = 0; j < d; ++j)
      fs.push_back(gaussian_vector(static_cast<Eigen::Index>(n[j]), rng));
    const TtTensor f = rank_one(fs);
    const Vector fv = dense_vec(f);

    std::vector<Vector> vector_iterates;
    vector_lsqr(a, fv, 0.0, 4, [&](std::size_t, const Vector& x) { vector_iterates.push_back(x); });
    std::vector<Vector> tt_iterates;
    SolveOptions o = exact_options(4);
    o.on_iterate = [&](const LsqrState& s, const TraceRecord&) {
      tt_iterates.push_back(dense_vec(s.x));
      return true;
    };
    tt_lsqr(l, f, o);
    const std::size_t k = std::min(tt_iterates.size(), vector_iterates.size());
    ASSERT_GE(k, 1u);
    for (std::size_t i = 0; i < k; ++i)
      EXPECT_LE(rel_diff(tt_iterates[i], vector_iterates[i]), 1e-8) << "iteration " << i + 1;
  }
}

TEST(TtLsqr, GivensInvariantsAndMonotoneEstimate) {
  const auto inst = frozen_instance();
  SolveOptions o = exact_options(30);
  double prev = INFINITY;
  bool ok = true;
  o.on_iterate = [&](const LsqrState& s, const TraceRecord&) {
    ok = ok && std::abs(s.c * s.c + s.s * s.s - 1.0) <= 1e-14;
    ok = ok && s.phi_bar <= prev;
    prev = s.phi_bar;
    return true;
  };
  tt_lsqr(inst.op, inst.rhs, o);
  EXPECT_TRUE(ok);
}

TEST(TtLsqr, NormalResidualEstimateMatchesExplicit) {
  const auto inst = frozen_instance();
  SolveOptions o = exact_options(5);
  o.true_residual_every = 1;
  const SolveResult r = tt_lsqr(inst.op, inst.rhs, o);
  ASSERT_FALSE(r.trace.records.empty());
  for (const auto& rec : r.trace.records) {
    ASSERT_TRUE(rec.ne_resid_true && rec.resid_true);
    EXPECT_NEAR(rec.ne_resid_est, *rec.ne_resid_true, 1e-6 * *rec.ne_resid_true);
    EXPECT_NEAR(rec.resid_est, *rec.resid_true, 1e-6 * *rec.resid_true);
  }
}

TEST(TtLsqr, InitialEstimateIsRhsNorm) {
  LsqrState s;
  s.phi_bar = 3.5;
  s.alpha = 2.0;
  s.c = -0.5;
  const auto [r, ne] = estimate_residuals(s);
  EXPECT_EQ(r, 3.5);
  EXPECT_EQ(ne, 3.5);
}

TEST(TtLsqr, ConsistentSquareSystemBreaksDown) {
  std::mt19937_64 rng(3);
  const Matrix a = gaussian(2, 2, rng) + 3.0 * Matrix::Identity(2, 2);
  const KronSumOperator l = make_operator({{a, Matrix(Matrix::Identity(2, 2))}});
  const TtTensor f = rank_one(std::vector<Vector>{gaussian_vector(2, rng), gaussian_vector(2, rng)});
  SolveOptions o = exact_options(20);
  const SolveResult r = tt_lsqr(l, f, o);
  EXPECT_TRUE(r.status == SolveStatus::breakdown || r.status == SolveStatus::converged) << to_string(r.status);
  EXPECT_LE(r.trace.records.back().resid_est, 1e-12);
  EXPECT_LE(residual_norm(l, f, r.x), 1e-12 * norm(f));
}

TEST(TtLsqr, ConvergenceTestStopsEarly) {
  const auto inst = frozen_instance();
  SolveOptions o = exact_options(60);
  o.ne_resid_tol = 1e-6;
  const SolveResult r = tt_lsqr(inst.op, inst.rhs, o);
  EXPECT_EQ(r.status, SolveStatus::converged);
  EXPECT_LE(r.trace.records.back().ne_resid_est, 1e-6);
  EXPECT_EQ(r.trace.records.size(), r.iterations);
}

TEST(TtLsqr, RankCapHonoured) {
  const PdeProblem p = build_convection_problem(12);
  SolveOptions o;
  o.round_tol = 1e-10;
  o.max_rank = 3;
  o.max_iters = 15;
  o.ne_resid_tol = 0.0;
  const SolveResult r = tt_lsqr(p.op, p.rhs, o);
  for (const auto& rec : r.trace.records)
    EXPECT_LE(rec.max_rank, 3u);
  EXPECT_LE(r.x.max_rank(), 3u);
}

TEST(TtLsqr, PreconditionedMatchesDenseSolution) {
  std::mt19937_64 rng(4);
  const auto terms = random_terms(2, {5, 4, 5}, {2, 2, 3}, rng);
  const KronSumOperator l = make_operator(terms);
  const TtTensor f = rank_one(std::vector<Vector>{gaussian_vector(5, rng), gaussian_vector(4, rng), gaussian_vector(5, rng)});
  const Matrix a = kron_sum_dense(terms);
  const Vector expected = a.colPivHouseholderQr().solve(dense_vec(f));
  const Preconditioner p = build_preconditioner(l);
  SolveOptions o = exact_options(80);
  o.ne_resid_tol = 1e-12;
  const SolveResult r = tt_lsqr(l, f, o, &p);
  EXPECT_LE(rel_diff(dense_vec(r.x), expected), 1e-8);
}

TEST(TtLsqr, InitialGuessShiftsProblem) {
  const auto inst = frozen_instance();
  SolveOptions o = exact_options(60);
  o.ne_resid_tol = 1e-12;
  const Vector expected = Eigen::Map<const Vector>(frozen::kLsqSolution, 8);
  std::mt19937_64 rng(5);
  const TtTensor x0 = random_tt({2, 2, 2}, {1, 2, 2, 1}, rng);
  const SolveResult r = tt_lsqr(inst.op, inst.rhs, o, nullptr, &x0);
  EXPECT_LE(rel_diff(dense_vec(r.x), expected), 1e-8);
}

TEST(TtLsqr, ObserverCanStop) {
  const auto inst = frozen_instance();
  SolveOptions o = exact_options(30);
  o.on_iterate = [](const LsqrState& s, const TraceRecord&) { return s.iteration < 3; };
  const SolveResult r = tt_lsqr(inst.op, inst.rhs, o);
  EXPECT_EQ(r.status, SolveStatus::stopped);
  EXPECT_EQ(r.iterations, 3u);
}

TEST(TtLsqr, TrueResidualsOfExactSolution) {
  const auto inst = frozen_instance();
  const Matrix a = kron_sum_dense(inst.terms);
  const Vector x = a.colPivHouseholderQr().solve(dense_vec(inst.rhs));
  std::vector<TtCore> cores;
  DenseTensor d;
  d.shape = {2, 2, 2};
  d.data.assign(x.data(), x.data() + 8);
  const auto [r, ne] = true_residuals(inst.op, inst.rhs, tt_svd(d, 0.0).tensor);
  EXPECT_NEAR(r, frozen::kLsqResidual, 1e-12);
  EXPECT_LE(ne, 1e-12);
}

TEST(VectorLsqr, IdentityOneIteration) {
  const Vector f = det_vector(6, 1);
  const auto r = vector_lsqr(Matrix(Matrix::Identity(6, 6)), f, 1e-12, 10);
  EXPECT_EQ(r.iterations, 1u);
  EXPECT_LE((r.x - f).norm(), 1e-15);
}

TEST(VectorLsqr, FrozenSolution) {
  const auto r = vector_lsqr(det_matrix(20, 5, 7), det_vector(20, 8), 1e-12, 50);
  const Vector expected = Eigen::Map<const Vector>(frozen::kVectorLsqSolution, 5);
  EXPECT_LE((r.x - expected).cwiseAbs().maxCoeff(), 1e-9);
  EXPECT_TRUE(r.converged);
}

TEST(VectorLsqr, ZeroRhs) {
  const auto r = vector_lsqr(det_matrix(20, 5, 7), Vector::Zero(20), 1e-12, 50);
  EXPECT_EQ(r.iterations, 0u);
  EXPECT_EQ(r.x, Vector::Zero(5));
}

TEST(Trace, CsvRoundTrip) {
  const auto inst = frozen_instance();
  SolveOptions o = exact_options(10);
  o.true_residual_every = 3;
  const SolveResult r = tt_lsqr(inst.op, inst.rhs, o);
  ASSERT_EQ(r.trace.records.size(), 10u);
  std::stringstream ss;
  write_trace_csv(r.trace, ss);
  std::string header;
  std::getline(ss, header);
  EXPECT_EQ(header, kTraceHeader);
  ss.seekg(0);
  const auto back = read_trace_csv(ss);
  ASSERT_EQ(back.size(), 10u);
  for (std::size_t i = 0; i < back.size(); ++i) {
    const auto& a = r.trace.records[i];
    const auto& b = back[i];
    EXPECT_EQ(a.iter, b.iter);
    EXPECT_EQ(a.resid_est, b.resid_est);
    EXPECT_EQ(a.ne_resid_est, b.ne_resid_est);
    EXPECT_EQ(a.ne_resid_true, b.ne_resid_true);
    EXPECT_EQ(a.max_rank, b.max_rank);
    EXPECT_EQ(a.seconds, b.seconds);
  }
  EXPECT_TRUE(back[2].ne_resid_true.has_value());
  EXPECT_FALSE(back[0].ne_resid_true.has_value());
}

TEST(Trace, EmptyTraceIsHeaderOnly) {
  std::stringstream ss;
  write_trace_csv(LsqrTrace{}, ss);
  EXPECT_EQ(ss.str(), std::string(kTraceHeader) + "\n");
}

TEST(Trace, MalformedCsvReportsLine) {
  std::stringstream ss(std::string(kTraceHeader) + "\n1,0.5,0.25,,3,0.1\n2,abc,0.1,,3,0.2\n");
  try {
    read_trace_csv(ss);
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos) << e.what();
  }
}

TEST(Format, LocaleIndependentShortest) {
  EXPECT_EQ(format_double(0.1), "0.1");
  EXPECT_EQ(parse_double("1e-8"), 1e-8);
  EXPECT_EQ(parse_double(format_double(1.0 / 3.0)), 1.0 / 3.0);
  EXPECT_THROW(parse_double("1,5"), Error);
}
