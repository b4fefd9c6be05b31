#include "ttlsqr/sketch.hpp"

#include <chrono>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

namespace ttlsqr {

namespace {

/// Unbiased integer in [0, bound) by rejection; independent of the standard
/// library's distribution implementations.
std::uint64_t bounded(std::mt19937_64& rng, std::uint64_t bound) {
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % bound;
  std::uint64_t v;
  do {
    v = rng();
  } while (v >= limit);
  return v % bound;
}

std::size_t next_pow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n)
    p <<= 1;
  return p;
}

} // namespace

void fwht(std::span<double> x) {
  const std::size_t n = x.size();
  require(n > 0 && (n & (n - 1)) == 0, ErrorCode::invalid_argument,
          "Hadamard transform length must be a power of two");
  for (std::size_t h = 1; h < n; h <<= 1)
    for (std::size_t i = 0; i < n; i += 2 * h)
      for (std::size_t j = i; j < i + h; ++j) {
        const double a = x[j];
        const double b = x[j + h];
        x[j] = a + b;
        x[j + h] = a - b;
      }
}

Sketcher::Sketcher(std::size_t n, std::size_t s, std::uint64_t seed)
    : n_(n), s_(s), padded_(next_pow2(n)), seed_(seed) {
  require(n >= 1, ErrorCode::invalid_argument, "sketch input dimension must be positive");
  require(s >= 1 && s <= n, ErrorCode::invalid_argument,
          "sketch size must lie in [1, n]; got s=" + std::to_string(s) + ", n=" + std::to_string(n));
  scale_ = 1.0 / std::sqrt(static_cast<double>(s));
  std::mt19937_64 rng(seed);
  signs_.resize(padded_);
  for (auto& v : signs_)
    v = (rng() >> 63) ? -1.0 : 1.0;
  std::vector<std::size_t> perm(padded_);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  for (std::size_t i = 0; i < s; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(bounded(rng, padded_ - i));
    std::swap(perm[i], perm[j]);
  }
  rows_.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(s));
}

Matrix Sketcher::apply(const Matrix& a) const {
  require(static_cast<std::size_t>(a.rows()) == n_, ErrorCode::dimension_mismatch,
          "sketch input has " + std::to_string(a.rows()) + " rows, expected " + std::to_string(n_));
  Matrix out(static_cast<Eigen::Index>(s_), a.cols());
  std::vector<double> work(padded_);
  for (Eigen::Index c = 0; c < a.cols(); ++c) {
    std::fill(work.begin(), work.end(), 0.0);
    for (std::size_t i = 0; i < n_; ++i)
      work[i] = signs_[i] * a(static_cast<Eigen::Index>(i), c);
    fwht(work);
    for (std::size_t r = 0; r < s_; ++r)
      out(static_cast<Eigen::Index>(r), c) = scale_ * work[rows_[r]];
  }
  return out;
}

Vector Sketcher::apply(const Vector& a) const {
  return apply(Matrix(a)).col(0);
}

std::size_t default_sketch_size(std::size_t modes, std::size_t m_bar) { return 2 * modes * m_bar; }

KronSumOperator sketch_operator(const Sketcher& sk, const KronSumOperator& l) {
  const std::size_t d = l.num_modes();
  for (std::size_t j = 0; j < d; ++j)
    require(l.row_sizes()[j] == sk.input_dim(), ErrorCode::dimension_mismatch,
            "every mode needs row dimension " + std::to_string(sk.input_dim()) + " to share one sketch");
  std::vector<std::vector<ModeMatrix>> terms;
  for (std::size_t i = 0; i < l.num_terms(); ++i) {
    std::vector<ModeMatrix> row;
    for (std::size_t j = 0; j < d; ++j)
      row.emplace_back(sk.apply(l.term(i, j).to_dense()));
    terms.push_back(std::move(row));
  }
  return KronSumOperator(std::move(terms));
}

namespace {

TtTensor sketch_rhs(const Sketcher& sk, std::span<const Vector> rhs_factors, std::size_t modes) {
  require(rhs_factors.size() == modes, ErrorCode::dimension_mismatch, "one RHS factor per mode is required");
  std::vector<Vector> factors;
  for (const auto& f : rhs_factors)
    factors.push_back(sk.apply(f));
  return rank_one(factors);
}

} // namespace

SketchedProblem sketch_problem(const Sketcher& sk, const KronSumOperator& l,
                               std::span<const Vector> rhs_factors) {
  KronSumOperator op = sketch_operator(sk, l);
  TtTensor rhs = sketch_rhs(sk, rhs_factors, l.num_modes());
  return {std::move(op), std::move(rhs)};
}

TwoPassResult two_pass_solve(const KronSumOperator& l, const Sketcher& sk, const KronSumOperator& sketched,
                             std::span<const Vector> rhs_factors, const SolveOptions& opts,
                             std::size_t sketch_iters, std::size_t refine_iters) {
  using Clock = std::chrono::steady_clock;
  require(sketch_iters >= 1, ErrorCode::invalid_argument, "sketch_iters must be at least 1");
  require(sketched.num_modes() == l.num_modes() && sketched.col_sizes() == l.col_sizes(),
          ErrorCode::dimension_mismatch, "sketched operator does not match the operator");
  const auto t0 = Clock::now();
  const TtTensor f_hat = sketch_rhs(sk, rhs_factors, l.num_modes());
  SolveOptions first = opts;
  first.max_iters = sketch_iters;
  SolveResult result = tt_lsqr(sketched, f_hat, first);
  const auto t1 = Clock::now();

  TwoPassResult out{result.x, result.x, std::move(result), std::nullopt,
                    std::chrono::duration<double>(t1 - t0).count(), 0.0};
  if (refine_iters == 0)
    return out;
  SolveOptions second = opts;
  second.max_iters = refine_iters;
  const TtTensor f = rank_one(rhs_factors);
  SolveResult refined = tt_lsqr(l, f, second, nullptr, &out.x0);
  out.refine_seconds = std::chrono::duration<double>(Clock::now() - t1).count();
  out.x = refined.x;
  out.refined = std::move(refined);
  return out;
}

TwoPassResult two_pass_solve(const KronSumOperator& l, std::span<const Vector> rhs_factors,
                             const SolveOptions& opts, const TwoPassOptions& two_pass) {
  const std::size_t m_bar = l.num_terms() * l.col_sizes().front();
  const std::size_t s =
      two_pass.sketch_size ? two_pass.sketch_size : default_sketch_size(l.num_modes(), m_bar);
  const auto t0 = std::chrono::steady_clock::now();
  const Sketcher sk(l.row_sizes().front(), s, two_pass.seed);
  const KronSumOperator sketched = sketch_operator(sk, l);
  const double build = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  TwoPassResult out =
      two_pass_solve(l, sk, sketched, rhs_factors, opts, two_pass.sketch_iters, two_pass.refine_iters);
  out.sketch_seconds += build;
  return out;
}

} // namespace ttlsqr
