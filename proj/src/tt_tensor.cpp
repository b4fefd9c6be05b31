#include "ttlsqr/tt_tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "linalg.hpp"

namespace ttlsqr {

namespace {

std::size_t checked_product(std::size_t a, std::size_t b, std::size_t c) {
  require(a >= 1 && b >= 1 && c >= 1, ErrorCode::invalid_argument,
          "TT core dimensions must be positive");
  return a * b * c;
}

} // namespace

// ---------------------------------------------------------------------------
// TtCore

TtCore::TtCore(std::size_t left_rank, std::size_t mode_size, std::size_t right_rank)
    : left_(left_rank), mode_(mode_size), right_(right_rank),
      values_(checked_product(left_rank, mode_size, right_rank), 0.0) {}

TtCore::TtCore(std::size_t left_rank, std::size_t mode_size, std::size_t right_rank,
               std::vector<double> values)
    : left_(left_rank), mode_(mode_size), right_(right_rank), values_(std::move(values)) {
  require(values_.size() == checked_product(left_, mode_, right_), ErrorCode::dimension_mismatch,
          "TT core value count does not match its shape");
  require(std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); }),
          ErrorCode::numerical, "TT core contains non-finite values");
}

Eigen::Map<const Matrix> TtCore::left_unfolding() const {
  return {values_.data(), static_cast<Eigen::Index>(left_ * mode_), static_cast<Eigen::Index>(right_)};
}
Eigen::Map<Matrix> TtCore::left_unfolding() {
  return {values_.data(), static_cast<Eigen::Index>(left_ * mode_), static_cast<Eigen::Index>(right_)};
}
Eigen::Map<const Matrix> TtCore::right_unfolding() const {
  return {values_.data(), static_cast<Eigen::Index>(left_), static_cast<Eigen::Index>(mode_ * right_)};
}
Eigen::Map<Matrix> TtCore::right_unfolding() {
  return {values_.data(), static_cast<Eigen::Index>(left_), static_cast<Eigen::Index>(mode_ * right_)};
}

Matrix TtCore::slice(std::size_t i) const {
  require(i < mode_, ErrorCode::invalid_argument, "slice index out of range");
  Matrix out(left_, right_);
  for (std::size_t b = 0; b < right_; ++b)
    for (std::size_t a = 0; a < left_; ++a)
      out(a, b) = (*this)(a, i, b);
  return out;
}

Matrix TtCore::mode_unfolding() const {
  Matrix out(mode_, left_ * right_);
  for (std::size_t b = 0; b < right_; ++b)
    for (std::size_t i = 0; i < mode_; ++i)
      for (std::size_t a = 0; a < left_; ++a)
        out(i, a + left_ * b) = (*this)(a, i, b);
  return out;
}

TtCore TtCore::from_mode_unfolding(const Matrix& unfolding, std::size_t left_rank,
                                   std::size_t right_rank) {
  require(unfolding.cols() == static_cast<Eigen::Index>(left_rank * right_rank),
          ErrorCode::dimension_mismatch, "mode unfolding has the wrong column count");
  const auto mode = static_cast<std::size_t>(unfolding.rows());
  TtCore core(left_rank, mode, right_rank);
  for (std::size_t b = 0; b < right_rank; ++b)
    for (std::size_t i = 0; i < mode; ++i)
      for (std::size_t a = 0; a < left_rank; ++a)
        core(a, i, b) = unfolding(i, a + left_rank * b);
  require(std::all_of(core.values_.begin(), core.values_.end(),
                      [](double v) { return std::isfinite(v); }),
          ErrorCode::numerical, "TT core contains non-finite values");
  return core;
}

// ---------------------------------------------------------------------------
// TtTensor

TtTensor::TtTensor() : cores_{TtCore(1, 1, 1)} {}

TtTensor::TtTensor(std::vector<TtCore> cores) : cores_(std::move(cores)) {
  require(!cores_.empty(), ErrorCode::invalid_argument, "a TT tensor needs at least one core");
  require(cores_.front().left_rank() == 1 && cores_.back().right_rank() == 1,
          ErrorCode::invalid_argument, "boundary TT ranks must be 1");
  for (std::size_t k = 0; k + 1 < cores_.size(); ++k)
    require(cores_[k].right_rank() == cores_[k + 1].left_rank(), ErrorCode::dimension_mismatch,
            "TT rank chain broken between cores " + std::to_string(k) + " and " +
                std::to_string(k + 1));
}

TtTensor TtTensor::zeros(std::span<const std::size_t> mode_sizes) {
  require(!mode_sizes.empty(), ErrorCode::invalid_argument, "a TT tensor needs at least one mode");
  std::vector<TtCore> cores;
  cores.reserve(mode_sizes.size());
  for (std::size_t n : mode_sizes)
    cores.emplace_back(1, n, 1);
  return TtTensor(std::move(cores));
}

std::vector<std::size_t> TtTensor::mode_sizes() const {
  std::vector<std::size_t> out;
  out.reserve(cores_.size());
  for (const auto& c : cores_)
    out.push_back(c.mode_size());
  return out;
}

std::vector<std::size_t> TtTensor::ranks() const {
  std::vector<std::size_t> out{1};
  for (const auto& c : cores_)
    out.push_back(c.right_rank());
  return out;
}

std::size_t TtTensor::max_rank() const {
  const auto r = ranks();
  return *std::max_element(r.begin(), r.end());
}

std::size_t TtTensor::storage() const {
  std::size_t total = 0;
  for (const auto& c : cores_)
    total += c.size();
  return total;
}

// ---------------------------------------------------------------------------
// DenseTensor

std::size_t DenseTensor::linear_index(std::span<const std::size_t> index) const {
  require(index.size() == shape.size(), ErrorCode::dimension_mismatch, "index has wrong arity");
  std::size_t offset = 0;
  std::size_t stride = 1;
  for (std::size_t k = 0; k < shape.size(); ++k) {
    require(index[k] < shape[k], ErrorCode::invalid_argument, "index out of range");
    offset += index[k] * stride;
    stride *= shape[k];
  }
  return offset;
}

double DenseTensor::frobenius_norm() const {
  return Eigen::Map<const Vector>(data.data(), static_cast<Eigen::Index>(data.size())).norm();
}

// ---------------------------------------------------------------------------
// Construction

TtTensor rank_one(std::span<const Vector> factors) {
  require(!factors.empty(), ErrorCode::invalid_argument, "rank-one tensor needs at least one factor");
  std::vector<TtCore> cores;
  cores.reserve(factors.size());
  for (const auto& f : factors) {
    require(f.size() > 0, ErrorCode::invalid_argument, "rank-one factor must be nonempty");
    cores.emplace_back(1, static_cast<std::size_t>(f.size()), 1,
                       std::vector<double>(f.data(), f.data() + f.size()));
  }
  return TtTensor(std::move(cores));
}

Rounded tt_svd(const DenseTensor& a, double tolerance, std::optional<std::size_t> max_rank) {
  const std::size_t d = a.shape.size();
  require(d >= 1, ErrorCode::invalid_argument, "dense tensor needs at least one mode");
  require(tolerance >= 0.0, ErrorCode::invalid_argument, "tolerance must be nonnegative");
  require(!max_rank || *max_rank >= 1, ErrorCode::invalid_argument, "max_rank must be positive");
  std::size_t total = 1;
  for (std::size_t n : a.shape) {
    require(n >= 1, ErrorCode::invalid_argument, "dense tensor has a zero-size dimension");
    total *= n;
  }
  require(a.data.size() == total, ErrorCode::dimension_mismatch, "dense data size mismatch");
  require(std::all_of(a.data.begin(), a.data.end(), [](double v) { return std::isfinite(v); }),
          ErrorCode::numerical, "dense tensor contains non-finite values");

  RoundingReport report;
  report.input_ranks.assign(d + 1, 1);
  for (std::size_t k = 1; k < d; ++k) {
    std::size_t left = 1, right = 1;
    for (std::size_t j = 0; j < k; ++j)
      left *= a.shape[j];
    for (std::size_t j = k; j < d; ++j)
      right *= a.shape[j];
    report.input_ranks[k] = std::min(left, right);
  }
  report.tolerance_used = tolerance;
  report.max_rank_used = max_rank;
  report.input_norm = a.frobenius_norm();

  if (report.input_norm == 0.0 || d == 1) {
    TtTensor x = d == 1 ? TtTensor({TtCore(1, a.shape[0], 1, a.data)}) : TtTensor::zeros(a.shape);
    report.output_ranks = x.ranks();
    report.output_norm = report.input_norm;
    report.truncation_errors.assign(d - 1, 0.0);
    return {std::move(x), std::move(report)};
  }

  const double delta = detail::cut_budget(tolerance, report.input_norm, d);
  std::vector<TtCore> cores;
  Matrix work = Eigen::Map<const Matrix>(a.data.data(), static_cast<Eigen::Index>(a.shape[0]),
                                         static_cast<Eigen::Index>(total / a.shape[0]));
  std::size_t left = 1;
  for (std::size_t k = 0; k + 1 < d; ++k) {
    Eigen::BDCSVD<Matrix> svd(work, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Vector& s = svd.singularValues();
    double discarded = 0.0;
    const std::size_t r = detail::choose_rank(s, delta, max_rank, discarded);
    report.truncation_errors.push_back(discarded);
    Matrix u = svd.matrixU().leftCols(static_cast<Eigen::Index>(r));
    cores.emplace_back(left, a.shape[k], r, std::vector<double>(u.data(), u.data() + u.size()));
    Matrix rest = s.head(static_cast<Eigen::Index>(r)).asDiagonal() *
                  svd.matrixV().leftCols(static_cast<Eigen::Index>(r)).transpose();
    const auto next_rows = static_cast<Eigen::Index>(r * a.shape[k + 1]);
    work = Eigen::Map<const Matrix>(rest.data(), next_rows, rest.size() / next_rows);
    left = r;
  }
  cores.emplace_back(left, a.shape[d - 1], 1,
                     std::vector<double>(work.data(), work.data() + work.size()));
  TtTensor x(std::move(cores));
  report.output_ranks = x.ranks();
  report.output_norm = norm(x);
  return {std::move(x), std::move(report)};
}

DenseTensor to_dense(const TtTensor& x, std::size_t element_cap) {
  DenseTensor out;
  out.shape = x.mode_sizes();
  std::size_t total = 1;
  for (std::size_t n : out.shape) {
    total *= n;
    require(total <= element_cap, ErrorCode::limit_exceeded,
            "dense reconstruction exceeds the element cap of " + std::to_string(element_cap));
  }
  Matrix acc = x.core(0).left_unfolding();
  for (std::size_t k = 1; k < x.num_modes(); ++k) {
    const TtCore& c = x.core(k);
    Matrix prod = acc * c.right_unfolding();
    acc = Eigen::Map<const Matrix>(prod.data(), acc.rows() * static_cast<Eigen::Index>(c.mode_size()),
                                   static_cast<Eigen::Index>(c.right_rank()));
  }
  out.data.assign(acc.data(), acc.data() + acc.size());
  return out;
}

double evaluate(const TtTensor& x, std::span<const std::size_t> index) {
  require(index.size() == x.num_modes(), ErrorCode::dimension_mismatch, "index has wrong arity");
  Eigen::RowVectorXd acc = Eigen::RowVectorXd::Ones(1);
  for (std::size_t k = 0; k < x.num_modes(); ++k) {
    require(index[k] < x.core(k).mode_size(), ErrorCode::invalid_argument,
            "index out of range in mode " + std::to_string(k));
    acc = acc * x.core(k).slice(index[k]);
  }
  return acc(0);
}

// ---------------------------------------------------------------------------
// Linear algebra in the format

TtTensor linear_combination(std::span<const WeightedTensor> terms) {
  require(!terms.empty(), ErrorCode::invalid_argument, "empty linear combination");
  const auto sizes = terms.front().tensor->mode_sizes();
  for (const auto& t : terms)
    require(t.tensor->mode_sizes() == sizes, ErrorCode::dimension_mismatch,
            "mode sizes differ in TT sum");
  const std::size_t d = sizes.size();

  if (d == 1) {
    TtCore core(1, sizes[0], 1);
    auto out = core.left_unfolding();
    for (const auto& t : terms)
      out += t.weight * t.tensor->core(0).left_unfolding();
    return TtTensor({std::move(core)});
  }

  std::vector<TtCore> cores;
  cores.reserve(d);
  for (std::size_t k = 0; k < d; ++k) {
    std::size_t left = 0, right = 0;
    for (const auto& t : terms) {
      left += t.tensor->core(k).left_rank();
      right += t.tensor->core(k).right_rank();
    }
    if (k == 0)
      left = 1;
    if (k == d - 1)
      right = 1;
    TtCore core(left, sizes[k], right);
    std::size_t a0 = 0, b0 = 0;
    for (const auto& t : terms) {
      const TtCore& src = t.tensor->core(k);
      const double w = k == 0 ? t.weight : 1.0;
      for (std::size_t b = 0; b < src.right_rank(); ++b)
        for (std::size_t i = 0; i < src.mode_size(); ++i)
          for (std::size_t a = 0; a < src.left_rank(); ++a)
            core(a0 + a, i, b0 + b) = w * src(a, i, b);
      if (k != 0)
        a0 += src.left_rank();
      if (k != d - 1)
        b0 += src.right_rank();
    }
    cores.push_back(std::move(core));
  }
  return TtTensor(std::move(cores));
}

TtTensor axpy(double alpha, const TtTensor& x, const TtTensor& y) {
  const WeightedTensor terms[] = {{alpha, &x}, {1.0, &y}};
  return linear_combination(terms);
}

TtTensor scale(const TtTensor& x, double alpha) {
  if (alpha == 1.0)
    return x;
  std::vector<TtCore> cores = x.cores();
  for (double& v : cores.front().values())
    v *= alpha;
  return TtTensor(std::move(cores));
}

double inner(const TtTensor& x, const TtTensor& y) {
  require(x.mode_sizes() == y.mode_sizes(), ErrorCode::dimension_mismatch,
          "mode sizes differ in TT inner product");
  Matrix acc = Matrix::Ones(1, 1);
  for (std::size_t k = 0; k < x.num_modes(); ++k) {
    const TtCore& cx = x.core(k);
    const TtCore& cy = y.core(k);
    Matrix t = acc * cy.right_unfolding();
    Eigen::Map<const Matrix> tl(t.data(), static_cast<Eigen::Index>(cx.left_rank() * cx.mode_size()),
                                static_cast<Eigen::Index>(cy.right_rank()));
    acc = cx.left_unfolding().transpose() * tl;
  }
  return acc(0, 0);
}

double norm(const TtTensor& x) {
  // Left-to-right QR sweep; only the triangular factors are carried.
  Matrix carry = Matrix::Ones(1, 1);
  for (std::size_t k = 0; k < x.num_modes(); ++k) {
    const TtCore& c = x.core(k);
    Matrix t = carry * c.right_unfolding();
    Eigen::Map<const Matrix> tl(t.data(), carry.rows() * static_cast<Eigen::Index>(c.mode_size()),
                                static_cast<Eigen::Index>(c.right_rank()));
    carry = detail::r_factor(tl);
  }
  return carry.norm();
}

namespace {

/// Core held as its left unfolding (left*mode x right) while rounding.
struct WorkCore {
  std::size_t left;
  std::size_t mode;
  std::size_t right;
  Matrix m;

  Eigen::Map<const Matrix> right_unfolding() const {
    return {m.data(), static_cast<Eigen::Index>(left), static_cast<Eigen::Index>(mode * right)};
  }
};

Matrix reshape(const Matrix& a, std::size_t rows, std::size_t cols) {
  return Eigen::Map<const Matrix>(a.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

Eigen::Index idx(std::size_t v) { return static_cast<Eigen::Index>(v); }

} // namespace

Rounded round_sum(std::span<const WeightedTensor> terms, double tolerance,
                  std::optional<std::size_t> max_rank) {
  require(!terms.empty(), ErrorCode::invalid_argument, "nothing to round");
  require(tolerance >= 0.0, ErrorCode::invalid_argument, "tolerance must be nonnegative");
  require(!max_rank || *max_rank >= 1, ErrorCode::invalid_argument, "max_rank must be positive");
  const auto sizes = terms.front().tensor->mode_sizes();
  for (const auto& t : terms)
    require(t.tensor->mode_sizes() == sizes, ErrorCode::dimension_mismatch,
            "mode sizes differ in TT sum");
  const std::size_t d = sizes.size();
  const std::size_t nt = terms.size();

  RoundingReport report;
  report.tolerance_used = tolerance;
  report.max_rank_used = max_rank;

  // off[k][t]: offset of term t inside bond k of the block-structured sum.
  std::vector<std::vector<std::size_t>> off(d + 1, std::vector<std::size_t>(nt + 1, 0));
  for (std::size_t k = 0; k <= d; ++k)
    for (std::size_t t = 0; t < nt; ++t)
      off[k][t + 1] = off[k][t] + terms[t].tensor->ranks()[k];
  report.input_ranks.assign(d + 1, 1);
  for (std::size_t k = 1; k < d; ++k)
    report.input_ranks[k] = off[k][nt];

  if (d == 1) {
    TtTensor x = linear_combination(terms);
    report.input_norm = report.output_norm = x.core(0).left_unfolding().norm();
    report.output_ranks = x.ranks();
    return {std::move(x), std::move(report)};
  }

  // Orthogonalize towards the largest core so it is never formed at full size.
  std::size_t pivot = 0;
  std::size_t largest = 0;
  for (std::size_t k = 0; k < d; ++k) {
    const std::size_t left = k == 0 ? 1 : off[k][nt];
    const std::size_t right = k + 1 == d ? 1 : off[k + 1][nt];
    const std::size_t size = left * sizes[k] * right;
    if (size > largest) {
      largest = size;
      pivot = k;
    }
  }

  std::vector<WorkCore> work(d);

  Matrix rl(1, idx(nt));
  for (std::size_t t = 0; t < nt; ++t)
    rl(0, idx(t)) = terms[t].weight;
  for (std::size_t k = 0; k < pivot; ++k) {
    const std::size_t n = sizes[k];
    const auto kl = static_cast<std::size_t>(rl.rows());
    Matrix cur = Matrix::Zero(idx(kl * n), idx(off[k + 1][nt]));
    for (std::size_t t = 0; t < nt; ++t) {
      const TtCore& c = terms[t].tensor->core(k);
      Matrix prod = rl.middleCols(idx(off[k][t]), idx(c.left_rank())) * c.right_unfolding();
      cur.middleCols(idx(off[k + 1][t]), idx(c.right_rank())) = reshape(prod, kl * n, c.right_rank());
    }
    detail::ThinQr qr = detail::thin_qr(cur);
    work[k] = {kl, n, static_cast<std::size_t>(qr.q.cols()), std::move(qr.q)};
    rl = std::move(qr.r);
  }

  Matrix rr = Matrix::Ones(idx(nt), 1);
  for (std::size_t k = d - 1; k > pivot; --k) {
    const std::size_t n = sizes[k];
    const auto kr = static_cast<std::size_t>(rr.cols());
    Matrix cur = Matrix::Zero(idx(off[k][nt]), idx(n * kr));
    for (std::size_t t = 0; t < nt; ++t) {
      const TtCore& c = terms[t].tensor->core(k);
      Matrix prod = c.left_unfolding() * rr.middleRows(idx(off[k + 1][t]), idx(c.right_rank()));
      cur.middleRows(idx(off[k][t]), idx(c.left_rank())) = reshape(prod, c.left_rank(), n * kr);
    }
    detail::ThinQr qr = detail::thin_qr(cur.transpose());
    const auto kq = static_cast<std::size_t>(qr.q.cols());
    Matrix qt = qr.q.transpose();
    work[k] = {kq, n, kr, reshape(qt, kq * n, kr)};
    rr = qr.r.transpose();
  }

  {
    const std::size_t n = sizes[pivot];
    const auto kl = static_cast<std::size_t>(rl.rows());
    const auto kr = static_cast<std::size_t>(rr.cols());
    Matrix piv = Matrix::Zero(idx(kl * n), idx(kr));
    for (std::size_t t = 0; t < nt; ++t) {
      const TtCore& c = terms[t].tensor->core(pivot);
      Matrix prod = rl.middleCols(idx(off[pivot][t]), idx(c.left_rank())) * c.right_unfolding();
      piv.noalias() += Eigen::Map<const Matrix>(prod.data(), idx(kl * n), idx(c.right_rank())) *
                       rr.middleRows(idx(off[pivot + 1][t]), idx(c.right_rank()));
    }
    work[pivot] = {kl, n, kr, std::move(piv)};
  }

  report.input_norm = work[pivot].m.norm();
  report.truncation_errors.assign(d - 1, 0.0);
  if (report.input_norm == 0.0) {
    TtTensor zero = TtTensor::zeros(sizes);
    report.output_ranks = zero.ranks();
    return {std::move(zero), std::move(report)};
  }
  const double delta = detail::cut_budget(tolerance, report.input_norm, d);

  // Truncate the bonds left of the pivot, moving the norm-carrying core left.
  for (std::size_t k = pivot; k >= 1; --k) {
    WorkCore& c = work[k];
    detail::Truncation t =
        detail::truncate_rows(c.right_unfolding(), delta, max_rank, tolerance);
    report.truncation_errors[k - 1] = t.discarded;
    c.m = reshape(t.right, t.rank * c.mode, c.right);
    c.left = t.rank;
    WorkCore& prev = work[k - 1];
    prev.m = prev.m * t.left;
    prev.right = t.rank;
  }
  // Move it back to the pivot without truncation.
  for (std::size_t k = 0; k < pivot; ++k) {
    WorkCore& c = work[k];
    detail::ThinQr qr = detail::thin_qr(c.m);
    const auto kq = static_cast<std::size_t>(qr.q.cols());
    c.m = std::move(qr.q);
    c.right = kq;
    WorkCore& next = work[k + 1];
    Matrix carried = qr.r * next.right_unfolding();
    next.m = reshape(carried, kq * next.mode, next.right);
    next.left = kq;
  }
  // Truncate the bonds right of the pivot.
  for (std::size_t k = pivot; k + 1 < d; ++k) {
    WorkCore& c = work[k];
    detail::Truncation t = detail::truncate_cols(c.m, delta, max_rank, tolerance);
    report.truncation_errors[k] = t.discarded;
    c.m = std::move(t.left);
    c.right = t.rank;
    WorkCore& next = work[k + 1];
    Matrix carried = t.right * next.right_unfolding();
    next.m = reshape(carried, t.rank * next.mode, next.right);
    next.left = t.rank;
  }

  // Cores 0..d-2 are left-orthogonal now, so the norm sits in the last core.
  report.output_norm = work.back().m.norm();
  std::vector<TtCore> cores;
  cores.reserve(d);
  for (auto& w : work)
    cores.emplace_back(w.left, w.mode, w.right, std::vector<double>(w.m.data(), w.m.data() + w.m.size()));
  TtTensor out(std::move(cores));
  report.output_ranks = out.ranks();
  return {std::move(out), std::move(report)};
}

Rounded round(const TtTensor& x, double tolerance, std::optional<std::size_t> max_rank) {
  const WeightedTensor term[] = {{1.0, &x}};
  return round_sum(term, tolerance, max_rank);
}

TtTensor mode_product(const TtTensor& x, std::size_t mode, const Matrix& m) {
  require(mode < x.num_modes(), ErrorCode::invalid_argument, "mode out of range");
  require(m.cols() == static_cast<Eigen::Index>(x.core(mode).mode_size()),
          ErrorCode::dimension_mismatch, "matrix columns do not match the mode size");
  return transform_mode(x, mode, [&](const Matrix& u) -> Matrix { return m * u; });
}

} // namespace ttlsqr
