#include "ttlsqr/classify.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <locale>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

#include <Eigen/QR>
#include <Eigen/SVD>

namespace ttlsqr {

namespace {

using Clock = std::chrono::steady_clock;

// Singular values below this fraction of the largest one span no direction.
constexpr double kRangeCutoff = 1e-12;

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

[[noreturn]] void parse_error(std::size_t line, const std::string& what) {
  fail(ErrorCode::parse, "line " + std::to_string(line) + ": " + what);
}

// Next line that is neither blank nor a comment; false at end of input.
bool next_data_line(std::istream& in, std::string& line, std::size_t& line_no) {
  while (std::getline(in, line)) {
    ++line_no;
    const auto pos = line.find_first_not_of(" \t\r");
    if (pos == std::string::npos || line[pos] == '%')
      continue;
    return true;
  }
  return false;
}

std::uint64_t bounded(std::mt19937_64& rng, std::uint64_t n) {
  // Rejection keeps the draw exactly uniform on [0, n).
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % n;
  std::uint64_t v;
  do
    v = rng();
  while (v >= limit);
  return v % n;
}

double unit_uniform(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

Decision decide(std::vector<double> scores, bool maximize) {
  Decision d;
  const auto [lo, hi] = std::minmax_element(scores.begin(), scores.end());
  const auto best = maximize ? hi : lo;
  // minmax_element returns the last maximum; the tie-break wants the first.
  d.group = static_cast<std::size_t>(std::find(scores.begin(), scores.end(), *best) - scores.begin());
  d.degenerate = (*hi - *lo) <= 1e-12 * std::max(std::abs(*hi), std::abs(*lo));
  d.scores = std::move(scores);
  return d;
}

// Orthonormal basis of range(a) from the thin SVD, dropping negligible directions.
Matrix range_basis(const Matrix& a, std::size_t max_cols) {
  if (a.cols() == 0)
    return Matrix(a.rows(), 0);
  Eigen::BDCSVD<Matrix> svd(a, Eigen::ComputeThinU);
  const Vector& s = svd.singularValues();
  Eigen::Index keep = 0;
  const double cut = s.size() ? kRangeCutoff * s(0) : 0.0;
  while (keep < s.size() && static_cast<std::size_t>(keep) < max_cols && s(keep) > cut)
    ++keep;
  return svd.matrixU().leftCols(keep);
}

Vector leading_left_vector(const Matrix& a) {
  Eigen::BDCSVD<Matrix> svd(a, Eigen::ComputeThinU);
  Vector u = svd.matrixU().col(0);
  // Fix the sign so the reduction is deterministic.
  Eigen::Index k;
  u.cwiseAbs().maxCoeff(&k);
  if (u(k) < 0)
    u = -u;
  return u;
}

void check_query(const Vector& f, std::size_t n) {
  require(static_cast<std::size_t>(f.size()) == n, ErrorCode::dimension_mismatch,
          "query length " + std::to_string(f.size()) + " does not match n = " + std::to_string(n));
}

} // namespace

// ---------------------------------------------------------------------------
// Matrix Market

SparseMatrix read_matrix_market(std::istream& in, MatrixMarketInfo* info) {
  std::size_t line_no = 0;
  std::string line;
  if (!std::getline(in, line))
    parse_error(1, "empty input");
  ++line_no;
  std::istringstream header(line);
  std::string banner, object, format, field, symmetry;
  header >> banner >> object >> format >> field >> symmetry;
  if (banner != "%%MatrixMarket")
    parse_error(line_no, "missing %%MatrixMarket banner");
  object = lower(object);
  format = lower(format);
  field = lower(field);
  symmetry = lower(symmetry);
  if (object != "matrix")
    parse_error(line_no, "unsupported object '" + object + "'");
  if (format != "coordinate" && format != "array")
    parse_error(line_no, "unsupported format '" + format + "'");
  if (field != "real" && field != "integer" && field != "pattern")
    parse_error(line_no, "unsupported field '" + field + "'");
  if (symmetry != "general" && symmetry != "symmetric" && symmetry != "skew-symmetric")
    parse_error(line_no, "unsupported symmetry '" + symmetry + "'");
  if (format == "array" && field == "pattern")
    parse_error(line_no, "array format cannot use the pattern field");

  if (!next_data_line(in, line, line_no))
    parse_error(line_no + 1, "missing size line");
  std::istringstream size_line(line);
  size_line.imbue(std::locale::classic());
  long long rows = -1, cols = -1, count = -1;
  size_line >> rows >> cols;
  if (format == "coordinate")
    size_line >> count;
  if (!size_line || rows < 0 || cols < 0 || (format == "coordinate" && count < 0))
    parse_error(line_no, "malformed size line");
  if (symmetry != "general" && rows != cols)
    parse_error(line_no, "symmetric storage needs a square matrix");

  std::size_t expected;
  if (format == "coordinate")
    expected = static_cast<std::size_t>(count);
  else if (symmetry == "general")
    expected = static_cast<std::size_t>(rows * cols);
  else if (symmetry == "symmetric")
    expected = static_cast<std::size_t>(rows * (rows + 1) / 2);
  else
    expected = static_cast<std::size_t>(rows * (rows - 1) / 2);

  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(symmetry == "general" ? expected : 2 * expected);
  auto add = [&](long long i, long long j, double v) {
    triplets.emplace_back(static_cast<int>(i), static_cast<int>(j), v);
    if (i != j && symmetry == "symmetric")
      triplets.emplace_back(static_cast<int>(j), static_cast<int>(i), v);
    else if (i != j && symmetry == "skew-symmetric")
      triplets.emplace_back(static_cast<int>(j), static_cast<int>(i), -v);
  };

  // Array entries run down columns, over the lower triangle for symmetric storage.
  long long ai = 0, aj = 0;
  if (format == "array" && symmetry == "skew-symmetric")
    ai = 1;
  for (std::size_t k = 0; k < expected; ++k) {
    if (!next_data_line(in, line, line_no))
      parse_error(line_no + 1, "expected " + std::to_string(expected) + " entries, found " +
                                   std::to_string(k));
    std::istringstream entry(line);
    entry.imbue(std::locale::classic());
    if (format == "coordinate") {
      long long i = 0, j = 0;
      double v = 1.0;
      entry >> i >> j;
      if (field != "pattern")
        entry >> v;
      if (!entry)
        parse_error(line_no, "malformed entry");
      if (i < 1 || i > rows || j < 1 || j > cols)
        parse_error(line_no, "index (" + std::to_string(i) + ", " + std::to_string(j) +
                                 ") outside the declared " + std::to_string(rows) + " x " +
                                 std::to_string(cols) + " shape");
      if (symmetry != "general" && j > i)
        parse_error(line_no, "symmetric storage lists the lower triangle only");
      if (symmetry == "skew-symmetric" && i == j)
        parse_error(line_no, "skew-symmetric storage has no diagonal entries");
      if (!std::isfinite(v))
        parse_error(line_no, "non-finite value");
      add(i - 1, j - 1, v);
    } else {
      double v = 0.0;
      entry >> v;
      if (!entry)
        parse_error(line_no, "malformed entry");
      if (!std::isfinite(v))
        parse_error(line_no, "non-finite value");
      if (v != 0.0)
        add(ai, aj, v);
      if (++ai == rows) {
        ++aj;
        ai = symmetry == "general" ? 0 : (symmetry == "symmetric" ? aj : aj + 1);
      }
    }
  }
  if (next_data_line(in, line, line_no))
    parse_error(line_no, "more entries than the declared " + std::to_string(expected));

  SparseMatrix a(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  a.setFromTriplets(triplets.begin(), triplets.end());
  a.makeCompressed();
  if (info)
    *info = {static_cast<std::size_t>(rows), static_cast<std::size_t>(cols), expected, format, field,
             symmetry};
  return a;
}

SparseMatrix load_matrix_market(const std::string& path, MatrixMarketInfo* info) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorCode::io, "cannot open '" + path + "'");
  try {
    return read_matrix_market(in, info);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::parse)
      fail(ErrorCode::parse, path + ": " + e.what());
    throw;
  }
}

// ---------------------------------------------------------------------------
// Clustering and corpus

std::vector<std::size_t> kmeans_cluster(const Matrix& x, std::size_t k, std::uint64_t seed,
                                        std::size_t max_sweeps, double tol) {
  const auto count = static_cast<std::size_t>(x.cols());
  require(k >= 1, ErrorCode::invalid_argument, "k must be at least 1");
  require(k <= count, ErrorCode::invalid_argument,
          "k = " + std::to_string(k) + " exceeds the " + std::to_string(count) + " columns");
  std::mt19937_64 rng(seed);
  const Vector col_sq = x.colwise().squaredNorm().transpose();

  auto sq_dist = [&](const Matrix& centers) {
    // count x k matrix of squared distances.
    Matrix d = (-2.0 * x.transpose() * centers).eval();
    d.colwise() += col_sq;
    d.rowwise() += centers.colwise().squaredNorm();
    return d.cwiseMax(0.0).eval();
  };

  // k-means++ seeding.
  Matrix centers(x.rows(), static_cast<Eigen::Index>(k));
  std::vector<bool> chosen(count, false);
  std::size_t first = bounded(rng, count);
  centers.col(0) = x.col(static_cast<Eigen::Index>(first));
  chosen[first] = true;
  Vector nearest = (x.colwise() - x.col(static_cast<Eigen::Index>(first))).colwise().squaredNorm().transpose();
  for (std::size_t c = 1; c < k; ++c) {
    const double total = nearest.sum();
    std::size_t pick = count;
    if (total > 0.0) {
      const double target = unit_uniform(rng) * total;
      double acc = 0.0;
      for (std::size_t i = 0; i < count; ++i) {
        acc += nearest(static_cast<Eigen::Index>(i));
        if (acc > target && nearest(static_cast<Eigen::Index>(i)) > 0.0) {
          pick = i;
          break;
        }
      }
    }
    if (pick == count) // all mass used up (or rounding at the tail)
      for (std::size_t i = 0; i < count && pick == count; ++i)
        if (!chosen[i] && (total <= 0.0 || nearest(static_cast<Eigen::Index>(i)) > 0.0))
          pick = i;
    if (pick == count)
      pick = static_cast<std::size_t>(std::find(chosen.begin(), chosen.end(), false) - chosen.begin());
    chosen[pick] = true;
    centers.col(static_cast<Eigen::Index>(c)) = x.col(static_cast<Eigen::Index>(pick));
    nearest = nearest.cwiseMin(
        (x.colwise() - x.col(static_cast<Eigen::Index>(pick))).colwise().squaredNorm().transpose());
  }

  std::vector<std::size_t> labels(count, 0);
  for (std::size_t sweep = 0; sweep < max_sweeps; ++sweep) {
    const Matrix d = sq_dist(centers);
    for (std::size_t i = 0; i < count; ++i) {
      Eigen::Index best;
      d.row(static_cast<Eigen::Index>(i)).minCoeff(&best);
      labels[i] = static_cast<std::size_t>(best);
    }
    Matrix updated = Matrix::Zero(centers.rows(), centers.cols());
    std::vector<std::size_t> sizes(k, 0);
    for (std::size_t i = 0; i < count; ++i) {
      updated.col(static_cast<Eigen::Index>(labels[i])) += x.col(static_cast<Eigen::Index>(i));
      ++sizes[labels[i]];
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (sizes[c] > 0) {
        updated.col(static_cast<Eigen::Index>(c)) /= static_cast<double>(sizes[c]);
        continue;
      }
      // Empty cluster: restart it at the column farthest from its centroid.
      std::size_t far = 0;
      double far_d = -1.0;
      for (std::size_t i = 0; i < count; ++i) {
        const double v = d(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(labels[i]));
        if (v > far_d && sizes[labels[i]] > 1) {
          far_d = v;
          far = i;
        }
      }
      updated.col(static_cast<Eigen::Index>(c)) = x.col(static_cast<Eigen::Index>(far));
    }
    const double moved = (updated - centers).colwise().norm().maxCoeff();
    centers = std::move(updated);
    if (moved < tol)
      break;
  }
  const Matrix d = sq_dist(centers);
  for (std::size_t i = 0; i < count; ++i) {
    Eigen::Index best;
    d.row(static_cast<Eigen::Index>(i)).minCoeff(&best);
    labels[i] = static_cast<std::size_t>(best);
  }
  return labels;
}

Matrix GroupedCorpus::block(std::size_t j, std::size_t i) const {
  require(j < groups.size() && i < ell, ErrorCode::invalid_argument, "block index out of range");
  return groups[j].middleCols(static_cast<Eigen::Index>(i * m), static_cast<Eigen::Index>(m));
}

GroupedCorpus build_corpus(const Matrix& x, const std::vector<std::size_t>& labels, std::size_t d,
                           std::size_t m_bar, std::size_t ell, std::size_t test_count) {
  require(labels.size() == static_cast<std::size_t>(x.cols()), ErrorCode::dimension_mismatch,
          "one label per column is required");
  require(d >= 1, ErrorCode::invalid_argument, "d must be at least 1");
  require(ell >= 1 && m_bar >= 1, ErrorCode::invalid_argument, "m_bar and ell must be positive");
  require(m_bar % ell == 0, ErrorCode::invalid_argument,
          "m_bar = " + std::to_string(m_bar) + " is not divisible by ell = " + std::to_string(ell));

  std::map<std::size_t, std::vector<Eigen::Index>> members;
  for (Eigen::Index c = 0; c < x.cols(); ++c)
    if (x.col(c).norm() > 0.0)
      members[labels[static_cast<std::size_t>(c)]].push_back(c);
  std::vector<std::pair<std::size_t, std::size_t>> ranked; // (label, size)
  for (const auto& [label, cols] : members)
    ranked.emplace_back(label, cols.size());
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  require(ranked.size() >= d, ErrorCode::invalid_argument,
          "only " + std::to_string(ranked.size()) + " nonempty clusters for d = " + std::to_string(d));

  GroupedCorpus corpus;
  corpus.ell = ell;
  corpus.m = m_bar / ell;
  for (std::size_t j = 0; j < d; ++j) {
    const auto& cols = members[ranked[j].first];
    require(cols.size() >= m_bar + test_count, ErrorCode::invalid_argument,
            "cluster " + std::to_string(ranked[j].first) + " has " + std::to_string(cols.size()) +
                " nonzero columns; " + std::to_string(m_bar + test_count) + " are needed");
    Matrix g(x.rows(), static_cast<Eigen::Index>(m_bar));
    for (std::size_t c = 0; c < m_bar; ++c)
      g.col(static_cast<Eigen::Index>(c)) = x.col(cols[c]).normalized();
    corpus.groups.push_back(std::move(g));
    for (std::size_t t = 0; t < test_count; ++t) {
      const Eigen::Index c = cols[m_bar + t];
      corpus.test_queries.push_back({x.col(c).normalized(), j, static_cast<std::size_t>(c)});
    }
  }
  return corpus;
}

KronSumOperator build_operator(const GroupedCorpus& corpus) {
  require(corpus.num_groups() >= 1 && corpus.ell >= 1, ErrorCode::invalid_argument, "empty corpus");
  std::vector<std::vector<ModeMatrix>> terms(corpus.ell);
  for (std::size_t i = 0; i < corpus.ell; ++i)
    for (std::size_t j = 0; j < corpus.num_groups(); ++j)
      terms[i].emplace_back(corpus.block(j, i));
  return KronSumOperator(std::move(terms));
}

TtTensor query_rhs(const Vector& f, std::size_t d) {
  require(d >= 1, ErrorCode::invalid_argument, "d must be at least 1");
  const double nf = f.norm();
  const Vector unit = nf > 0.0 ? Vector(f / nf) : f;
  const std::vector<Vector> factors(d, unit);
  return rank_one(factors);
}

// ---------------------------------------------------------------------------
// Criteria

std::vector<double> contraction_scores(const TtTensor& y, const Vector& f) {
  const std::size_t d = y.num_modes();
  std::vector<Matrix> with_f(d), with_ones(d);
  for (std::size_t k = 0; k < d; ++k) {
    const TtCore& c = y.core(k);
    check_query(f, c.mode_size());
    const auto l = static_cast<Eigen::Index>(c.left_rank());
    const auto r = static_cast<Eigen::Index>(c.right_rank());
    const Matrix mu = c.mode_unfolding();
    with_f[k] = (f.transpose() * mu).reshaped(l, r);
    with_ones[k] = mu.colwise().sum().reshaped(l, r);
  }
  std::vector<double> scores(d);
  for (std::size_t j = 0; j < d; ++j) {
    Matrix acc = Matrix::Ones(1, 1);
    for (std::size_t k = 0; k < d; ++k)
      acc = acc * (k == j ? with_f[k] : with_ones[k]);
    scores[j] = std::abs(acc(0, 0));
  }
  return scores;
}

Decision classify_c1(const KronSumOperator& l, const TtTensor& x, const Vector& f, double round_tol) {
  require(x.mode_sizes() == l.col_sizes(), ErrorCode::dimension_mismatch,
          "solution mode sizes do not match the operator");
  return decide(contraction_scores(l.apply(x, round_tol), f), true);
}

Decision classify_c2(const KronSumOperator& l, const TtTensor& x, const Vector& f, bool orthonormalize,
                     C2Model* model) {
  require(x.mode_sizes() == l.col_sizes(), ErrorCode::dimension_mismatch,
          "solution mode sizes do not match the operator");
  require(norm(x) > 0.0, ErrorCode::numerical, "criterion 2 is undefined for a zero solution");
  const std::size_t d = x.num_modes();
  std::vector<Vector> factors(d);
  for (std::size_t k = 0; k < d; ++k)
    factors[k] = leading_left_vector(x.core(k).mode_unfolding());
  TtTensor reduced = rank_one(factors);
  const TtTensor y = l.apply_plus(reduced, false, {});

  std::vector<Matrix> bases(d);
  std::vector<double> scores(d);
  for (std::size_t j = 0; j < d; ++j) {
    const TtCore& c = y.core(j);
    check_query(f, c.mode_size());
    const Matrix mu = c.mode_unfolding();
    if (orthonormalize) {
      bases[j] = range_basis(mu, static_cast<std::size_t>(mu.cols()));
    } else {
      std::vector<Eigen::Index> keep;
      for (Eigen::Index col = 0; col < mu.cols(); ++col)
        if (mu.col(col).norm() > 0.0)
          keep.push_back(col);
      bases[j] = mu(Eigen::all, keep);
    }
    scores[j] = (f.transpose() * bases[j]).norm();
  }
  if (model)
    *model = {std::move(reduced), std::move(bases)};
  return decide(std::move(scores), true);
}

Decision classify_c3(const GroupedCorpus& corpus, const Vector& f, double tol, std::size_t max_iters,
                     std::size_t* iterations) {
  check_query(f, corpus.rows());
  const std::size_t d = corpus.num_groups();
  const auto mb = static_cast<Eigen::Index>(corpus.m_bar());
  Matrix a(static_cast<Eigen::Index>(corpus.rows()), mb * static_cast<Eigen::Index>(d));
  for (std::size_t j = 0; j < d; ++j)
    a.middleCols(static_cast<Eigen::Index>(j) * mb, mb) = corpus.groups[j];
  const VectorLsqrResult w = vector_lsqr(a, f, tol, max_iters);
  if (iterations)
    *iterations = w.iterations;
  std::vector<double> scores(d);
  for (std::size_t j = 0; j < d; ++j)
    scores[j] = w.x.segment(static_cast<Eigen::Index>(j) * mb, mb).norm();
  return decide(std::move(scores), true);
}

C4Model build_c4_model(const GroupedCorpus& corpus, std::size_t rank) {
  require(rank >= 1, ErrorCode::invalid_argument, "rank must be at least 1");
  require(rank <= corpus.m_bar(), ErrorCode::invalid_argument,
          "rank " + std::to_string(rank) + " exceeds m_bar = " + std::to_string(corpus.m_bar()));
  C4Model model;
  for (const Matrix& g : corpus.groups)
    model.bases.push_back(range_basis(g, rank));
  return model;
}

Decision classify_c4(const C4Model& model, const Vector& f) {
  require(!model.bases.empty(), ErrorCode::invalid_argument, "empty criterion 4 model");
  std::vector<double> residuals;
  for (const Matrix& u : model.bases) {
    check_query(f, static_cast<std::size_t>(u.rows()));
    residuals.push_back((f - u * (u.transpose() * f)).norm());
  }
  return decide(std::move(residuals), false);
}

Decision classify_c4(const GroupedCorpus& corpus, const Vector& f, std::size_t rank) {
  return classify_c4(build_c4_model(corpus, rank), f);
}

// ---------------------------------------------------------------------------
// Harness

std::string to_string(Criterion c) {
  switch (c) {
  case Criterion::c1:
    return "C1";
  case Criterion::c2:
    return "C2";
  case Criterion::c3:
    return "C3";
  case Criterion::c4:
    return "C4";
  }
  return "unknown";
}

std::string to_string(SolveMode m) {
  switch (m) {
  case SolveMode::full:
    return "full";
  case SolveMode::sketched:
    return "sketched";
  case SolveMode::two_pass:
    return "two_pass";
  }
  return "unknown";
}

Criterion parse_criterion(const std::string& s) {
  const std::string t = lower(s);
  if (t == "c1" || t == "1")
    return Criterion::c1;
  if (t == "c2" || t == "2")
    return Criterion::c2;
  if (t == "c3" || t == "3")
    return Criterion::c3;
  if (t == "c4" || t == "4")
    return Criterion::c4;
  fail(ErrorCode::invalid_argument, "unknown criterion '" + s + "'");
}

SolveMode parse_solve_mode(const std::string& s) {
  const std::string t = lower(s);
  if (t == "full" || t == "none")
    return SolveMode::full;
  if (t == "sketched" || t == "sketch")
    return SolveMode::sketched;
  if (t == "two_pass" || t == "two-pass" || t == "twopass")
    return SolveMode::two_pass;
  fail(ErrorCode::invalid_argument, "unknown solve mode '" + s + "'");
}

SolveOptions HarnessOptions::default_classify_solve() {
  SolveOptions s;
  s.round_tol = 1e-4;
  s.max_iters = 10;
  // A fixed iteration count: the stopping test never fires.
  s.ne_resid_tol = 0.0;
  return s;
}

EvalReport evaluate_harness(const GroupedCorpus& corpus, const HarnessOptions& opts) {
  require(!opts.criteria.empty(), ErrorCode::invalid_argument, "no criteria requested");
  require(!corpus.test_queries.empty(), ErrorCode::invalid_argument, "the corpus has no test queries");
  const std::size_t d = corpus.num_groups();
  const KronSumOperator op = build_operator(corpus);

  bool needs_tensor = false, needs_c4 = false;
  for (Criterion c : opts.criteria) {
    needs_tensor = needs_tensor || c == Criterion::c1 || c == Criterion::c2;
    needs_c4 = needs_c4 || c == Criterion::c4;
  }
  std::optional<C4Model> c4;
  if (needs_c4)
    c4 = build_c4_model(corpus, opts.c4_rank);

  std::optional<Sketcher> sk;
  std::optional<KronSumOperator> sketched;
  EvalReport report;
  if (needs_tensor && opts.mode != SolveMode::full) {
    const std::size_t s = opts.sketch.sketch_size ? opts.sketch.sketch_size
                                                  : default_sketch_size(d, corpus.m_bar());
    const auto t0 = Clock::now();
    sk.emplace(corpus.rows(), s, opts.sketch.seed);
    sketched.emplace(sketch_operator(*sk, op));
    report.total_solve_seconds += std::chrono::duration<double>(Clock::now() - t0).count();
  }

  report.criteria = opts.criteria;
  report.num_groups = d;
  for (std::size_t q = 0; q < corpus.test_queries.size(); ++q) {
    const TestQuery& query = corpus.test_queries[q];
    QueryRecord rec;
    rec.index = q;
    rec.true_group = query.group;
    rec.column = query.column;
    const double nf = query.f.norm();
    const Vector f = nf > 0.0 ? Vector(query.f / nf) : query.f;

    TtTensor x;
    if (needs_tensor) {
      const std::vector<Vector> factors(d, f);
      const auto t0 = Clock::now();
      if (opts.mode == SolveMode::full) {
        SolveResult res = tt_lsqr(op, rank_one(factors), opts.solve);
        rec.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
        rec.iterations = res.iterations;
        rec.status = to_string(res.status);
        x = std::move(res.x);
      } else {
        const std::size_t refine = opts.mode == SolveMode::two_pass ? opts.sketch.refine_iters : 0;
        TwoPassResult res =
            two_pass_solve(op, *sk, *sketched, factors, opts.solve, opts.sketch.sketch_iters, refine);
        rec.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
        rec.iterations = res.sketched.iterations + (res.refined ? res.refined->iterations : 0);
        rec.status = to_string(res.refined ? res.refined->status : res.sketched.status);
        if (opts.record_residuals && opts.mode == SolveMode::two_pass)
          rec.sketch_residual = residual_norm(op, rank_one(factors), res.x0);
        x = std::move(res.x);
      }
      report.total_solve_seconds += rec.seconds;
      if (opts.record_residuals)
        rec.residual = residual_norm(op, rank_one(factors), x);
    }

    for (Criterion c : opts.criteria) {
      switch (c) {
      case Criterion::c1:
        rec.decisions.push_back(classify_c1(op, x, f, opts.solve.round_tol));
        break;
      case Criterion::c2:
        rec.decisions.push_back(classify_c2(op, x, f, opts.c2_orthonormalize));
        break;
      case Criterion::c3: {
        std::size_t its = 0;
        rec.decisions.push_back(classify_c3(corpus, f, opts.c3_tol, opts.c3_max_iters, &its));
        if (!needs_tensor)
          rec.iterations = its;
        break;
      }
      case Criterion::c4:
        rec.decisions.push_back(classify_c4(*c4, f));
        break;
      }
    }
    report.queries.push_back(std::move(rec));
  }

  const std::size_t nc = opts.criteria.size();
  report.percent.assign(d, std::vector<double>(nc, 0.0));
  report.avg_iters.assign(d, 0.0);
  report.avg_seconds.assign(d, 0.0);
  report.query_counts.assign(d, 0);
  std::vector<std::vector<std::size_t>> hits(d, std::vector<std::size_t>(nc, 0));
  for (const QueryRecord& rec : report.queries) {
    const std::size_t g = rec.true_group;
    ++report.query_counts[g];
    report.avg_iters[g] += static_cast<double>(rec.iterations);
    report.avg_seconds[g] += rec.seconds;
    for (std::size_t c = 0; c < nc; ++c)
      if (rec.decisions[c].group == g)
        ++hits[g][c];
  }
  for (std::size_t g = 0; g < d; ++g) {
    const double n = static_cast<double>(report.query_counts[g]);
    if (n == 0.0)
      continue;
    report.avg_iters[g] /= n;
    report.avg_seconds[g] /= n;
    for (std::size_t c = 0; c < nc; ++c)
      report.percent[g][c] = 100.0 * static_cast<double>(hits[g][c]) / n;
  }
  return report;
}

// ---------------------------------------------------------------------------
// Synthetic corpus

SyntheticData make_synthetic_data(const SyntheticSpec& spec) {
  require(spec.d >= 1 && spec.base_dim >= 1 && spec.columns_per_group >= 1, ErrorCode::invalid_argument,
          "synthetic corpus sizes must be positive");
  require(spec.shared_weight >= 0.0 && spec.shared_weight < 1.0, ErrorCode::invalid_argument,
          "shared_weight must lie in [0, 1)");
  require(spec.leakage >= 0.0 && spec.noise >= 0.0, ErrorCode::invalid_argument,
          "leakage and noise must be nonnegative");
  const std::size_t dims = 1 + spec.d * spec.base_dim;
  require(spec.n >= dims, ErrorCode::invalid_argument,
          "n = " + std::to_string(spec.n) + " is too small for " + std::to_string(dims) + " directions");
  const auto n = static_cast<Eigen::Index>(spec.n);
  const auto b = static_cast<Eigen::Index>(spec.base_dim);

  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> gauss;
  auto gaussian = [&](Eigen::Index rows, Eigen::Index cols) {
    Matrix m(rows, cols);
    for (Eigen::Index c = 0; c < cols; ++c)
      for (Eigen::Index r = 0; r < rows; ++r)
        m(r, c) = gauss(rng);
    return m;
  };

  Matrix seed = gaussian(n, static_cast<Eigen::Index>(dims));
  seed.col(0).setOnes();
  Eigen::HouseholderQR<Matrix> qr(seed);
  Matrix q = qr.householderQ() * Matrix::Identity(n, static_cast<Eigen::Index>(dims));
  if (q.col(0).sum() < 0.0)
    q.col(0) = -q.col(0);
  const Vector background = q.col(0);
  const double own = std::sqrt(1.0 - spec.shared_weight * spec.shared_weight);

  SyntheticData data;
  const std::size_t total = spec.d * spec.columns_per_group;
  data.x.resize(n, static_cast<Eigen::Index>(total));
  data.labels.resize(total);
  for (std::size_t c = 0; c < total; ++c) {
    const std::size_t g = c % spec.d;
    const Eigen::Index base = 1 + static_cast<Eigen::Index>(g) * b;
    Vector coef = gaussian(b, 1);
    Vector col = spec.shared_weight * background + own * q.middleCols(base, b) * coef.normalized();
    if (spec.d > 1 && spec.leakage > 0.0) {
      Vector other = Vector::Zero(n);
      for (std::size_t h = 0; h < spec.d; ++h)
        if (h != g)
          other += q.middleCols(1 + static_cast<Eigen::Index>(h) * b, b) * gaussian(b, 1);
      col += spec.leakage * other.normalized();
    }
    if (spec.noise > 0.0)
      col += spec.noise * gaussian(n, 1).col(0).normalized();
    data.x.col(static_cast<Eigen::Index>(c)) = col.normalized();
    data.labels[c] = g;
  }
  return data;
}

} // namespace ttlsqr
