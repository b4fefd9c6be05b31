#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "ttlsqr/kron_op.hpp"
#include "ttlsqr/lsqr.hpp"
#include "ttlsqr/sketch.hpp"

namespace ttlsqr {

// ---------------------------------------------------------------------------
// Matrix Market input

struct MatrixMarketInfo {
  std::size_t rows = 0;
  std::size_t cols = 0;
  /// Entries stored in the file (before symmetric expansion).
  std::size_t entries = 0;
  std::string format;   ///< "coordinate" or "array"
  std::string field;    ///< real, integer or pattern
  std::string symmetry; ///< general, symmetric or skew-symmetric
};

SparseMatrix read_matrix_market(std::istream& in, MatrixMarketInfo* info = nullptr);
SparseMatrix load_matrix_market(const std::string& path, MatrixMarketInfo* info = nullptr);

// ---------------------------------------------------------------------------
// Clustering and corpus

/// Lloyd's algorithm on the columns of x with k-means++ seeding. Stops after
/// max_sweeps or once no centroid moves more than `tol`.
std::vector<std::size_t> kmeans_cluster(const Matrix& x, std::size_t k, std::uint64_t seed,
                                        std::size_t max_sweeps = 200, double tol = 1e-8);

struct TestQuery {
  Vector f;
  std::size_t group;  ///< 0-based
  std::size_t column; ///< column index in the source matrix
};

/// d groups of unit-norm training columns split into ell blocks of width m,
/// plus held-out queries.
struct GroupedCorpus {
  std::vector<Matrix> groups;
  std::vector<TestQuery> test_queries;
  std::size_t ell = 0;
  std::size_t m = 0;

  std::size_t num_groups() const noexcept { return groups.size(); }
  std::size_t rows() const { return static_cast<std::size_t>(groups.front().rows()); }
  std::size_t m_bar() const noexcept { return ell * m; }
  /// A_j^(i): columns [i*m, (i+1)*m) of group j.
  Matrix block(std::size_t j, std::size_t i) const;
};

/// Clusters are ranked by size (largest first, ties by label); the first d
/// form the groups. Each takes its first m_bar nonzero columns for training
/// and the next test_count as queries.
GroupedCorpus build_corpus(const Matrix& x, const std::vector<std::size_t>& labels, std::size_t d,
                           std::size_t m_bar, std::size_t ell, std::size_t test_count = 20);

/// terms[i][j] = A_j^(i).
KronSumOperator build_operator(const GroupedCorpus& corpus);

/// f x ... x f with d copies of the unit-normalized query.
TtTensor query_rhs(const Vector& f, std::size_t d);

// ---------------------------------------------------------------------------
// Criteria

struct Decision {
  std::size_t group = 0; ///< 0-based
  std::vector<double> scores;
  /// All scores zero or equal: the choice is only the tie-break.
  bool degenerate = false;
};

/// argmax_j |<L x, 1 x .. x f (mode j) x .. x 1>|.
Decision classify_c1(const KronSumOperator& l, const TtTensor& x, const Vector& f, double round_tol);

/// Scores of a tensor y contracted with f on mode j and ones elsewhere.
std::vector<double> contraction_scores(const TtTensor& y, const Vector& f);

struct C2Model {
  TtTensor reduced_solution;
  std::vector<Matrix> mode_bases;
};

/// argmax_j ||f^T U^(j)|| with U^(j) from the cores of L applied to the
/// rank-one reduction of x. With `orthonormalize` false the raw core columns
/// are used instead of an orthonormal basis.
Decision classify_c2(const KronSumOperator& l, const TtTensor& x, const Vector& f,
                     bool orthonormalize = true, C2Model* model = nullptr);

/// Block norms of the least-squares coefficients on [A_1 .. A_d].
Decision classify_c3(const GroupedCorpus& corpus, const Vector& f, double tol, std::size_t max_iters,
                     std::size_t* iterations = nullptr);

struct C4Model {
  std::vector<Matrix> bases;
};

/// Leading `rank` left singular vectors of every group.
C4Model build_c4_model(const GroupedCorpus& corpus, std::size_t rank = 10);
Decision classify_c4(const C4Model& model, const Vector& f);
Decision classify_c4(const GroupedCorpus& corpus, const Vector& f, std::size_t rank = 10);

// ---------------------------------------------------------------------------
// Evaluation harness

enum class Criterion { c1, c2, c3, c4 };
enum class SolveMode { full, sketched, two_pass };

std::string to_string(Criterion c);
std::string to_string(SolveMode m);
Criterion parse_criterion(const std::string& s);
SolveMode parse_solve_mode(const std::string& s);

struct HarnessOptions {
  std::vector<Criterion> criteria{Criterion::c1, Criterion::c2, Criterion::c3, Criterion::c4};
  SolveOptions solve = default_classify_solve();
  SolveMode mode = SolveMode::full;
  TwoPassOptions sketch;
  double c3_tol = 1e-6;
  std::size_t c3_max_iters = 500;
  std::size_t c4_rank = 10;
  bool c2_orthonormalize = true;
  /// Record ||f - L x|| per query (and of the sketched start for two-pass).
  bool record_residuals = false;

  /// 10 fixed iterations with round_tol 1e-4.
  static SolveOptions default_classify_solve();
};

struct QueryRecord {
  std::size_t index = 0;
  std::size_t true_group = 0;
  std::size_t column = 0;
  /// One entry per requested criterion, in request order.
  std::vector<Decision> decisions;
  std::size_t iterations = 0;
  double seconds = 0.0;
  std::string status;
  std::optional<double> residual;
  std::optional<double> sketch_residual;
};

struct EvalReport {
  std::vector<Criterion> criteria;
  std::size_t num_groups = 0;
  std::vector<QueryRecord> queries;
  /// percent[g][c] = 100 * successes / queries of group g.
  std::vector<std::vector<double>> percent;
  std::vector<double> avg_iters;
  std::vector<double> avg_seconds;
  std::vector<std::size_t> query_counts;
  double total_solve_seconds = 0.0;
};

EvalReport evaluate_harness(const GroupedCorpus& corpus, const HarnessOptions& opts);

// ---------------------------------------------------------------------------
// Synthetic corpus

/// Every group owns a base subspace of dimension base_dim; the subspaces are
/// mutually orthogonal and orthogonal to a shared background direction
/// ones/sqrt(n). A column is shared_weight * background + the remaining
/// weight in its own subspace, then leakage * (a unit vector from the other
/// groups' subspaces) and noise * (a unit Gaussian vector) are added before
/// the column is normalized.
struct SyntheticSpec {
  std::size_t n = 512;
  std::size_t d = 3;
  std::size_t columns_per_group = 56;
  std::size_t base_dim = 4;
  double shared_weight = 0.5;
  double leakage = 0.0;
  double noise = 0.0;
  std::uint64_t seed = 1;
};

struct SyntheticData {
  Matrix x;
  std::vector<std::size_t> labels;
};

SyntheticData make_synthetic_data(const SyntheticSpec& spec);

} // namespace ttlsqr
