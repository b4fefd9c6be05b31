#include "ttlsqr/pde.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace ttlsqr {

namespace {

double grid_step(std::size_t n) { return 1.0 / static_cast<double>(n + 1); }

void check_size(std::size_t n) {
  require(n >= 3, ErrorCode::invalid_argument, "PDE grids need n >= 3");
}

TtTensor constant_rhs(std::size_t n) {
  const std::vector<Vector> ones(3, Vector::Ones(static_cast<Eigen::Index>(n)));
  return rank_one(ones);
}

} // namespace

Matrix laplacian_1d(std::size_t n) {
  return diffusion_1d(n, [](double) { return -1.0; });
}

Matrix convection_1d(std::size_t n, const std::function<double(double)>& c) {
  const double h = grid_step(n);
  const auto nn = static_cast<Eigen::Index>(n);
  Matrix b = Matrix::Zero(nn, nn);
  for (Eigen::Index k = 0; k < nn; ++k) {
    const double ck = c(static_cast<double>(k + 1) * h) / (2.0 * h);
    if (k > 0)
      b(k, k - 1) = -ck;
    if (k + 1 < nn)
      b(k, k + 1) = ck;
  }
  return b;
}

Matrix diffusion_1d(std::size_t n, const std::function<double(double)>& a) {
  const double h = grid_step(n);
  const auto nn = static_cast<Eigen::Index>(n);
  Matrix t = Matrix::Zero(nn, nn);
  for (Eigen::Index k = 0; k < nn; ++k) {
    const double x = static_cast<double>(k + 1) * h;
    const double lo = a(x - 0.5 * h);
    const double hi = a(x + 0.5 * h);
    t(k, k) = -(lo + hi) / (h * h);
    if (k > 0)
      t(k, k - 1) = lo / (h * h);
    if (k + 1 < nn)
      t(k, k + 1) = hi / (h * h);
  }
  return t;
}

PdeProblem build_convection_problem(std::size_t n) {
  check_size(n);
  const Matrix t = laplacian_1d(n);
  const Matrix b = convection_1d(n, [](double x) { return 2.0 * std::exp(1.0 - x); });
  const Identity id{n};
  std::vector<std::vector<ModeMatrix>> terms;
  terms.push_back({ModeMatrix(id), ModeMatrix(id), ModeMatrix(t)});
  terms.push_back({ModeMatrix(id), ModeMatrix(t), ModeMatrix(id)});
  terms.push_back({ModeMatrix(Matrix(t + b)), ModeMatrix(id), ModeMatrix(id)});
  return {n, PdeVariant::convection, KronSumOperator(std::move(terms)), constant_rhs(n)};
}

PdeProblem build_variable_coefficient_problem(std::size_t n, std::function<double(double)> a) {
  check_size(n);
  if (!a)
    a = [](double x) { return -std::exp(-x); };
  const Matrix t = diffusion_1d(n, a);
  const Matrix c = convection_1d(n, [](double) { return 1.0; });
  const Identity id{n};
  std::vector<std::vector<ModeMatrix>> terms;
  terms.push_back({ModeMatrix(id), ModeMatrix(id), ModeMatrix(t)});
  terms.push_back({ModeMatrix(id), ModeMatrix(t), ModeMatrix(id)});
  terms.push_back({ModeMatrix(Matrix(t + c)), ModeMatrix(id), ModeMatrix(id)});
  return {n, PdeVariant::variable_coefficient, KronSumOperator(std::move(terms)), constant_rhs(n)};
}

std::vector<StudyRun> run_convergence_study(const PdeProblem& problem, const StudyOptions& opts,
                                            const std::function<void(const StudyRun&)>& on_run) {
  require(!opts.tolerances.empty() && !opts.ranks.empty(), ErrorCode::invalid_argument,
          "the study needs at least one tolerance and one rank setting");
  std::optional<Preconditioner> precond;
  if (opts.use_preconditioner)
    precond = build_preconditioner(problem.op);

  std::vector<StudyRun> runs;
  for (double tol : opts.tolerances) {
    for (const auto& rank : opts.ranks) {
      SolveOptions so;
      so.round_tol = tol;
      so.max_rank = rank;
      so.max_iters = opts.max_iters;
      so.ne_resid_tol = 0.0;
      so.true_residual_every = opts.true_residual_every;
      if (opts.stagnation_gap > 0.0) {
        const double gap = opts.stagnation_gap;
        so.on_iterate = [gap](const LsqrState&, const TraceRecord& rec) {
          return !(rec.resid_true && rec.resid_est < gap * *rec.resid_true);
        };
      }
      SolveResult result = tt_lsqr(problem.op, problem.rhs, so, precond ? &*precond : nullptr);
      double best = std::numeric_limits<double>::infinity();
      double last = best;
      for (const auto& rec : result.trace.records)
        if (rec.resid_true) {
          best = std::min(best, *rec.resid_true);
          last = *rec.resid_true;
        }
      if (!std::isfinite(best)) {
        const double r = true_residuals(problem.op, problem.rhs, result.x).first / norm(problem.rhs);
        best = last = r;
      }
      runs.push_back({tol, rank, std::move(result), best, last});
      if (on_run)
        on_run(runs.back());
    }
  }
  return runs;
}

} // namespace ttlsqr
