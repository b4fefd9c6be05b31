#include "ttlsqr/lsqr.hpp"

#include <chrono>
#include <cmath>

namespace ttlsqr {

namespace {

constexpr double kBreakdown = 1e-14;
// Residual tensors are recompressed this tightly before the adjoint is applied.
constexpr double kResidualRoundTol = 1e-10;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

} // namespace

std::string to_string(SolveStatus status) {
  switch (status) {
  case SolveStatus::converged:
    return "converged";
  case SolveStatus::max_iters:
    return "max_iters";
  case SolveStatus::breakdown:
    return "breakdown";
  case SolveStatus::stopped:
    return "stopped";
  }
  return "unknown";
}

std::pair<double, double> estimate_residuals(const LsqrState& state) {
  return {state.phi_bar, state.phi_bar * state.alpha * std::abs(state.c)};
}

namespace {

std::pair<double, double> explicit_residuals(const KronSumOperator& l, const TtTensor& f,
                                             const TtTensor& x, const Preconditioner* precond) {
  const WeightedTensor rhs[] = {{-1.0, &f}};
  Rounded r = l.round_apply_plus(x, false, rhs, kResidualRoundTol, {});
  const double resid = r.report.input_norm;
  TtTensor ne = l.apply_plus(r.tensor, true, {});
  if (precond)
    ne = precondition_solve(*precond, ne, true);
  return {resid, norm(ne)};
}

} // namespace

double residual_norm(const KronSumOperator& l, const TtTensor& f, const TtTensor& x) {
  require(f.mode_sizes() == l.row_sizes() && x.mode_sizes() == l.col_sizes(),
          ErrorCode::dimension_mismatch, "residual shapes do not match the operator");
  const WeightedTensor rhs[] = {{-1.0, &f}};
  return l.round_apply_plus(x, false, rhs, kResidualRoundTol, {}).report.input_norm;
}

std::pair<double, double> true_residuals(const KronSumOperator& l, const TtTensor& f, const TtTensor& x) {
  require(f.mode_sizes() == l.row_sizes() && x.mode_sizes() == l.col_sizes(),
          ErrorCode::dimension_mismatch, "residual shapes do not match the operator");
  return explicit_residuals(l, f, x, nullptr);
}

SolveResult tt_lsqr(const KronSumOperator& l, const TtTensor& f, const SolveOptions& opts,
                    const Preconditioner* precond, const TtTensor* x0) {
  require(f.mode_sizes() == l.row_sizes(), ErrorCode::dimension_mismatch,
          "right-hand side mode sizes do not match the operator rows");
  require(opts.round_tol >= 0.0, ErrorCode::invalid_argument, "round_tol must be nonnegative");
  require(opts.ne_resid_tol >= 0.0, ErrorCode::invalid_argument, "ne_resid_tol must be nonnegative");
  require(opts.max_iters >= 1, ErrorCode::invalid_argument, "max_iters must be at least 1");
  require(!opts.max_rank || *opts.max_rank >= 1, ErrorCode::invalid_argument, "max_rank must be positive");
  if (precond) {
    require(precond->mode_factors.size() == l.num_modes(), ErrorCode::dimension_mismatch,
            "preconditioner does not match the operator");
    for (std::size_t j = 0; j < l.num_modes(); ++j)
      require(static_cast<std::size_t>(precond->mode_factors[j].rows()) == l.col_sizes()[j],
              ErrorCode::dimension_mismatch, "preconditioner does not match the operator");
  }
  if (x0)
    require(x0->mode_sizes() == l.col_sizes(), ErrorCode::dimension_mismatch,
            "initial guess mode sizes do not match the operator columns");

  const auto t0 = Clock::now();
  double excluded = 0.0;
  auto rnd = [&](std::span<const WeightedTensor> parts) {
    return round_sum(parts, opts.round_tol, opts.max_rank);
  };
  auto to_solution = [&](const TtTensor& y) { return precond ? precondition_solve(*precond, y) : y; };
  auto finish = [&](TtTensor y) {
    TtTensor x = to_solution(y);
    if (x0) {
      const WeightedTensor parts[] = {{1.0, x0}, {1.0, &x}};
      x = rnd(parts).tensor;
    }
    return x;
  };

  TtTensor rhs = f;
  if (x0) {
    const auto images = l.term_images(*x0, false);
    std::vector<WeightedTensor> parts{{1.0, &f}};
    for (const auto& t : images)
      parts.push_back({-1.0, &t});
    rhs = rnd(parts).tensor;
  }

  SolveResult result;
  const auto zero_cols = TtTensor::zeros(l.col_sizes());
  const double beta1 = norm(rhs);
  result.trace.beta1 = beta1;
  if (beta1 == 0.0) {
    result.x = finish(zero_cols);
    result.status = SolveStatus::converged;
    return result;
  }

  // L o M^{-1} and its adjoint, each fused with the three-term recurrence.
  auto forward = [&](const TtTensor& v, double alpha, const TtTensor& u) {
    const TtTensor pv = precond ? precondition_solve(*precond, v) : v;
    const WeightedTensor extra[] = {{-alpha, &u}};
    return l.round_apply_plus(pv, false, extra, opts.round_tol, opts.max_rank);
  };
  auto backward = [&](const TtTensor& u, double beta, const TtTensor* v) {
    std::vector<WeightedTensor> extra;
    if (v)
      extra.push_back({-beta, v});
    if (!precond)
      return l.round_apply_plus(u, true, extra, opts.round_tol, opts.max_rank);
    auto images = l.term_images(u, true);
    for (auto& t : images)
      t = precondition_solve(*precond, t, true);
    std::vector<WeightedTensor> parts;
    for (const auto& t : images)
      parts.push_back({1.0, &t});
    parts.insert(parts.end(), extra.begin(), extra.end());
    return round_sum(parts, opts.round_tol, opts.max_rank);
  };

  LsqrState st;
  st.beta = beta1;
  st.u = scale(rhs, 1.0 / beta1);
  Rounded v1 = backward(st.u, 0.0, nullptr);
  // L^T f at roundoff level relative to ||L|| ||f|| counts as zero.
  const double alpha1 = v1.report.output_norm > kBreakdown * frobenius_bound(l, precond)
                            ? v1.report.output_norm
                            : 0.0;
  result.trace.alpha1 = alpha1;
  st.alpha = alpha1;
  st.phi_bar = beta1;
  st.rho_bar = alpha1;
  st.x = zero_cols;
  if (alpha1 == 0.0) {
    // f is orthogonal to the range: x = 0 already solves the problem.
    result.x = finish(zero_cols);
    result.status = SolveStatus::converged;
    return result;
  }
  st.v = scale(v1.tensor, 1.0 / alpha1);
  st.g = st.v;
  const double ne_ref = alpha1 * beta1;

  for (std::size_t it = 1; it <= opts.max_iters; ++it) {
    bool broke = false;
    Rounded ru = forward(st.v, st.alpha, st.u);
    double beta = ru.report.output_norm;
    double alpha = 0.0;
    TtTensor v_next = st.v;
    if (beta < kBreakdown * beta1) {
      beta = 0.0;
      broke = true;
    } else {
      st.u = scale(ru.tensor, 1.0 / beta);
      Rounded rv = backward(st.u, beta, &st.v);
      alpha = rv.report.output_norm;
      if (alpha < kBreakdown * alpha1) {
        alpha = 0.0;
        broke = true;
      } else {
        v_next = scale(rv.tensor, 1.0 / alpha);
      }
    }
    st.beta = beta;
    st.alpha = alpha;

    st.rho = std::hypot(st.rho_bar, beta);
    st.c = st.rho_bar / st.rho;
    st.s = beta / st.rho;
    st.theta = st.s * alpha;
    st.rho_bar = -st.c * alpha;
    st.phi = st.c * st.phi_bar;
    st.phi_bar = st.s * st.phi_bar;

    {
      const WeightedTensor xs[] = {{1.0, &st.x}, {st.phi / st.rho, &st.g}};
      st.x = rnd(xs).tensor;
    }
    if (!broke) {
      const WeightedTensor gs[] = {{1.0, &v_next}, {-st.theta / st.rho, &st.g}};
      st.g = rnd(gs).tensor;
    }
    st.v = std::move(v_next);
    st.iteration = it;

    TraceRecord rec;
    rec.iter = it;
    const auto [resid, ne] = estimate_residuals(st);
    rec.resid_est = resid / beta1;
    rec.ne_resid_est = ne / ne_ref;
    rec.max_rank = st.x.max_rank();
    if (opts.true_residual_every > 0 && it % opts.true_residual_every == 0) {
      const auto t1 = Clock::now();
      const auto [r_true, ne_true] = explicit_residuals(l, rhs, to_solution(st.x), precond);
      rec.resid_true = r_true / beta1;
      rec.ne_resid_true = ne_true / ne_ref;
      excluded += seconds_since(t1);
    }
    rec.seconds = seconds_since(t0) - excluded;
    result.trace.records.push_back(rec);
    result.iterations = it;

    const bool keep_going = !opts.on_iterate || opts.on_iterate(st, rec);
    if (broke) {
      result.status = SolveStatus::breakdown;
      break;
    }
    if (rec.ne_resid_est <= opts.ne_resid_tol) {
      result.status = SolveStatus::converged;
      break;
    }
    if (!keep_going) {
      result.status = SolveStatus::stopped;
      break;
    }
    result.status = SolveStatus::max_iters;
  }
  result.x = finish(st.x);
  return result;
}

// ---------------------------------------------------------------------------
// Vector LSQR

namespace {

// op_scale > 0 bounds ||A||; ||A^T f|| below kBreakdown * op_scale * ||f|| is then taken as zero.
VectorLsqrResult lsqr_impl(const MatVec& apply, const MatVec& apply_transpose, const Vector& f, double tol,
                           std::size_t max_iters, const std::function<void(std::size_t, const Vector&)>& observer,
                           double op_scale) {
  require(tol >= 0.0, ErrorCode::invalid_argument, "tolerance must be nonnegative");
  VectorLsqrResult out;
  Vector u = f;
  double beta = u.norm();
  const double beta1 = beta;
  Vector v = apply_transpose(u);
  out.x = Vector::Zero(v.size());
  if (beta1 == 0.0) {
    out.converged = true;
    return out;
  }
  u /= beta;
  v /= beta;
  double alpha = v.norm();
  const double alpha1 = alpha > kBreakdown * op_scale ? alpha : 0.0;
  if (alpha1 == 0.0) {
    out.converged = true;
    out.resid_est = beta1;
    return out;
  }
  v /= alpha;
  Vector w = v;
  double phi_bar = beta1;
  double rho_bar = alpha1;

  for (std::size_t it = 1; it <= max_iters; ++it) {
    bool broke = false;
    u = apply(v) - alpha * u;
    require(static_cast<std::size_t>(u.size()) == static_cast<std::size_t>(f.size()),
            ErrorCode::dimension_mismatch, "operator output length mismatch");
    beta = u.norm();
    if (beta < kBreakdown * beta1) {
      beta = 0.0;
      alpha = 0.0;
      broke = true;
    } else {
      u /= beta;
      v = apply_transpose(u) - beta * v;
      alpha = v.norm();
      if (alpha < kBreakdown * alpha1) {
        alpha = 0.0;
        broke = true;
      } else {
        v /= alpha;
      }
    }
    const double rho = std::hypot(rho_bar, beta);
    const double c = rho_bar / rho;
    const double s = beta / rho;
    const double theta = s * alpha;
    rho_bar = -c * alpha;
    const double phi = c * phi_bar;
    phi_bar = s * phi_bar;
    out.x += (phi / rho) * w;
    w = v - (theta / rho) * w;
    out.iterations = it;
    out.resid_est = phi_bar;
    out.ne_resid_est = phi_bar * alpha * std::abs(c);
    if (observer)
      observer(it, out.x);
    if (broke || out.ne_resid_est <= tol * alpha1 * beta1) {
      out.converged = true;
      break;
    }
  }
  return out;
}

} // namespace

VectorLsqrResult vector_lsqr(const MatVec& apply, const MatVec& apply_transpose, const Vector& f,
                             double tol, std::size_t max_iters,
                             const std::function<void(std::size_t, const Vector&)>& observer) {
  return lsqr_impl(apply, apply_transpose, f, tol, max_iters, observer, 0.0);
}

VectorLsqrResult vector_lsqr(const Matrix& a, const Vector& f, double tol, std::size_t max_iters,
                             const std::function<void(std::size_t, const Vector&)>& observer) {
  require(a.rows() == f.size(), ErrorCode::dimension_mismatch, "matrix rows do not match the vector");
  return lsqr_impl([&](const Vector& v) -> Vector { return a * v; },
                   [&](const Vector& u) -> Vector { return a.transpose() * u; }, f, tol, max_iters, observer,
                   a.norm());
}

} // namespace ttlsqr
