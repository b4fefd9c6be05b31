#include "ttlsqr/ttlsqr.h"

#include <cstdlib>
#include <cstring>
#include <limits>
#include <new>
#include <string>

#include "ttlsqr/commands.hpp"
#include "ttlsqr/io.hpp"
#include "ttlsqr/kron_op.hpp"
#include "ttlsqr/lsqr.hpp"

struct ttlsqr_tensor {
  ttlsqr::TtTensor value;
};

struct ttlsqr_operator {
  ttlsqr::KronSumOperator value;
};

struct ttlsqr_result {
  ttlsqr::SolveResult value;
  std::string status;
};

namespace {

using namespace ttlsqr;

thread_local std::string last_error;

ttlsqr_status map_code(ErrorCode code) {
  switch (code) {
  case ErrorCode::invalid_argument:
    return TTLSQR_ERR_INVALID_ARGUMENT;
  case ErrorCode::dimension_mismatch:
    return TTLSQR_ERR_DIMENSION_MISMATCH;
  case ErrorCode::limit_exceeded:
    return TTLSQR_ERR_LIMIT_EXCEEDED;
  case ErrorCode::numerical:
    return TTLSQR_ERR_NUMERICAL;
  case ErrorCode::io:
    return TTLSQR_ERR_IO;
  case ErrorCode::parse:
    return TTLSQR_ERR_PARSE;
  }
  return TTLSQR_ERR_INTERNAL;
}

template <class F>
ttlsqr_status guarded(F&& body) {
  try {
    body();
    return TTLSQR_OK;
  } catch (const Error& e) {
    last_error = e.what();
    return map_code(e.code());
  } catch (const std::bad_alloc&) {
    last_error = "out of memory";
    return TTLSQR_ERR_LIMIT_EXCEEDED;
  } catch (const std::exception& e) {
    last_error = e.what();
    return TTLSQR_ERR_INTERNAL;
  } catch (...) {
    last_error = "unknown failure";
    return TTLSQR_ERR_INTERNAL;
  }
}

void need(const void* p, const char* what) {
  require(p != nullptr, ErrorCode::invalid_argument, std::string(what) + " is NULL");
}

std::optional<std::size_t> cap(std::size_t max_rank) {
  return max_rank ? std::optional<std::size_t>(max_rank) : std::nullopt;
}

char* copy_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out)
    throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

} // namespace

extern "C" {

const char* ttlsqr_version(void) { return ttlsqr::version(); }

const char* ttlsqr_last_error(void) { return last_error.c_str(); }

const char* ttlsqr_status_name(ttlsqr_status status) {
  switch (status) {
  case TTLSQR_OK:
    return "ok";
  case TTLSQR_ERR_INVALID_ARGUMENT:
    return "invalid argument";
  case TTLSQR_ERR_DIMENSION_MISMATCH:
    return "dimension mismatch";
  case TTLSQR_ERR_LIMIT_EXCEEDED:
    return "limit exceeded";
  case TTLSQR_ERR_NUMERICAL:
    return "numerical failure";
  case TTLSQR_ERR_IO:
    return "I/O error";
  case TTLSQR_ERR_PARSE:
    return "parse error";
  case TTLSQR_ERR_INTERNAL:
    return "internal error";
  }
  return "unknown status";
}

void ttlsqr_string_free(char* s) { std::free(s); }

ttlsqr_status ttlsqr_tensor_rank_one(size_t modes, const size_t* sizes, const double* const* factors,
                                     ttlsqr_tensor** out) {
  return guarded([&] {
    need(sizes, "sizes");
    need(factors, "factors");
    need(out, "out");
    std::vector<Vector> f;
    for (size_t k = 0; k < modes; ++k) {
      need(factors[k], "factor");
      f.push_back(Eigen::Map<const Vector>(factors[k], static_cast<Eigen::Index>(sizes[k])));
    }
    *out = new ttlsqr_tensor{rank_one(f)};
  });
}

ttlsqr_status ttlsqr_tensor_from_cores(size_t modes, const size_t* sizes, const size_t* ranks,
                                       const double* const* cores, ttlsqr_tensor** out) {
  return guarded([&] {
    need(sizes, "sizes");
    need(ranks, "ranks");
    need(cores, "cores");
    need(out, "out");
    require(modes >= 1, ErrorCode::invalid_argument, "a tensor needs at least one mode");
    require(ranks[0] == 1 && ranks[modes] == 1, ErrorCode::invalid_argument,
            "boundary ranks must be 1");
    std::vector<TtCore> c;
    for (size_t k = 0; k < modes; ++k) {
      need(cores[k], "core");
      const size_t count = ranks[k] * sizes[k] * ranks[k + 1];
      c.emplace_back(ranks[k], sizes[k], ranks[k + 1], std::vector<double>(cores[k], cores[k] + count));
    }
    *out = new ttlsqr_tensor{TtTensor(std::move(c))};
  });
}

ttlsqr_status ttlsqr_tensor_load(const char* path, ttlsqr_tensor** out) {
  return guarded([&] {
    need(path, "path");
    need(out, "out");
    *out = new ttlsqr_tensor{load_tt(path)};
  });
}

ttlsqr_status ttlsqr_tensor_save(const ttlsqr_tensor* x, const char* path) {
  return guarded([&] {
    need(x, "tensor");
    need(path, "path");
    save_tt(x->value, path);
  });
}

void ttlsqr_tensor_free(ttlsqr_tensor* x) { delete x; }

ttlsqr_status ttlsqr_tensor_num_modes(const ttlsqr_tensor* x, size_t* out) {
  return guarded([&] {
    need(x, "tensor");
    need(out, "out");
    *out = x->value.num_modes();
  });
}

ttlsqr_status ttlsqr_tensor_mode_sizes(const ttlsqr_tensor* x, size_t* sizes) {
  return guarded([&] {
    need(x, "tensor");
    need(sizes, "sizes");
    const auto s = x->value.mode_sizes();
    std::copy(s.begin(), s.end(), sizes);
  });
}

ttlsqr_status ttlsqr_tensor_ranks(const ttlsqr_tensor* x, size_t* ranks) {
  return guarded([&] {
    need(x, "tensor");
    need(ranks, "ranks");
    const auto r = x->value.ranks();
    std::copy(r.begin(), r.end(), ranks);
  });
}

ttlsqr_status ttlsqr_tensor_norm(const ttlsqr_tensor* x, double* out) {
  return guarded([&] {
    need(x, "tensor");
    need(out, "out");
    *out = norm(x->value);
  });
}

ttlsqr_status ttlsqr_tensor_round(const ttlsqr_tensor* x, double tol, size_t max_rank, ttlsqr_tensor** out) {
  return guarded([&] {
    need(x, "tensor");
    need(out, "out");
    *out = new ttlsqr_tensor{round(x->value, tol, cap(max_rank)).tensor};
  });
}

ttlsqr_status ttlsqr_tensor_to_dense(const ttlsqr_tensor* x, double* values, size_t len) {
  return guarded([&] {
    need(x, "tensor");
    need(values, "values");
    const DenseTensor d = to_dense(x->value);
    require(d.data.size() == len, ErrorCode::dimension_mismatch,
            "buffer holds " + std::to_string(len) + " values, the tensor has " + std::to_string(d.data.size()));
    std::copy(d.data.begin(), d.data.end(), values);
  });
}

ttlsqr_status ttlsqr_operator_create(size_t terms, size_t modes, const size_t* rows, const size_t* cols,
                                     const double* const* matrices, ttlsqr_operator** out) {
  return guarded([&] {
    need(rows, "rows");
    need(cols, "cols");
    need(matrices, "matrices");
    need(out, "out");
    require(terms >= 1 && modes >= 1, ErrorCode::invalid_argument, "an operator needs terms and modes");
    std::vector<std::vector<ModeMatrix>> t(terms);
    for (size_t i = 0; i < terms; ++i)
      for (size_t j = 0; j < modes; ++j) {
        const double* a = matrices[i * modes + j];
        if (!a) {
          require(rows[j] == cols[j], ErrorCode::dimension_mismatch, "identity term on a non-square mode");
          t[i].emplace_back(Identity{rows[j]});
        } else {
          t[i].emplace_back(Matrix(Eigen::Map<const Matrix>(a, static_cast<Eigen::Index>(rows[j]),
                                                            static_cast<Eigen::Index>(cols[j]))));
        }
      }
    *out = new ttlsqr_operator{KronSumOperator(std::move(t))};
  });
}

ttlsqr_status ttlsqr_operator_load(const char* manifest_path, ttlsqr_operator** out) {
  return guarded([&] {
    need(manifest_path, "path");
    need(out, "out");
    *out = new ttlsqr_operator{load_operator_manifest(manifest_path)};
  });
}

void ttlsqr_operator_free(ttlsqr_operator* op) { delete op; }

ttlsqr_status ttlsqr_operator_apply(const ttlsqr_operator* op, const ttlsqr_tensor* x, int transpose, double tol,
                                    size_t max_rank, ttlsqr_tensor** out) {
  return guarded([&] {
    need(op, "operator");
    need(x, "tensor");
    need(out, "out");
    TtTensor y = transpose ? op->value.apply_adjoint(x->value, tol, cap(max_rank))
                           : op->value.apply(x->value, tol, cap(max_rank));
    *out = new ttlsqr_tensor{std::move(y)};
  });
}

void ttlsqr_solve_options_default(ttlsqr_solve_options* opts) {
  if (!opts)
    return;
  const SolveOptions d;
  opts->round_tol = d.round_tol;
  opts->max_rank = 0;
  opts->max_iters = d.max_iters;
  opts->ne_resid_tol = d.ne_resid_tol;
  opts->use_preconditioner = 0;
  opts->true_residual_every = d.true_residual_every;
}

ttlsqr_status ttlsqr_solve(const ttlsqr_operator* op, const ttlsqr_tensor* rhs, const ttlsqr_solve_options* opts,
                           const ttlsqr_tensor* x0, ttlsqr_result** out) {
  return guarded([&] {
    need(op, "operator");
    need(rhs, "rhs");
    need(out, "out");
    SolveOptions o;
    if (opts) {
      o.round_tol = opts->round_tol;
      o.max_rank = cap(opts->max_rank);
      o.max_iters = opts->max_iters;
      o.ne_resid_tol = opts->ne_resid_tol;
      o.use_preconditioner = opts->use_preconditioner != 0;
      o.true_residual_every = opts->true_residual_every;
    }
    std::optional<Preconditioner> pre;
    if (o.use_preconditioner)
      pre = build_preconditioner(op->value);
    SolveResult r = tt_lsqr(op->value, rhs->value, o, pre ? &*pre : nullptr, x0 ? &x0->value : nullptr);
    const std::string status = to_string(r.status);
    *out = new ttlsqr_result{std::move(r), status};
  });
}

void ttlsqr_result_free(ttlsqr_result* r) { delete r; }

ttlsqr_status ttlsqr_result_solution(const ttlsqr_result* r, ttlsqr_tensor** out) {
  return guarded([&] {
    need(r, "result");
    need(out, "out");
    *out = new ttlsqr_tensor{r->value.x};
  });
}

ttlsqr_status ttlsqr_result_iterations(const ttlsqr_result* r, size_t* out) {
  return guarded([&] {
    need(r, "result");
    need(out, "out");
    *out = r->value.iterations;
  });
}

const char* ttlsqr_result_status(const ttlsqr_result* r) { return r ? r->status.c_str() : ""; }

ttlsqr_status ttlsqr_result_trace_length(const ttlsqr_result* r, size_t* out) {
  return guarded([&] {
    need(r, "result");
    need(out, "out");
    *out = r->value.trace.records.size();
  });
}

ttlsqr_status ttlsqr_result_trace_record(const ttlsqr_result* r, size_t index, ttlsqr_trace_record* out) {
  return guarded([&] {
    need(r, "result");
    need(out, "out");
    require(index < r->value.trace.records.size(), ErrorCode::invalid_argument, "trace index out of range");
    const TraceRecord& t = r->value.trace.records[index];
    const double nan = std::numeric_limits<double>::quiet_NaN();
    *out = {t.iter, t.resid_est, t.ne_resid_est, t.ne_resid_true.value_or(nan), t.resid_true.value_or(nan),
            t.max_rank, t.seconds};
  });
}

ttlsqr_status ttlsqr_result_write_trace(const ttlsqr_result* r, const char* path) {
  return guarded([&] {
    need(r, "result");
    need(path, "path");
    write_trace_csv(r->value.trace, std::string(path));
  });
}

ttlsqr_status ttlsqr_default_config(const char* command, char** out) {
  return guarded([&] {
    need(command, "command");
    need(out, "out");
    *out = copy_string(default_config(command));
  });
}

ttlsqr_status ttlsqr_run_command(const char* command, const char* config_json, ttlsqr_log_fn log, void* user,
                                 char** manifest) {
  return guarded([&] {
    need(command, "command");
    LogSink sink;
    if (log)
      sink = [log, user](const std::string& line) { log(line.c_str(), user); };
    CommandOutput o = run_command(command, config_json ? config_json : "", sink);
    if (manifest)
      *manifest = copy_string(o.manifest);
  });
}

} // extern "C"
