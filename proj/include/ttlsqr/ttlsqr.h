#ifndef TTLSQR_H
#define TTLSQR_H

/* C interface to the TT-LSQR library. Every function that can fail returns a
 * ttlsqr_status; on failure ttlsqr_last_error() describes the problem (the
 * message is per thread and valid until the next failing call). Handles are
 * opaque and owned by the caller, who releases them with the matching
 * *_free function. Free functions accept NULL. */

#include <stddef.h>

#if defined(_WIN32)
#if defined(TTLSQR_BUILDING)
#define TTLSQR_API __declspec(dllexport)
#else
#define TTLSQR_API __declspec(dllimport)
#endif
#else
#define TTLSQR_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum ttlsqr_status {
  TTLSQR_OK = 0,
  TTLSQR_ERR_INVALID_ARGUMENT = 1,
  TTLSQR_ERR_DIMENSION_MISMATCH = 2,
  TTLSQR_ERR_LIMIT_EXCEEDED = 3,
  TTLSQR_ERR_NUMERICAL = 4,
  TTLSQR_ERR_IO = 5,
  TTLSQR_ERR_PARSE = 6,
  TTLSQR_ERR_INTERNAL = 7
} ttlsqr_status;

typedef struct ttlsqr_tensor ttlsqr_tensor;
typedef struct ttlsqr_operator ttlsqr_operator;
typedef struct ttlsqr_result ttlsqr_result;

TTLSQR_API const char* ttlsqr_version(void);
TTLSQR_API const char* ttlsqr_last_error(void);
TTLSQR_API const char* ttlsqr_status_name(ttlsqr_status status);
TTLSQR_API void ttlsqr_string_free(char* s);

/* ---- TT tensors ------------------------------------------------------- */

/* factors[k] holds sizes[k] values. */
TTLSQR_API ttlsqr_status ttlsqr_tensor_rank_one(size_t modes, const size_t* sizes,
                                                const double* const* factors, ttlsqr_tensor** out);
/* ranks has modes+1 entries with ranks[0] = ranks[modes] = 1; cores[k] holds
 * ranks[k]*sizes[k]*ranks[k+1] values, index a + ranks[k]*(i + sizes[k]*b). */
TTLSQR_API ttlsqr_status ttlsqr_tensor_from_cores(size_t modes, const size_t* sizes, const size_t* ranks,
                                                  const double* const* cores, ttlsqr_tensor** out);
TTLSQR_API ttlsqr_status ttlsqr_tensor_load(const char* path, ttlsqr_tensor** out);
TTLSQR_API ttlsqr_status ttlsqr_tensor_save(const ttlsqr_tensor* x, const char* path);
TTLSQR_API void ttlsqr_tensor_free(ttlsqr_tensor* x);

TTLSQR_API ttlsqr_status ttlsqr_tensor_num_modes(const ttlsqr_tensor* x, size_t* out);
/* sizes: num_modes entries; ranks: num_modes+1 entries. */
TTLSQR_API ttlsqr_status ttlsqr_tensor_mode_sizes(const ttlsqr_tensor* x, size_t* sizes);
TTLSQR_API ttlsqr_status ttlsqr_tensor_ranks(const ttlsqr_tensor* x, size_t* ranks);
TTLSQR_API ttlsqr_status ttlsqr_tensor_norm(const ttlsqr_tensor* x, double* out);
/* max_rank 0 means no cap. */
TTLSQR_API ttlsqr_status ttlsqr_tensor_round(const ttlsqr_tensor* x, double tol, size_t max_rank,
                                             ttlsqr_tensor** out);
/* Full tensor with the first index fastest; len must equal the element count. */
TTLSQR_API ttlsqr_status ttlsqr_tensor_to_dense(const ttlsqr_tensor* x, double* values, size_t len);

/* ---- Operators -------------------------------------------------------- */

/* Term i, mode j is matrices[i*modes + j], column-major rows[j] x cols[j];
 * a NULL entry is the identity (rows[j] must equal cols[j]). */
TTLSQR_API ttlsqr_status ttlsqr_operator_create(size_t terms, size_t modes, const size_t* rows,
                                                const size_t* cols, const double* const* matrices,
                                                ttlsqr_operator** out);
TTLSQR_API ttlsqr_status ttlsqr_operator_load(const char* manifest_path, ttlsqr_operator** out);
TTLSQR_API void ttlsqr_operator_free(ttlsqr_operator* op);
/* round(L x) or round(L^T x); tol 0 and max_rank 0 return the exact sum. */
TTLSQR_API ttlsqr_status ttlsqr_operator_apply(const ttlsqr_operator* op, const ttlsqr_tensor* x, int transpose,
                                               double tol, size_t max_rank, ttlsqr_tensor** out);

/* ---- Solver ----------------------------------------------------------- */

typedef struct ttlsqr_solve_options {
  double round_tol;
  size_t max_rank; /* 0: no cap */
  size_t max_iters;
  double ne_resid_tol;
  int use_preconditioner;
  size_t true_residual_every;
} ttlsqr_solve_options;

typedef struct ttlsqr_trace_record {
  size_t iter;
  double resid_est;
  double ne_resid_est;
  double ne_resid_true; /* NaN when not computed */
  double resid_true;    /* NaN when not computed */
  size_t max_rank;
  double seconds;
} ttlsqr_trace_record;

TTLSQR_API void ttlsqr_solve_options_default(ttlsqr_solve_options* opts);
/* x0 may be NULL. */
TTLSQR_API ttlsqr_status ttlsqr_solve(const ttlsqr_operator* op, const ttlsqr_tensor* rhs,
                                      const ttlsqr_solve_options* opts, const ttlsqr_tensor* x0,
                                      ttlsqr_result** out);
TTLSQR_API void ttlsqr_result_free(ttlsqr_result* r);
TTLSQR_API ttlsqr_status ttlsqr_result_solution(const ttlsqr_result* r, ttlsqr_tensor** out);
TTLSQR_API ttlsqr_status ttlsqr_result_iterations(const ttlsqr_result* r, size_t* out);
/* "converged", "max_iters", "breakdown" or "stopped"; owned by the result. */
TTLSQR_API const char* ttlsqr_result_status(const ttlsqr_result* r);
TTLSQR_API ttlsqr_status ttlsqr_result_trace_length(const ttlsqr_result* r, size_t* out);
TTLSQR_API ttlsqr_status ttlsqr_result_trace_record(const ttlsqr_result* r, size_t index,
                                                    ttlsqr_trace_record* out);
TTLSQR_API ttlsqr_status ttlsqr_result_write_trace(const ttlsqr_result* r, const char* path);

/* ---- Commands --------------------------------------------------------- */

typedef void (*ttlsqr_log_fn)(const char* line, void* user);

/* command: "solve", "bench-pde" or "classify". *out receives a JSON string
 * to release with ttlsqr_string_free. */
TTLSQR_API ttlsqr_status ttlsqr_default_config(const char* command, char** out);
/* Runs a command on a JSON configuration; manifest (may be NULL) receives the
 * written manifest.json contents. */
TTLSQR_API ttlsqr_status ttlsqr_run_command(const char* command, const char* config_json, ttlsqr_log_fn log,
                                            void* user, char** manifest);

#ifdef __cplusplus
}
#endif

#endif
