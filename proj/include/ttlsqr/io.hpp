#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "ttlsqr/classify.hpp"
#include "ttlsqr/kron_op.hpp"
#include "ttlsqr/lsqr.hpp"
#include "ttlsqr/tt_tensor.hpp"

namespace ttlsqr {

/// Shortest decimal that round-trips, independent of the global locale.
std::string format_double(double v);
double parse_double(const std::string& s);

inline constexpr const char* kTraceHeader = "iter,resid_est,ne_resid_est,ne_resid_true,max_rank,seconds";

/// One row per record; a missing ne_resid_true is an empty field.
void write_trace_csv(const LsqrTrace& trace, std::ostream& out);
void write_trace_csv(const LsqrTrace& trace, const std::string& path);
std::vector<TraceRecord> read_trace_csv(std::istream& in);
std::vector<TraceRecord> read_trace_csv(const std::string& path);

/// iter,resid_true,ne_resid_true for the records that carry explicit residuals.
void write_true_residual_csv(const LsqrTrace& trace, const std::string& path);

/// {"mode_sizes": [...], "tt_ranks": [...], "cores": [[...], ...]}, each core
/// flattened row-major over (left, mode, right).
std::string tt_to_json(const TtTensor& x);
TtTensor tt_from_json(const std::string& text);
void save_tt(const TtTensor& x, const std::string& path);
TtTensor load_tt(const std::string& path);

/// {"modes": [{"rows": n, "cols": m, "terms": [path, ...]}, ...]} with one
/// Matrix Market path per term; "identity" stands for I. Relative paths are
/// resolved against the manifest's directory.
KronSumOperator load_operator_manifest(const std::string& path);

/// group,criterion,percent,avg_iters,avg_seconds with 1-based groups.
void write_report_csv(const EvalReport& report, const std::string& path);
/// One row per query and criterion, 1-based groups.
void write_decisions_csv(const EvalReport& report, const std::string& path);

void write_text_file(const std::string& path, const std::string& text);
std::string read_text_file(const std::string& path);

} // namespace ttlsqr
