#include "ttlsqr/io.hpp"

#include <charconv>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace ttlsqr {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  require(static_cast<bool>(out), ErrorCode::io, "cannot write '" + path + "'");
  return out;
}

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorCode::io, "cannot open '" + path + "'");
  return in;
}

void finish(std::ofstream& out, const std::string& path) {
  out.flush();
  require(static_cast<bool>(out), ErrorCode::io, "write failed for '" + path + "'");
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    fields.push_back(line.substr(start, comma - start));
    if (comma == std::string::npos)
      break;
    start = comma + 1;
  }
  return fields;
}

std::size_t parse_size(const std::string& s) {
  std::size_t v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  require(ec == std::errc() && ptr == s.data() + s.size(), ErrorCode::parse,
          "'" + s + "' is not a nonnegative integer");
  return v;
}

} // namespace

std::string format_double(double v) {
  char buf[32];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  require(ec == std::errc(), ErrorCode::invalid_argument, "cannot format value");
  return {buf, ptr};
}

double parse_double(const std::string& s) {
  double v = 0.0;
  const char* first = s.data();
  if (!s.empty() && s.front() == '+')
    ++first;
  const auto [ptr, ec] = std::from_chars(first, s.data() + s.size(), v);
  require(ec == std::errc() && ptr == s.data() + s.size(), ErrorCode::parse,
          "'" + s + "' is not a number");
  return v;
}

void write_trace_csv(const LsqrTrace& trace, std::ostream& out) {
  out << kTraceHeader << '\n';
  for (const auto& r : trace.records) {
    out << r.iter << ',' << format_double(r.resid_est) << ',' << format_double(r.ne_resid_est) << ','
        << (r.ne_resid_true ? format_double(*r.ne_resid_true) : std::string()) << ',' << r.max_rank
        << ',' << format_double(r.seconds) << '\n';
  }
}

void write_trace_csv(const LsqrTrace& trace, const std::string& path) {
  auto out = open_out(path);
  write_trace_csv(trace, out);
  finish(out, path);
}

std::vector<TraceRecord> read_trace_csv(std::istream& in) {
  std::string line;
  require(static_cast<bool>(std::getline(in, line)), ErrorCode::parse, "empty trace file");
  if (!line.empty() && line.back() == '\r')
    line.pop_back();
  require(line == kTraceHeader, ErrorCode::parse, "unexpected trace header '" + line + "'");
  std::vector<TraceRecord> records;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r')
      line.pop_back();
    if (line.empty())
      continue;
    const auto f = split_csv(line);
    if (f.size() != 6)
      fail(ErrorCode::parse, "line " + std::to_string(line_no) + ": expected 6 fields");
    try {
      TraceRecord r;
      r.iter = parse_size(f[0]);
      r.resid_est = parse_double(f[1]);
      r.ne_resid_est = parse_double(f[2]);
      if (!f[3].empty())
        r.ne_resid_true = parse_double(f[3]);
      r.max_rank = parse_size(f[4]);
      r.seconds = parse_double(f[5]);
      records.push_back(r);
    } catch (const Error& e) {
      fail(ErrorCode::parse, "line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return records;
}

std::vector<TraceRecord> read_trace_csv(const std::string& path) {
  auto in = open_in(path);
  return read_trace_csv(in);
}

void write_true_residual_csv(const LsqrTrace& trace, const std::string& path) {
  auto out = open_out(path);
  out << "iter,resid_true,ne_resid_true\n";
  for (const auto& r : trace.records)
    if (r.resid_true)
      out << r.iter << ',' << format_double(*r.resid_true) << ','
          << (r.ne_resid_true ? format_double(*r.ne_resid_true) : std::string()) << '\n';
  finish(out, path);
}

std::string tt_to_json(const TtTensor& x) {
  json cores = json::array();
  for (const auto& c : x.cores()) {
    std::vector<double> flat;
    flat.reserve(c.size());
    for (std::size_t a = 0; a < c.left_rank(); ++a)
      for (std::size_t i = 0; i < c.mode_size(); ++i)
        for (std::size_t b = 0; b < c.right_rank(); ++b)
          flat.push_back(c(a, i, b));
    cores.push_back(std::move(flat));
  }
  json doc = {{"mode_sizes", x.mode_sizes()}, {"tt_ranks", x.ranks()}, {"cores", std::move(cores)}};
  return doc.dump();
}

TtTensor tt_from_json(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
    const auto sizes = doc.at("mode_sizes").get<std::vector<std::size_t>>();
    const auto ranks = doc.at("tt_ranks").get<std::vector<std::size_t>>();
    const auto& cores = doc.at("cores");
    require(!sizes.empty() && ranks.size() == sizes.size() + 1 && cores.size() == sizes.size(),
            ErrorCode::parse, "inconsistent TT document shape");
    std::vector<TtCore> out;
    for (std::size_t k = 0; k < sizes.size(); ++k) {
      const auto flat = cores.at(k).get<std::vector<double>>();
      const std::size_t l = ranks[k], n = sizes[k], r = ranks[k + 1];
      require(flat.size() == l * n * r, ErrorCode::parse,
              "core " + std::to_string(k) + " holds " + std::to_string(flat.size()) + " values, expected " +
                  std::to_string(l * n * r));
      TtCore c(l, n, r);
      std::size_t p = 0;
      for (std::size_t a = 0; a < l; ++a)
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t b = 0; b < r; ++b)
            c(a, i, b) = flat[p++];
      out.push_back(std::move(c));
    }
    return TtTensor(std::move(out));
  } catch (const json::exception& e) {
    fail(ErrorCode::parse, std::string("TT document: ") + e.what());
  }
}

void save_tt(const TtTensor& x, const std::string& path) { write_text_file(path, tt_to_json(x)); }

TtTensor load_tt(const std::string& path) { return tt_from_json(read_text_file(path)); }

KronSumOperator load_operator_manifest(const std::string& path) {
  const fs::path base = fs::path(path).parent_path();
  json doc;
  try {
    doc = json::parse(read_text_file(path));
  } catch (const json::exception& e) {
    fail(ErrorCode::parse, path + ": " + e.what());
  }
  try {
    const auto& modes = doc.at("modes");
    require(modes.is_array() && !modes.empty(), ErrorCode::parse, path + ": 'modes' must be a nonempty array");
    const std::size_t nt = modes.front().at("terms").size();
    require(nt >= 1, ErrorCode::parse, path + ": every mode needs at least one term");
    std::vector<std::vector<ModeMatrix>> terms(nt);
    for (const auto& mode : modes) {
      const auto rows = mode.at("rows").get<std::size_t>();
      const auto cols = mode.at("cols").get<std::size_t>();
      const auto& list = mode.at("terms");
      require(list.size() == nt, ErrorCode::parse, path + ": modes list different term counts");
      for (std::size_t i = 0; i < nt; ++i) {
        const auto entry = list.at(i).get<std::string>();
        if (entry == "identity") {
          require(rows == cols, ErrorCode::dimension_mismatch, path + ": identity term on a non-square mode");
          terms[i].emplace_back(Identity{rows});
          continue;
        }
        fs::path p(entry);
        if (p.is_relative())
          p = base / p;
        SparseMatrix a = load_matrix_market(p.string());
        require(static_cast<std::size_t>(a.rows()) == rows && static_cast<std::size_t>(a.cols()) == cols,
                ErrorCode::dimension_mismatch,
                p.string() + " is " + std::to_string(a.rows()) + " x " + std::to_string(a.cols()) +
                    ", the manifest declares " + std::to_string(rows) + " x " + std::to_string(cols));
        // Matrices that are mostly nonzero are faster dense.
        if (a.nonZeros() * 4 > a.rows() * a.cols())
          terms[i].emplace_back(Matrix(a));
        else
          terms[i].emplace_back(std::move(a));
      }
    }
    return KronSumOperator(std::move(terms));
  } catch (const json::exception& e) {
    fail(ErrorCode::parse, path + ": " + e.what());
  }
}

void write_report_csv(const EvalReport& report, const std::string& path) {
  auto out = open_out(path);
  out << "group,criterion,percent,avg_iters,avg_seconds\n";
  for (std::size_t g = 0; g < report.num_groups; ++g)
    for (std::size_t c = 0; c < report.criteria.size(); ++c)
      out << g + 1 << ',' << to_string(report.criteria[c]) << ',' << format_double(report.percent[g][c])
          << ',' << format_double(report.avg_iters[g]) << ',' << format_double(report.avg_seconds[g])
          << '\n';
  finish(out, path);
}

void write_decisions_csv(const EvalReport& report, const std::string& path) {
  auto out = open_out(path);
  out << "query,column,true_group,criterion,decision,correct,degenerate,iterations,seconds,status,residual,"
         "sketch_residual\n";
  for (const auto& q : report.queries)
    for (std::size_t c = 0; c < report.criteria.size(); ++c) {
      const Decision& d = q.decisions[c];
      out << q.index + 1 << ',' << q.column + 1 << ',' << q.true_group + 1 << ','
          << to_string(report.criteria[c]) << ',' << d.group + 1 << ',' << (d.group == q.true_group ? 1 : 0)
          << ',' << (d.degenerate ? 1 : 0) << ',' << q.iterations << ',' << format_double(q.seconds) << ','
          << q.status << ',' << (q.residual ? format_double(*q.residual) : std::string()) << ','
          << (q.sketch_residual ? format_double(*q.sketch_residual) : std::string()) << '\n';
    }
  finish(out, path);
}

void write_text_file(const std::string& path, const std::string& text) {
  auto out = open_out(path);
  out << text;
  finish(out, path);
}

std::string read_text_file(const std::string& path) {
  auto in = open_in(path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

} // namespace ttlsqr
