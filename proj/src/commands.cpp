#include "ttlsqr/commands.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "ttlsqr/classify.hpp"
#include "ttlsqr/io.hpp"
#include "ttlsqr/pde.hpp"
#include "ttlsqr/sketch.hpp"

#ifndef TTLSQR_VERSION
#define TTLSQR_VERSION "0.0.0"
#endif

namespace ttlsqr {

namespace fs = std::filesystem;
using nlohmann::json;

const char* version() { return TTLSQR_VERSION; }

namespace {

using Clock = std::chrono::steady_clock;

json solver_defaults(std::size_t max_iters, double ne_tol) {
  return {{"round_tol", 1e-4},     {"max_rank", nullptr},         {"max_iters", max_iters},
          {"ne_resid_tol", ne_tol}, {"precondition", false},      {"true_residual_every", 0},
          {"log_every", 0}};
}

json sketch_defaults() {
  return {{"mode", "full"}, {"size", 0}, {"seed", 0}, {"sketch_iters", 30}, {"refine_iters", 2}};
}

json synthetic_defaults() {
  const SyntheticSpec s;
  return {{"n", s.n},
          {"d", s.d},
          {"columns_per_group", s.columns_per_group},
          {"base_dim", s.base_dim},
          {"shared_weight", s.shared_weight},
          {"leakage", s.leakage},
          {"noise", s.noise},
          {"seed", s.seed}};
}

json defaults_for(const std::string& command) {
  if (command == "solve")
    return {{"operator", nullptr}, {"rhs", nullptr},  {"x0", nullptr},
            {"out", "out"},        {"solver", solver_defaults(200, 1e-4)}, {"sketch", sketch_defaults()}};
  if (command == "bench-pde") {
    json solver = solver_defaults(3000, 0.0);
    solver["precondition"] = true;
    solver["true_residual_every"] = 10;
    return {{"problem", 1},
            {"n", 50},
            {"tols", {1e-4, 1e-6, 1e-8}},
            {"ranks", {50}},
            {"stagnation_gap", 1e-2},
            {"out", "out"},
            {"solver", solver}};
  }
  if (command == "classify")
    return {{"dataset", {{"matrix", nullptr}, {"labels", nullptr}, {"kmeans_seed", 0}, {"synthetic", nullptr}}},
            {"d", 3},
            {"m_bar", 36},
            {"ell", 6},
            {"test_count", 20},
            {"criteria", {"C1", "C2", "C3", "C4"}},
            {"c2_orthonormalize", true},
            {"c3_tol", 1e-6},
            {"c3_max_iters", 500},
            {"c4_rank", 10},
            {"record_residuals", false},
            {"out", "out"},
            {"solver", solver_defaults(10, 0.0)},
            {"sketch", sketch_defaults()}};
  fail(ErrorCode::invalid_argument, "unknown command '" + command + "'");
}

// Overlays `user` onto `base`; keys absent from an object-valued default are rejected.
void overlay(json& base, const json& user, const std::string& where) {
  require(user.is_object(), ErrorCode::invalid_argument, where + " must be a JSON object");
  for (auto it = user.begin(); it != user.end(); ++it) {
    const std::string key = where.empty() ? it.key() : where + "." + it.key();
    require(base.contains(it.key()), ErrorCode::invalid_argument, "unknown configuration key '" + key + "'");
    json& slot = base[it.key()];
    if (slot.is_object() && it.value().is_object())
      overlay(slot, it.value(), key);
    else
      slot = it.value();
  }
}

template <class T>
T get(const json& j, const char* key, const std::string& where) {
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    fail(ErrorCode::invalid_argument, "configuration key '" + where + key + "' has the wrong type");
  }
}

std::optional<std::string> optional_path(const json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null())
    return std::nullopt;
  const auto p = get<std::string>(j, key, "");
  require(fs::exists(p), ErrorCode::io, "file '" + p + "' does not exist");
  return p;
}

std::string required_path(const json& j, const char* key) {
  auto p = optional_path(j, key);
  require(p.has_value(), ErrorCode::invalid_argument, std::string("configuration needs '") + key + "'");
  return *p;
}

SolveOptions parse_solver(const json& s) {
  SolveOptions o;
  o.round_tol = get<double>(s, "round_tol", "solver.");
  if (!s.at("max_rank").is_null())
    o.max_rank = get<std::size_t>(s, "max_rank", "solver.");
  o.max_iters = get<std::size_t>(s, "max_iters", "solver.");
  o.ne_resid_tol = get<double>(s, "ne_resid_tol", "solver.");
  o.use_preconditioner = get<bool>(s, "precondition", "solver.");
  o.true_residual_every = get<std::size_t>(s, "true_residual_every", "solver.");
  return o;
}

TwoPassOptions parse_sketch(const json& s, SolveMode& mode) {
  mode = parse_solve_mode(get<std::string>(s, "mode", "sketch."));
  TwoPassOptions t;
  t.sketch_size = get<std::size_t>(s, "size", "sketch.");
  t.seed = get<std::uint64_t>(s, "seed", "sketch.");
  t.sketch_iters = get<std::size_t>(s, "sketch_iters", "sketch.");
  t.refine_iters = get<std::size_t>(s, "refine_iters", "sketch.");
  return t;
}

void attach_logger(SolveOptions& o, const json& solver, const LogSink& log, const std::string& tag) {
  const auto every = get<std::size_t>(solver, "log_every", "solver.");
  if (!log || every == 0)
    return;
  o.on_iterate = [log, every, tag](const LsqrState&, const TraceRecord& r) {
    if (r.iter % every == 0) {
      std::ostringstream ss;
      ss << tag << "iter " << r.iter << " resid_est " << r.resid_est << " ne_resid_est " << r.ne_resid_est
         << " max_rank " << r.max_rank;
      log(ss.str());
    }
    return true;
  };
}

struct Outputs {
  fs::path dir;
  CommandOutput result;

  explicit Outputs(const std::string& out) : dir(out) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    require(!ec && fs::is_directory(dir), ErrorCode::io, "cannot create output directory '" + out + "'");
  }

  std::string path(const std::string& name) {
    const std::string p = (dir / name).string();
    result.files.push_back(p);
    return p;
  }

  void write_manifest(const std::string& command, const json& config, const json& seeds, json extra) {
    json m = {{"command", command},
              {"version", version()},
              {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                            std::to_string(EIGEN_MINOR_VERSION)},
              {"config", config},
              {"seeds", seeds},
              {"outputs", json::array()},
              {"warnings", result.warnings},
              {"result", std::move(extra)}};
    const std::string p = path("manifest.json");
    for (const auto& f : result.files)
      m["outputs"].push_back(fs::path(f).filename().string());
    result.manifest = m.dump(2);
    write_text_file(p, result.manifest + "\n");
  }
};

std::string tag_double(double v) {
  std::ostringstream ss;
  ss.imbue(std::locale::classic());
  ss << v;
  return ss.str();
}

// Factors of a rank-one TT tensor, the scale folded into the first.
std::vector<Vector> rank_one_factors(const TtTensor& f) {
  std::vector<Vector> factors;
  for (const auto& r : f.ranks())
    require(r == 1, ErrorCode::invalid_argument, "sketched solves need a rank-one right-hand side");
  for (const auto& c : f.cores())
    factors.push_back(Eigen::Map<const Vector>(c.values().data(), static_cast<Eigen::Index>(c.size())));
  return factors;
}

CommandOutput run_solve(const json& cfg, const LogSink& log) {
  const std::string op_path = required_path(cfg, "operator");
  const std::string rhs_path = required_path(cfg, "rhs");
  const auto x0_path = optional_path(cfg, "x0");
  SolveOptions opts = parse_solver(cfg.at("solver"));
  attach_logger(opts, cfg.at("solver"), log, "");
  SolveMode mode;
  const TwoPassOptions tp = parse_sketch(cfg.at("sketch"), mode);

  const KronSumOperator op = load_operator_manifest(op_path);
  const TtTensor rhs = load_tt(rhs_path);
  Outputs out(get<std::string>(cfg, "out", ""));

  json result;
  json seeds = json::object();
  TtTensor x;
  LsqrTrace trace;
  const auto t0 = Clock::now();
  if (mode == SolveMode::full) {
    std::optional<Preconditioner> pre;
    if (opts.use_preconditioner)
      pre = build_preconditioner(op);
    std::optional<TtTensor> x0;
    if (x0_path)
      x0 = load_tt(*x0_path);
    SolveResult r = tt_lsqr(op, rhs, opts, pre ? &*pre : nullptr, x0 ? &*x0 : nullptr);
    result["status"] = to_string(r.status);
    result["iterations"] = r.iterations;
    if (r.status == SolveStatus::breakdown)
      out.result.warnings.push_back("solver breakdown after " + std::to_string(r.iterations) + " iterations");
    x = std::move(r.x);
    trace = std::move(r.trace);
  } else {
    require(!x0_path, ErrorCode::invalid_argument, "an initial guess cannot be combined with sketching");
    require(!opts.use_preconditioner, ErrorCode::invalid_argument,
            "preconditioning cannot be combined with sketching");
    TwoPassOptions t = tp;
    if (mode == SolveMode::sketched)
      t.refine_iters = 0;
    const auto factors = rank_one_factors(rhs);
    TwoPassResult r = two_pass_solve(op, factors, opts, t);
    seeds["sketch"] = t.seed;
    result["sketch_status"] = to_string(r.sketched.status);
    result["sketch_iterations"] = r.sketched.iterations;
    result["sketch_seconds"] = r.sketch_seconds;
    if (r.refined) {
      result["status"] = to_string(r.refined->status);
      result["iterations"] = r.refined->iterations;
      result["refine_seconds"] = r.refine_seconds;
      trace = r.refined->trace;
    } else {
      result["status"] = to_string(r.sketched.status);
      result["iterations"] = r.sketched.iterations;
      trace = r.sketched.trace;
    }
    for (const SolveResult* s : {&r.sketched, r.refined ? &*r.refined : nullptr})
      if (s && s->status == SolveStatus::breakdown)
        out.result.warnings.push_back("solver breakdown after " + std::to_string(s->iterations) + " iterations");
    x = std::move(r.x);
  }
  result["seconds"] = std::chrono::duration<double>(Clock::now() - t0).count();
  const auto [resid, ne] = true_residuals(op, rhs, x);
  const double nf = norm(rhs);
  result["resid_true"] = nf > 0.0 ? resid / nf : resid;
  result["ne_resid_true_abs"] = ne;
  result["ranks"] = x.ranks();

  write_trace_csv(trace, out.path("trace.csv"));
  if (opts.true_residual_every > 0)
    write_true_residual_csv(trace, out.path("true_residuals.csv"));
  save_tt(x, out.path("solution.json"));
  out.write_manifest("solve", cfg, seeds, result);
  return out.result;
}

CommandOutput run_bench_pde(const json& cfg, const LogSink& log) {
  const auto problem = get<int>(cfg, "problem", "");
  require(problem == 1 || problem == 2, ErrorCode::invalid_argument, "problem must be 1 or 2");
  const auto n = get<std::size_t>(cfg, "n", "");
  const json& solver = cfg.at("solver");
  const SolveOptions base = parse_solver(solver);

  StudyOptions study;
  study.tolerances = get<std::vector<double>>(cfg, "tols", "");
  study.ranks.clear();
  require(cfg.at("ranks").is_array(), ErrorCode::invalid_argument, "ranks must be an array");
  for (const auto& r : cfg.at("ranks")) {
    if (r.is_null() || (r.is_number() && r.get<double>() <= 0))
      study.ranks.emplace_back(std::nullopt);
    else
      study.ranks.emplace_back(r.get<std::size_t>());
  }
  study.max_iters = base.max_iters;
  study.use_preconditioner = base.use_preconditioner;
  study.true_residual_every = base.true_residual_every;
  study.stagnation_gap = get<double>(cfg, "stagnation_gap", "");

  const PdeProblem p = problem == 1 ? build_convection_problem(n) : build_variable_coefficient_problem(n);
  Outputs out(get<std::string>(cfg, "out", ""));
  json runs = json::array();
  std::ostringstream summary;
  summary << "tolerance,max_rank,iterations,status,stagnation_level,final_true_residual,seconds\n";
  run_convergence_study(p, study, [&](const StudyRun& run) {
    const std::string rank = run.max_rank ? std::to_string(*run.max_rank) : "none";
    const std::string stem = "trace_p" + std::to_string(problem) + "_n" + std::to_string(n) + "_tol" +
                             tag_double(run.tolerance) + "_rank" + rank;
    write_trace_csv(run.result.trace, out.path(stem + ".csv"));
    write_true_residual_csv(run.result.trace, out.path(stem + "_true.csv"));
    const double secs = run.result.trace.records.empty() ? 0.0 : run.result.trace.records.back().seconds;
    summary << format_double(run.tolerance) << ',' << rank << ',' << run.result.iterations << ','
            << to_string(run.result.status) << ',' << format_double(run.stagnation_level) << ','
            << format_double(run.final_true_residual) << ',' << format_double(secs) << '\n';
    if (run.result.status == SolveStatus::breakdown)
      out.result.warnings.push_back("breakdown in run tol " + tag_double(run.tolerance) + " rank " + rank);
    runs.push_back({{"tolerance", run.tolerance},
                    {"max_rank", run.max_rank ? json(*run.max_rank) : json(nullptr)},
                    {"iterations", run.result.iterations},
                    {"status", to_string(run.result.status)},
                    {"stagnation_level", run.stagnation_level},
                    {"final_true_residual", run.final_true_residual}});
    if (log)
      log("tol " + tag_double(run.tolerance) + " rank " + rank + ": " + std::to_string(run.result.iterations) +
          " iterations, stagnation " + tag_double(run.stagnation_level));
  });
  write_text_file(out.path("summary.csv"), summary.str());
  out.write_manifest("bench-pde", cfg, json::object(), {{"runs", runs}});
  return out.result;
}

std::vector<std::size_t> read_labels(const std::string& path) {
  std::istringstream in(read_text_file(path));
  std::vector<std::size_t> labels;
  long long v;
  while (in >> v) {
    require(v >= 0, ErrorCode::parse, path + ": labels must be nonnegative integers");
    labels.push_back(static_cast<std::size_t>(v));
  }
  require(in.eof(), ErrorCode::parse, path + ": labels must be integers");
  return labels;
}

CommandOutput run_classify(const json& cfg, const LogSink& log) {
  const json& ds = cfg.at("dataset");
  const auto d = get<std::size_t>(cfg, "d", "");
  json seeds = json::object();
  Matrix x;
  std::vector<std::size_t> labels;
  if (!ds.at("synthetic").is_null()) {
    require(ds.at("matrix").is_null(), ErrorCode::invalid_argument,
            "dataset takes either 'matrix' or 'synthetic', not both");
    json spec = synthetic_defaults();
    spec["d"] = d;
    overlay(spec, ds.at("synthetic"), "dataset.synthetic");
    SyntheticSpec s;
    s.n = get<std::size_t>(spec, "n", "dataset.synthetic.");
    s.d = get<std::size_t>(spec, "d", "dataset.synthetic.");
    s.columns_per_group = get<std::size_t>(spec, "columns_per_group", "dataset.synthetic.");
    s.base_dim = get<std::size_t>(spec, "base_dim", "dataset.synthetic.");
    s.shared_weight = get<double>(spec, "shared_weight", "dataset.synthetic.");
    s.leakage = get<double>(spec, "leakage", "dataset.synthetic.");
    s.noise = get<double>(spec, "noise", "dataset.synthetic.");
    s.seed = get<std::uint64_t>(spec, "seed", "dataset.synthetic.");
    SyntheticData data = make_synthetic_data(s);
    x = std::move(data.x);
    labels = std::move(data.labels);
    seeds["synthetic"] = s.seed;
  } else {
    const std::string mpath = required_path(ds, "matrix");
    x = Matrix(load_matrix_market(mpath));
    if (const auto lpath = optional_path(ds, "labels")) {
      labels = read_labels(*lpath);
      require(labels.size() == static_cast<std::size_t>(x.cols()), ErrorCode::dimension_mismatch,
              *lpath + " has " + std::to_string(labels.size()) + " labels for " + std::to_string(x.cols()) +
                  " columns");
    } else {
      const auto seed = get<std::uint64_t>(ds, "kmeans_seed", "dataset.");
      Matrix normalized = x;
      for (Eigen::Index c = 0; c < normalized.cols(); ++c)
        if (normalized.col(c).norm() > 0.0)
          normalized.col(c).normalize();
      labels = kmeans_cluster(normalized, d, seed);
      seeds["kmeans"] = seed;
    }
  }

  const GroupedCorpus corpus = build_corpus(x, labels, d, get<std::size_t>(cfg, "m_bar", ""),
                                            get<std::size_t>(cfg, "ell", ""), get<std::size_t>(cfg, "test_count", ""));
  HarnessOptions h;
  h.criteria.clear();
  for (const auto& c : get<std::vector<std::string>>(cfg, "criteria", ""))
    h.criteria.push_back(parse_criterion(c));
  h.solve = parse_solver(cfg.at("solver"));
  require(!h.solve.use_preconditioner, ErrorCode::invalid_argument,
          "preconditioning is not available in the classification harness");
  attach_logger(h.solve, cfg.at("solver"), log, "");
  h.sketch = parse_sketch(cfg.at("sketch"), h.mode);
  h.c2_orthonormalize = get<bool>(cfg, "c2_orthonormalize", "");
  h.c3_tol = get<double>(cfg, "c3_tol", "");
  h.c3_max_iters = get<std::size_t>(cfg, "c3_max_iters", "");
  h.c4_rank = get<std::size_t>(cfg, "c4_rank", "");
  h.record_residuals = get<bool>(cfg, "record_residuals", "");
  if (h.mode != SolveMode::full)
    seeds["sketch"] = h.sketch.seed;

  Outputs out(get<std::string>(cfg, "out", ""));
  const EvalReport report = evaluate_harness(corpus, h);
  std::size_t degenerate = 0;
  for (const auto& q : report.queries)
    for (const auto& dec : q.decisions)
      degenerate += dec.degenerate ? 1 : 0;
  if (degenerate)
    out.result.warnings.push_back(std::to_string(degenerate) + " decisions fell to the tie-break (degenerate scores)");
  write_report_csv(report, out.path("report.csv"));
  write_decisions_csv(report, out.path("decisions.csv"));
  json percent = json::object();
  for (std::size_t c = 0; c < report.criteria.size(); ++c) {
    json col = json::array();
    for (std::size_t g = 0; g < report.num_groups; ++g)
      col.push_back(report.percent[g][c]);
    percent[to_string(report.criteria[c])] = col;
  }
  if (log)
    log("classified " + std::to_string(report.queries.size()) + " queries in " +
        tag_double(report.total_solve_seconds) + " s of solves");
  out.write_manifest("classify", cfg, seeds,
                     {{"percent", percent},
                      {"rows", corpus.rows()},
                      {"queries", report.queries.size()},
                      {"total_solve_seconds", report.total_solve_seconds}});
  return out.result;
}

} // namespace

std::string default_config(const std::string& command) { return defaults_for(command).dump(2); }

CommandOutput run_command(const std::string& command, const std::string& config_json, const LogSink& log) {
  json cfg = defaults_for(command);
  json user;
  try {
    user = config_json.empty() ? json::object() : json::parse(config_json);
  } catch (const json::exception& e) {
    fail(ErrorCode::parse, std::string("configuration: ") + e.what());
  }
  overlay(cfg, user, "");
  if (command == "solve")
    return run_solve(cfg, log);
  if (command == "bench-pde")
    return run_bench_pde(cfg, log);
  return run_classify(cfg, log);
}

} // namespace ttlsqr
