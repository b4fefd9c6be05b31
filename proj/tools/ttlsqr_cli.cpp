// Command-line front end; every computation goes through the C API.
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "ttlsqr/ttlsqr.h"

using nlohmann::json;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitMissingFile = 3;

int exit_code(ttlsqr_status s) {
  switch (s) {
  case TTLSQR_OK:
    return 0;
  case TTLSQR_ERR_INVALID_ARGUMENT:
    return kExitUsage;
  case TTLSQR_ERR_IO:
    return kExitMissingFile;
  case TTLSQR_ERR_PARSE:
    return 4;
  case TTLSQR_ERR_DIMENSION_MISMATCH:
    return 5;
  case TTLSQR_ERR_NUMERICAL:
    return 6;
  case TTLSQR_ERR_LIMIT_EXCEEDED:
    return 7;
  case TTLSQR_ERR_INTERNAL:
    return 1;
  }
  return 1;
}

void log_line(const char* line, void*) { std::fprintf(stderr, "[ttlsqr] %s\n", line); }

struct SolverFlags {
  std::optional<double> round_tol;
  std::optional<std::size_t> max_rank;
  std::optional<std::size_t> max_iters;
  std::optional<double> ne_tol;
  bool precondition = false;
  bool no_precondition = false;
  std::optional<std::size_t> true_every;
  std::optional<std::size_t> log_every;

  void add(CLI::App* app) {
    app->add_option("--round-tol", round_tol, "TT rounding tolerance");
    app->add_option("--max-rank", max_rank, "TT rank cap (0: none)");
    app->add_option("--max-iters", max_iters, "iteration limit");
    app->add_option("--ne-tol", ne_tol, "normal-equation relative residual tolerance");
    app->add_flag("--precondition", precondition, "right preconditioning with per-mode QR factors");
    app->add_flag("--no-precondition", no_precondition, "disable preconditioning");
    app->add_option("--true-residual-every", true_every, "explicit residuals every k iterations (0: never)");
    app->add_option("--log-every", log_every, "log a progress line every k iterations (0: never)");
  }

  void apply(json& cfg) const {
    json& s = cfg["solver"];
    if (round_tol)
      s["round_tol"] = *round_tol;
    if (max_rank)
      s["max_rank"] = *max_rank == 0 ? json(nullptr) : json(*max_rank);
    if (max_iters)
      s["max_iters"] = *max_iters;
    if (ne_tol)
      s["ne_resid_tol"] = *ne_tol;
    if (precondition)
      s["precondition"] = true;
    if (no_precondition)
      s["precondition"] = false;
    if (true_every)
      s["true_residual_every"] = *true_every;
    if (log_every)
      s["log_every"] = *log_every;
    if (s.empty())
      cfg.erase("solver");
  }
};

struct SketchFlags {
  bool sketch = false;
  bool two_pass = false;
  std::optional<std::size_t> size;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> sketch_iters;
  std::optional<std::size_t> refine_iters;

  void add(CLI::App* app) {
    auto* sk = app->add_flag("--sketch", sketch, "solve the sketched problem only");
    auto* tp = app->add_flag("--two-pass", two_pass, "sketched solve followed by refinement");
    sk->excludes(tp);
    app->add_option("--sketch-size", size, "sketch rows s (0: 2*d*m_bar)");
    app->add_option("--sketch-seed", seed, "sketch random seed");
    app->add_option("--sketch-iters", sketch_iters, "iterations on the sketched problem");
    app->add_option("--refine-iters", refine_iters, "refinement iterations of the two-pass solve");
  }

  void apply(json& cfg) const {
    json& s = cfg["sketch"];
    if (sketch)
      s["mode"] = "sketched";
    if (two_pass)
      s["mode"] = "two_pass";
    if (size)
      s["size"] = *size;
    if (seed)
      s["seed"] = *seed;
    if (sketch_iters)
      s["sketch_iters"] = *sketch_iters;
    if (refine_iters)
      s["refine_iters"] = *refine_iters;
    if (s.empty())
      cfg.erase("sketch");
  }
};

// Splits "a,b,c" into doubles; "none" maps to null.
json parse_list(const std::string& text, bool allow_none) {
  json out = json::array();
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (allow_none && (item == "none" || item == "0")) {
      out.push_back(nullptr);
      continue;
    }
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != item.size())
      throw CLI::ValidationError("list", "'" + item + "' is not a number");
    if (allow_none)
      out.push_back(static_cast<std::size_t>(v));
    else
      out.push_back(v);
  }
  return out;
}

void deep_merge(json& base, const json& over) {
  for (auto it = over.begin(); it != over.end(); ++it) {
    if (base.contains(it.key()) && base[it.key()].is_object() && it.value().is_object())
      deep_merge(base[it.key()], it.value());
    else
      base[it.key()] = it.value();
  }
}

int run(const std::string& command, const std::string& config_path, const json& flags) {
  json cfg = json::object();
  if (!config_path.empty()) {
    std::ifstream in(config_path);
    if (!in) {
      std::fprintf(stderr, "error: cannot open config file '%s'\n", config_path.c_str());
      return kExitMissingFile;
    }
    try {
      cfg = json::parse(in);
    } catch (const json::exception& e) {
      std::fprintf(stderr, "error: %s: %s\n", config_path.c_str(), e.what());
      return exit_code(TTLSQR_ERR_PARSE);
    }
    if (!cfg.is_object()) {
      std::fprintf(stderr, "error: %s must hold a JSON object\n", config_path.c_str());
      return kExitUsage;
    }
  }
  deep_merge(cfg, flags);
  char* manifest = nullptr;
  const ttlsqr_status s = ttlsqr_run_command(command.c_str(), cfg.dump().c_str(), log_line, nullptr, &manifest);
  if (s != TTLSQR_OK) {
    std::fprintf(stderr, "error (%s): %s\n", ttlsqr_status_name(s), ttlsqr_last_error());
    return exit_code(s);
  }
  const json m = json::parse(manifest);
  ttlsqr_string_free(manifest);
  for (const auto& w : m.at("warnings"))
    std::fprintf(stderr, "warning: %s\n", w.get<std::string>().c_str());
  std::printf("%s\n", m.at("result").dump().c_str());
  return 0;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"Tensor-train LSQR for multiterm Kronecker least-squares problems"};
  app.set_version_flag("--version", std::string(ttlsqr_version()));
  app.require_subcommand(0, 1);

  // solve
  auto* solve = app.add_subcommand("solve", "TT-LSQR on an operator manifest and a TT right-hand side");
  std::string solve_config, op_path, rhs_path, x0_path, solve_out;
  SolverFlags solve_solver;
  SketchFlags solve_sketch;
  solve->add_option("--config", solve_config, "JSON configuration file");
  solve->add_option("--operator", op_path, "operator manifest JSON");
  solve->add_option("--rhs", rhs_path, "right-hand side TT JSON");
  solve->add_option("--x0", x0_path, "initial guess TT JSON");
  solve->add_option("--out", solve_out, "output directory");
  solve_solver.add(solve);
  solve_sketch.add(solve);

  // bench-pde
  auto* bench = app.add_subcommand("bench-pde", "convergence study on the finite-difference problems");
  std::string bench_config, bench_out, tols, ranks;
  std::optional<int> problem;
  std::optional<std::size_t> n;
  std::optional<double> gap;
  SolverFlags bench_solver;
  bench->add_option("--config", bench_config, "JSON configuration file");
  bench->add_option("--problem", problem, "1: convection-diffusion, 2: variable coefficient")
      ->check(CLI::IsMember({1, 2}));
  bench->add_option("--n", n, "grid points per direction")->check(CLI::PositiveNumber);
  bench->add_option("--tols", tols, "comma-separated rounding tolerances");
  bench->add_option("--ranks", ranks, "comma-separated rank caps (none or 0: no cap)");
  bench->add_option("--stagnation-gap", gap, "stop once the estimate falls this factor below the explicit residual");
  bench->add_option("--out", bench_out, "output directory");
  bench_solver.add(bench);

  // classify
  auto* classify = app.add_subcommand("classify", "query classification on a grouped corpus");
  std::string cls_config, matrix, labels, criteria, cls_out;
  std::optional<std::uint64_t> kmeans_seed, synthetic_seed;
  std::optional<std::size_t> d, m_bar, ell, test_count, synthetic_n;
  std::optional<double> leakage, noise;
  bool synthetic = false, raw_c2 = false, record_residuals = false;
  SolverFlags cls_solver;
  SketchFlags cls_sketch;
  classify->add_option("--config", cls_config, "JSON configuration file");
  classify->add_option("--matrix", matrix, "Matrix Market term-document matrix (columns are documents)");
  classify->add_option("--labels", labels, "whitespace-separated column labels (default: k-means)");
  classify->add_option("--kmeans-seed", kmeans_seed, "k-means seed");
  classify->add_flag("--synthetic", synthetic, "use the synthetic separable corpus");
  classify->add_option("--synthetic-n", synthetic_n, "synthetic corpus rows");
  classify->add_option("--synthetic-seed", synthetic_seed, "synthetic corpus seed");
  classify->add_option("--leakage", leakage, "synthetic cross-group leakage");
  classify->add_option("--noise", noise, "synthetic per-column noise");
  classify->add_option("--d", d, "number of groups");
  classify->add_option("--m-bar", m_bar, "training columns per group");
  classify->add_option("--ell", ell, "blocks per group");
  classify->add_option("--test-count", test_count, "queries per group");
  classify->add_option("--criteria", criteria, "comma-separated subset of C1,C2,C3,C4");
  classify->add_flag("--raw-c2", raw_c2, "criterion 2 on the raw core columns");
  classify->add_flag("--record-residuals", record_residuals, "record ||f - L x|| per query");
  classify->add_option("--out", cls_out, "output directory");
  cls_solver.add(classify);
  cls_sketch.add(classify);

  // config
  auto* config = app.add_subcommand("config", "print the default configuration of a command");
  std::string config_of;
  config->add_option("command", config_of, "solve, bench-pde or classify")->required();

  if (argc < 2) {
    std::cerr << app.help();
    return kExitUsage;
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  json flags = json::object();
  if (*solve) {
    if (!op_path.empty())
      flags["operator"] = op_path;
    if (!rhs_path.empty())
      flags["rhs"] = rhs_path;
    if (!x0_path.empty())
      flags["x0"] = x0_path;
    if (!solve_out.empty())
      flags["out"] = solve_out;
    solve_solver.apply(flags);
    solve_sketch.apply(flags);
    return run("solve", solve_config, flags);
  }
  if (*bench) {
    try {
      if (!tols.empty())
        flags["tols"] = parse_list(tols, false);
      if (!ranks.empty())
        flags["ranks"] = parse_list(ranks, true);
    } catch (const CLI::ValidationError& e) {
      std::cerr << "error: " << e.what() << "\n";
      return kExitUsage;
    }
    if (problem)
      flags["problem"] = *problem;
    if (n)
      flags["n"] = *n;
    if (gap)
      flags["stagnation_gap"] = *gap;
    if (!bench_out.empty())
      flags["out"] = bench_out;
    bench_solver.apply(flags);
    return run("bench-pde", bench_config, flags);
  }
  if (*classify) {
    json ds = json::object();
    if (!matrix.empty())
      ds["matrix"] = matrix;
    if (!labels.empty())
      ds["labels"] = labels;
    if (kmeans_seed)
      ds["kmeans_seed"] = *kmeans_seed;
    json syn = json::object();
    if (synthetic_n)
      syn["n"] = *synthetic_n;
    if (synthetic_seed)
      syn["seed"] = *synthetic_seed;
    if (leakage)
      syn["leakage"] = *leakage;
    if (noise)
      syn["noise"] = *noise;
    if (synthetic || !syn.empty())
      ds["synthetic"] = syn;
    if (!ds.empty())
      flags["dataset"] = ds;
    if (d)
      flags["d"] = *d;
    if (m_bar)
      flags["m_bar"] = *m_bar;
    if (ell)
      flags["ell"] = *ell;
    if (test_count)
      flags["test_count"] = *test_count;
    if (!criteria.empty()) {
      json list = json::array();
      std::stringstream ss(criteria);
      std::string item;
      while (std::getline(ss, item, ','))
        list.push_back(item);
      flags["criteria"] = list;
    }
    if (raw_c2)
      flags["c2_orthonormalize"] = false;
    if (record_residuals)
      flags["record_residuals"] = true;
    if (!cls_out.empty())
      flags["out"] = cls_out;
    cls_solver.apply(flags);
    cls_sketch.apply(flags);
    return run("classify", cls_config, flags);
  }
  if (*config) {
    char* text = nullptr;
    const ttlsqr_status s = ttlsqr_default_config(config_of.c_str(), &text);
    if (s != TTLSQR_OK) {
      std::fprintf(stderr, "error (%s): %s\n", ttlsqr_status_name(s), ttlsqr_last_error());
      return exit_code(s);
    }
    std::printf("%s\n", text);
    ttlsqr_string_free(text);
    return 0;
  }
  std::cerr << app.help();
  return kExitUsage;
}
