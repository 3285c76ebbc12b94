#include "qfisc/cli.hpp"

#include <omp.h>

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>
#include <json.hpp>

#include "qfisc/henon_heiles.hpp"
#include "qfisc/kicked_top.hpp"

#ifndef QFISC_GIT_HASH
#define QFISC_GIT_HASH "unknown"
#endif

namespace qfisc {

namespace {

using ojson = nlohmann::ordered_json;
namespace fs = std::filesystem;

struct Flags {
  std::optional<std::string> config;
  std::optional<std::string> model, method, grid, cap_weights, rotor_sampler, cutoff_mode, out;
  std::optional<double> J, hbar, beta, k, lambda, reff, energy, dt, t_max, cutoff, max_escape_fraction;
  std::optional<std::int64_t> M, n_mc, memory_limit_mb;
  std::optional<std::uint64_t> seed;
  std::optional<int> r, threads, n_max, substeps, r_min, r_max;
  std::vector<std::int64_t> t;
  std::vector<std::string> points;
  bool dry_run = false;
  bool json_errors = false;
};

void add_flags(CLI::App& app, Flags& f) {
  app.add_option("--config", f.config, "JSON config file; flags override its values");
  app.add_option("--model", f.model, "kicked-top | kicked-rotor | henon-heiles");
  app.add_option("--method", f.method, "exact | sc | both");
  app.add_option("--J", f.J, "spin quantum number (kicked top)");
  app.add_option("--M", f.M, "Hilbert-space dimension (kicked rotor)");
  app.add_option("--hbar", f.hbar, "Planck constant (Henon-Heiles)");
  app.add_option("--beta", f.beta, "rotation angle (kicked top)");
  app.add_option("--k", f.k, "kick strength");
  app.add_option("--lambda", f.lambda, "coupling (Henon-Heiles)");
  app.add_option("--t", f.t, "time step count(s); a comma separated list for timeseries")->delimiter(',');
  app.add_option("--grid", f.grid, "phase-space grid NPHIxNZ");
  app.add_option("--r", f.r, "cap-grid resolution");
  app.add_option("--reff", f.reff, "ensemble cutoff radius in units of sigma");
  app.add_option("--cap-weights", f.cap_weights, "gaussian | cell-area");
  app.add_option("--rotor-sampler", f.rotor_sampler, "grid | mc");
  app.add_option("--n-mc", f.n_mc, "Monte Carlo sample count");
  app.add_option("--seed", f.seed, "Monte Carlo seed");
  app.add_option("--threads", f.threads, "worker threads (0: OpenMP default)");
  app.add_option("--out", f.out, "output directory");
  app.add_option("--point", f.points, "initial point A,B (repeatable)");
  app.add_option("--energy", f.energy, "energy shell (Henon-Heiles)");
  app.add_option("--nmax", f.n_max, "oscillator truncation n_x + n_y <= nmax");
  app.add_option("--dt", f.dt, "integrator step (Henon-Heiles)");
  app.add_option("--substeps", f.substeps, "integrator steps per output step (even)");
  app.add_option("--t-max", f.t_max, "final time (Henon-Heiles)");
  app.add_option("--cutoff", f.cutoff, "Monte Carlo cutoff");
  app.add_option("--cutoff-mode", f.cutoff_mode, "scaled | absolute");
  app.add_option("--max-escape-fraction", f.max_escape_fraction, "tolerated fraction of escaping trajectories");
  app.add_option("--r-min", f.r_min, "smallest r (converge-r)");
  app.add_option("--r-max", f.r_max, "largest r (converge-r)");
  app.add_option("--memory-limit-mb", f.memory_limit_mb, "memory budget (0: physical memory)");
  app.add_flag("--dry-run", f.dry_run, "print the resource estimate and exit");
  app.add_flag("--json-errors", f.json_errors, "report errors as JSON on stderr");
}

template <typename T>
void override_key(ojson& j, const char* key, const std::optional<T>& v) {
  if (v) j[key] = *v;
}

/// Flags given on the command line, as a config object.
std::string flags_as_json(const Flags& f) {
  ojson j = ojson::object();
  override_key(j, "model", f.model);
  override_key(j, "method", f.method);
  override_key(j, "grid", f.grid);
  override_key(j, "cap_weights", f.cap_weights);
  override_key(j, "rotor_sampler", f.rotor_sampler);
  override_key(j, "cutoff_mode", f.cutoff_mode);
  override_key(j, "out", f.out);
  override_key(j, "J", f.J);
  override_key(j, "hbar", f.hbar);
  override_key(j, "beta", f.beta);
  override_key(j, "k", f.k);
  override_key(j, "lambda", f.lambda);
  override_key(j, "reff", f.reff);
  override_key(j, "energy", f.energy);
  override_key(j, "dt", f.dt);
  override_key(j, "t_max", f.t_max);
  override_key(j, "cutoff", f.cutoff);
  override_key(j, "max_escape_fraction", f.max_escape_fraction);
  override_key(j, "M", f.M);
  override_key(j, "n_mc", f.n_mc);
  override_key(j, "memory_limit_mb", f.memory_limit_mb);
  override_key(j, "seed", f.seed);
  override_key(j, "r", f.r);
  override_key(j, "threads", f.threads);
  override_key(j, "nmax", f.n_max);
  override_key(j, "substeps", f.substeps);
  override_key(j, "r_min", f.r_min);
  override_key(j, "r_max", f.r_max);
  if (!f.t.empty()) j["t"] = f.t;
  if (!f.points.empty()) j["point"] = f.points;
  if (f.dry_run) j["dry_run"] = true;
  if (f.json_errors) j["json_errors"] = true;
  return j.dump();
}

ojson base_metadata(const RunConfig& cfg) {
  ojson j;
  j["schema_version"] = kSchemaVersion;
  j["command"] = cfg.command;
  j["config"] = ojson::parse(effective_config_json(cfg));
  j["git_hash"] = QFISC_GIT_HASH;
  return j;
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// --- kicked models ---------------------------------------------------------

int run_grid(const RunConfig& cfg, Method method, const std::string& stem) {
  ScanSpec spec = cfg.scan;
  spec.method = method;
  const fs::path dir = cfg.out;
  ScanOutputs outputs{dir / (stem + ".csv"), dir / (stem + ".json"), dir / (stem + ".timings.json"),
                      effective_config_json(cfg)};
  ScanOptions options;
  options.memory_limit = cfg.memory_limit_mb << 20;
  options.progress = [](int row, int rows) { std::fprintf(stderr, "\rrow %d/%d", row, rows); };
  const auto result = run_scan(spec, outputs, options);
  std::fprintf(stderr, "\n");
  const auto& a = result.aggregates;
  std::printf("mean I %.10g  mean I_sc %.10g  var I %.10g  var I_sc %.10g\n", a.mean_exact, a.mean_sc, a.var_exact,
              a.var_sc);
  std::printf("Delta_mean %.6g  Delta_var %.6g  (t_H = %g)\n", a.delta_mean, a.delta_var, result.heisenberg_time);
  std::printf("wrote %s\n", outputs.csv.string().c_str());
  return kExitOk;
}

int run_series(const RunConfig& cfg, Method method, const std::string& stem, std::vector<std::int64_t> times) {
  ScanSpec spec = cfg.scan;
  spec.method = method;
  std::sort(times.begin(), times.end());
  times.erase(std::unique(times.begin(), times.end()), times.end());
  const auto recs = run_timeseries(spec, cfg.points, times);
  const fs::path dir = cfg.out;
  fs::create_directories(dir);
  const bool top = spec.model == Model::KickedTop;
  std::string csv = top ? "point,phi,z,t,I_exact,I_sc,delta_I\n" : "point,x,p,t,I_exact,I_sc,delta_I\n";
  for (const auto& r : recs) {
    const auto& p = cfg.points[static_cast<std::size_t>(r.point)];
    csv += std::to_string(r.point) + "," + fmt(p.phi) + "," + fmt(p.z) + "," + std::to_string(r.t) + "," +
           fmt(r.i_exact) + "," + fmt(r.i_sc) + "," + fmt(r.delta) + "\n";
  }
  write_file(dir / (stem + ".csv"), csv);
  ojson meta = base_metadata(cfg);
  meta["csv_header"] = top ? "point,phi,z,t,I_exact,I_sc,delta_I" : "point,x,p,t,I_exact,I_sc,delta_I";
  meta["heisenberg_time"] =
      top ? kicked_top_heisenberg_time(HalfInteger::from_double(spec.J)) : rotor_heisenberg_time(spec.M);
  write_file(dir / (stem + ".json"), meta.dump(2) + "\n");
  for (const auto& r : recs) {
    std::printf("point %d t %lld  I %.10g  I_sc %.10g  Delta %.4g\n", r.point, static_cast<long long>(r.t), r.i_exact,
                r.i_sc, r.delta);
  }
  return kExitOk;
}

int run_converge(const RunConfig& cfg) {
  std::vector<int> rs;
  for (int r = cfg.r_min; r <= cfg.r_max; ++r) rs.push_back(r);
  const auto pts = run_convergence(cfg.scan, rs);
  const fs::path dir = cfg.out;
  fs::create_directories(dir);
  std::string csv = "r,n_points,mean_I_sc,var_I_sc\n";
  for (const auto& p : pts) {
    csv += std::to_string(p.r) + "," + std::to_string(p.n_points) + "," + fmt(p.mean_sc) + "," + fmt(p.var_sc) + "\n";
    std::printf("r %d  N %lld  mean I_sc %.10g\n", p.r, static_cast<long long>(p.n_points), p.mean_sc);
  }
  write_file(dir / "converge_r.csv", csv);
  ojson meta = base_metadata(cfg);
  meta["csv_header"] = "r,n_points,mean_I_sc,var_I_sc";
  write_file(dir / "converge_r.json", meta.dump(2) + "\n");
  return kExitOk;
}

// --- Henon-Heiles ------------------------------------------------------------

constexpr double kTruncationTolerance = 1e-6;

std::vector<SeriesPoint> hh_default_points() { return {{0.25, 0.0}, {0.0, 0.25}}; }

int run_hh_series(const RunConfig& cfg) {
  const auto points = cfg.points.empty() ? hh_default_points() : cfg.points;
  std::vector<HHPoint<double>> centers;
  for (const auto& p : points) {
    try {
      centers.push_back(hh_point_from_energy(p.phi, 0.0, p.z, cfg.energy, cfg.lambda));
    } catch (const DomainError& e) {
      throw ConfigError(e.what());
    }
  }
  const double out_dt = cfg.dt * cfg.substeps;
  const auto steps = static_cast<std::int64_t>(std::floor(cfg.t_max / out_dt + 1e-9));
  std::vector<std::int64_t> idx;
  std::vector<double> times;
  for (std::int64_t q = 0; q <= steps; ++q) {
    idx.push_back(q);
    times.push_back(out_dt * double(q));
  }
  const Method method = cfg.scan.method;
  ojson meta = base_metadata(cfg);
  ojson warnings = ojson::array();

  std::vector<std::vector<double>> exact(points.size()), sc(points.size()), se(points.size());
  if (method != Method::Semiclassical) {
    const auto model = hh_build_quantum(cfg.hbar, cfg.n_max, cfg.lambda);
    meta["basis_size"] = model.basis_size();
    meta["heisenberg_time"] = hh_heisenberg_time(model, cfg.energy);
    // Levels below the escape energy 1 / (6 lambda^2).
    const double shift = hh_truncation_shift(model, 1.0 / (6 * cfg.lambda * cfg.lambda));
    meta["truncation_shift"] = shift;
    if (shift > kTruncationTolerance) {
      warnings.push_back("bound levels move by " + fmt(shift) + " when the basis grows 1.5x; increase nmax");
    }
    for (std::size_t p = 0; p < points.size(); ++p) exact[p] = hh_exact_qfi_series<double>(model, centers[p], times);
  }
  if (method != Method::Exact) {
    HHSemiclassicalOptions opt;
    opt.n = cfg.scan.n_mc;
    opt.seed = cfg.scan.seed;
    opt.dt = cfg.dt;
    opt.substeps = cfg.substeps;
    opt.cutoff = cfg.cutoff;
    opt.cutoff_mode = cfg.cutoff_mode;
    opt.max_failed_fraction = cfg.max_escape_fraction;
    for (std::size_t p = 0; p < points.size(); ++p) {
      const auto res = hh_semiclassical_qfi_series<double>(centers[p], cfg.hbar, cfg.lambda, idx, opt);
      for (const auto& r : res) {
        sc[p].push_back(r.i_sc);
        se[p].push_back(r.std_error);
      }
      if (res.front().n_failed > 0) {
        warnings.push_back("point " + std::to_string(p) + ": " + std::to_string(res.front().n_failed) +
                           " escaped trajectories excluded");
      }
    }
  }
  meta["cutoff_mode"] = to_string(cfg.cutoff_mode);
  meta["warnings"] = warnings;
  meta["csv_header"] = "point,x,px,t,I_exact,I_sc,delta_I,I_sc_se";

  const fs::path dir = cfg.out;
  fs::create_directories(dir);
  std::string csv = "point,x,px,t,I_exact,I_sc,delta_I,I_sc_se\n";
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (std::size_t p = 0; p < points.size(); ++p) {
    for (std::size_t q = 0; q < times.size(); ++q) {
      const double e = exact[p].empty() ? nan : exact[p][q];
      const double s = sc[p].empty() ? nan : sc[p][q];
      const double d = exact[p].empty() || sc[p].empty() ? nan : relative_difference(e, s);
      const double err = se[p].empty() ? nan : se[p][q];
      csv += std::to_string(p) + "," + fmt(points[p].phi) + "," + fmt(points[p].z) + "," + fmt(times[q]) + "," + fmt(e) +
             "," + fmt(s) + "," + fmt(d) + "," + fmt(err) + "\n";
    }
    std::printf("point %zu  t %.4g  I %.10g  I_sc %.10g\n", p, times.back(), exact[p].empty() ? nan : exact[p].back(),
                sc[p].empty() ? nan : sc[p].back());
  }
  write_file(dir / "timeseries.csv", csv);
  write_file(dir / "timeseries.json", meta.dump(2) + "\n");
  return kExitOk;
}

// --- bench ---------------------------------------------------------------

int run_bench(const RunConfig& cfg) {
  if (cfg.scan.model != Model::KickedTop) throw ConfigError("bench supports the kicked top");
  using Clock = std::chrono::steady_clock;
  const HalfInteger spin = HalfInteger::from_double(cfg.scan.J);
  const auto ops = build_spin_operators<double>(spin);
  const auto one = floquet_one_step(ops, cfg.scan.beta, cfg.scan.k);
  const CapGridTemplate<double> tmpl(spin, cfg.scan.r, cfg.scan.reff, cfg.scan.cap_weights);
  const auto ens = tmpl.at(1.0, 1.0);
  std::string csv = "kind,J,t,n_points,seconds\n";
  for (std::int64_t t = 1; t <= std::max<std::int64_t>(cfg.scan.t, 1); t *= 2) {
    auto t0 = Clock::now();
    const auto b = propagate_bundle(one, t);
    const double exact_s = std::chrono::duration<double>(Clock::now() - t0).count();
    t0 = Clock::now();
    const auto r = semiclassical_qfi(ens, KickedTopFlow<double>(cfg.scan.beta, cfg.scan.k), t);
    const double sc_s = std::chrono::duration<double>(Clock::now() - t0).count();
    csv += "propagate_bundle," + fmt(cfg.scan.J) + "," + std::to_string(t) + "," + std::to_string(b.dim()) + "," +
           fmt(exact_s) + "\n";
    csv += "semiclassical_qfi," + fmt(cfg.scan.J) + "," + std::to_string(t) + "," + std::to_string(r.n_points) + "," +
           fmt(sc_s) + "\n";
    std::printf("t %lld  propagate %.4fs  semiclassical %.4fs\n", static_cast<long long>(t), exact_s, sc_s);
  }
  const fs::path dir = cfg.out;
  fs::create_directories(dir);
  write_file(dir / "bench.csv", csv);
  write_file(dir / "bench.json", base_metadata(cfg).dump(2) + "\n");
  return kExitOk;
}

// --- dry run -------------------------------------------------------------

int dry_run(const RunConfig& cfg) {
  ojson j;
  j["command"] = cfg.command;
  j["config"] = ojson::parse(effective_config_json(cfg));
  if (cfg.scan.model == Model::HenonHeiles) {
    j["basis_size"] = hh_basis_size(cfg.n_max);
    const double nb = double(hh_basis_size(cfg.n_max));
    j["estimated_memory_bytes"] = static_cast<std::uint64_t>(nb * nb * 8 * 6 + double(cfg.scan.n_mc) * 64);
  } else {
    ScanSpec spec = cfg.scan;
    if (cfg.command == "exact") spec.method = Method::Exact;
    if (cfg.command == "semiclassical" || cfg.command == "converge-r") spec.method = Method::Semiclassical;
    j["grid_points"] = std::int64_t(spec.n_phi) * spec.n_z;
    if (spec.model == Model::KickedTop) {
      j["hilbert_dimension"] = HalfInteger::from_double(spec.J).dim();
      j["ensemble_points"] = cap_grid_point_count(static_cast<int>(std::floor(spec.reff * spec.r + 1e-9)));
    } else {
      j["hilbert_dimension"] = spec.M;
    }
    j["estimated_memory_bytes"] = estimate_scan_memory(spec);
    j["available_memory_bytes"] = available_memory();
  }
  std::printf("%s\n", j.dump(2).c_str());
  return kExitOk;
}

int dispatch(RunConfig& cfg) {
  cfg.validate();
  if (cfg.threads > 0) omp_set_num_threads(cfg.threads);
  if (cfg.dry_run) return dry_run(cfg);
  const std::string& c = cfg.command;
  if (cfg.scan.model == Model::HenonHeiles) {
    if (c == "timeseries") return run_hh_series(cfg);
    throw ConfigError("henon-heiles supports the timeseries subcommand");
  }
  if (c == "scan") return run_grid(cfg, cfg.scan.method, "scan");
  if (c == "exact" || c == "semiclassical") {
    const Method m = c == "exact" ? Method::Exact : Method::Semiclassical;
    if (cfg.points.empty()) return run_grid(cfg, m, c);
    return run_series(cfg, m, c + "_points", {cfg.scan.t});
  }
  if (c == "timeseries") {
    if (cfg.points.empty()) throw ConfigError("timeseries needs at least one --point");
    return run_series(cfg, cfg.scan.method, "timeseries", cfg.times.empty() ? std::vector<std::int64_t>{cfg.scan.t} : cfg.times);
  }
  if (c == "converge-r") return run_converge(cfg);
  if (c == "bench") return run_bench(cfg);
  throw ConfigError("unknown command " + c);
}

void report(bool as_json, const char* kind, const std::string& message, int code) {
  if (as_json) {
    ojson j;
    j["error"] = kind;
    j["message"] = message;
    j["exit_code"] = code;
    std::fprintf(stderr, "%s\n", j.dump().c_str());
  } else {
    std::fprintf(stderr, "qfisc: %s: %s\n", kind, message.c_str());
  }
}

}  // namespace

int cli_main(int argc, char** argv) {
  bool json_errors = false;
  for (int i = 1; i < argc; ++i) json_errors = json_errors || std::string(argv[i]) == "--json-errors";
  try {
    CLI::App app{"Exact and semiclassical quantum Fisher information"};
    app.require_subcommand(1);
    Flags flags;
    add_flags(app, flags);
    const char* commands[][2] = {
        {"exact", "exact QFI on a grid or at --point"},
        {"semiclassical", "semiclassical QFI on a grid or at --point"},
        {"scan", "both methods on a grid with Delta statistics"},
        {"converge-r", "phase-space mean of I_sc versus r"},
        {"timeseries", "I and I_sc versus t at fixed initial points"},
        {"bench", "wall time versus t"},
    };
    for (const auto& c : commands) app.add_subcommand(c[0], c[1])->fallthrough();
    try {
      app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
      return app.exit(e);
    } catch (const CLI::ParseError& e) {
      report(json_errors, "usage", e.what(), kExitConfig);
      return kExitConfig;
    }
    RunConfig cfg;
    cfg.command = app.get_subcommands().front()->get_name();
    if (flags.config) load_config_file(*flags.config, cfg);
    apply_config_json(flags_as_json(flags), cfg);
    json_errors = json_errors || cfg.json_errors;
    return dispatch(cfg);
  } catch (const ConfigError& e) {
    report(json_errors, "config", e.what(), kExitConfig);
    return kExitConfig;
  } catch (const UsageError& e) {
    report(json_errors, "config", e.what(), kExitConfig);
    return kExitConfig;
  } catch (const DomainError& e) {
    report(json_errors, "config", e.what(), kExitConfig);
    return kExitConfig;
  } catch (const ResourceError& e) {
    report(json_errors, "resources", e.what(), kExitConfig);
    return kExitConfig;
  } catch (const NumericalError& e) {
    report(json_errors, "numerical", e.what(), kExitNumerical);
    return kExitNumerical;
  } catch (const std::exception& e) {
    report(json_errors, "internal", e.what(), 1);
    return 1;
  }
}

}  // namespace qfisc
