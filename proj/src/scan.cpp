#include "qfisc/scan.hpp"

#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <memory>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "qfisc/kicked_rotor.hpp"
#include "qfisc/kicked_top.hpp"

#ifndef QFISC_GIT_HASH
#define QFISC_GIT_HASH "unknown"
#endif

namespace qfisc {

namespace {

using Clock = std::chrono::steady_clock;
using ojson = nlohmann::ordered_json;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

constexpr const char* kCsvHeader = "phi,z,I_exact,I_sc,delta_I";

bool is_power_of_two(std::int64_t t) { return t > 0 && (t & (t - 1)) == 0; }

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using File = std::unique_ptr<std::FILE, FileCloser>;

void write_record(std::FILE* f, const ScanRecord& r) {
  std::fprintf(f, "%.17g,%.17g,%.17g,%.17g,%.17g\n", r.phi, r.z, r.i_exact, r.i_sc, r.delta);
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016" PRIx64, v);
  return buf;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp);
    out << text;
  }
  std::filesystem::rename(tmp, path);
}

/// Exact QFI of the columns of `states` at each of `times` (ascending).
std::vector<std::vector<double>> bundle_series(FloquetBundle<double> one_step, std::span<const std::int64_t> times,
                                               const Matrixcd& states) {
  std::vector<std::vector<double>> out(times.size());
  const auto fill = [&](std::size_t q, const FloquetBundle<double>& b) {
    const auto vals = exact_qfi_batch(b, states);
    out[q].resize(vals.size());
    for (std::size_t c = 0; c < vals.size(); ++c) out[q][c] = vals[c].value;
  };
  const bool doubling = std::all_of(times.begin(), times.end(), [](std::int64_t t) { return t == 0 || is_power_of_two(t); });
  if (doubling) {
    FloquetBundle<double> g = std::move(one_step);
    for (std::size_t q = 0; q < times.size(); ++q) {
      if (times[q] == 0) {
        out[q].assign(static_cast<std::size_t>(states.cols()), 0.0);
        continue;
      }
      while (g.t < times[q]) square_in_place(g);
      fill(q, g);
    }
    return out;
  }
  for (std::size_t q = 0; q < times.size(); ++q) {
    if (times[q] == 0) {
      out[q].assign(static_cast<std::size_t>(states.cols()), 0.0);
      continue;
    }
    fill(q, propagate_bundle(one_step, times[q]));
  }
  return out;
}

GaussianEnsemble<TorusPoint<double>, double> rotor_ensemble(const ScanSpec& spec, double x, double p) {
  const double hbar = 2 * kPi<double> / double(spec.M);
  if (spec.rotor_sampler == RotorSampler::Grid) return build_square_grid<double>({x, p}, hbar, spec.r, spec.reff);
  const auto mc = build_mc_ensemble<double, 2>(Eigen::Vector2d(x, p), hbar, spec.n_mc, spec.seed, 1e300,
                                               CutoffMode::Absolute);
  GaussianEnsemble<TorusPoint<double>, double> ens;
  ens.hbar = hbar;
  ens.center = {wrap_two_pi(x), wrap_two_pi(p)};
  ens.info = mc.info;
  ens.weights = mc.weights;
  ens.points.reserve(mc.points.size());
  for (const auto& q : mc.points) ens.points.push_back({wrap_two_pi(q(0)), wrap_two_pi(q(1))});
  return ens;
}

bool wants_exact(Method m) { return m != Method::Semiclassical; }
bool wants_sc(Method m) { return m != Method::Exact; }

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

/// Computes one z-row (kicked top) or p-row (rotor) of records.
class RowEngine {
 public:
  explicit RowEngine(const ScanSpec& spec) : spec_(spec) {
    if (spec.model == Model::KickedTop) {
      spin_ = HalfInteger::from_double(spec.J);
      if (wants_sc(spec.method)) tmpl_ = std::make_unique<CapGridTemplate<double>>(spin_, spec.r, spec.reff, spec.cap_weights);
    }
  }

  void build_bundle() {
    if (!wants_exact(spec_.method)) return;
    if (spec_.model == Model::KickedTop) {
      FloquetBundle<double> one;
      {
        const auto ops = build_spin_operators<double>(spin_);
        one = floquet_one_step(ops, spec_.beta, spec_.k);
      }
      bundle_ = spec_.t == 0 ? FloquetBundle<double>::identity(one.dim()) : propagate_bundle(std::move(one), spec_.t);
    } else {
      bundle_ = rotor_bundle(RotorParams<double>{spec_.M, spec_.k, spec_.t});
    }
  }

  std::vector<ScanRecord> row(double row_coord, const std::vector<double>& cols, double& exact_s, double& sc_s) const {
    std::vector<ScanRecord> out(cols.size());
    for (std::size_t i = 0; i < cols.size(); ++i) {
      out[i].phi = cols[i];
      out[i].z = row_coord;
      out[i].i_exact = kNaN;
      out[i].i_sc = kNaN;
    }
    if (wants_exact(spec_.method)) {
      const auto t0 = Clock::now();
      Matrixcd states(bundle_.dim(), static_cast<Eigen::Index>(cols.size()));
      for (std::size_t i = 0; i < cols.size(); ++i) {
        const auto c = static_cast<Eigen::Index>(i);
        if (spec_.model == Model::KickedTop) {
          states.col(c) = coherent_state<double>(spin_, std::acos(row_coord), cols[i]).amplitudes;
        } else {
          states.col(c) = rotor_coherent_state<double>(spec_.M, cols[i], row_coord);
        }
      }
      const auto vals = exact_qfi_batch(bundle_, states);
      for (std::size_t i = 0; i < cols.size(); ++i) out[i].i_exact = vals[i].value;
      exact_s += seconds_since(t0);
    }
    if (wants_sc(spec_.method)) {
      const auto t0 = Clock::now();
      for (std::size_t i = 0; i < cols.size(); ++i) {
        if (spec_.model == Model::KickedTop) {
          const auto ens = tmpl_->at(std::acos(row_coord), cols[i]);
          out[i].i_sc = semiclassical_qfi(ens, KickedTopFlow<double>(spec_.beta, spec_.k), spec_.t).i_sc;
        } else {
          const auto ens = rotor_ensemble(spec_, cols[i], row_coord);
          out[i].i_sc = semiclassical_qfi(ens, StandardMapFlow<double>{spec_.k}, spec_.t).i_sc;
        }
      }
      sc_s += seconds_since(t0);
    }
    for (auto& r : out) r.delta = wants_exact(spec_.method) && wants_sc(spec_.method) ? relative_difference(r.i_exact, r.i_sc) : kNaN;
    return out;
  }

 private:
  const ScanSpec& spec_;
  HalfInteger spin_;
  std::unique_ptr<CapGridTemplate<double>> tmpl_;
  FloquetBundle<double> bundle_;
};

std::vector<double> row_coords(const ScanSpec& spec) {
  return spec.model == Model::KickedTop ? z_grid(spec.n_z) : torus_grid(spec.n_z);
}
std::vector<double> col_coords(const ScanSpec& spec) {
  return spec.model == Model::KickedTop ? phi_grid(spec.n_phi) : torus_grid(spec.n_phi);
}

ojson aggregates_json(const Aggregates& a) {
  ojson j;
  j["n"] = a.n;
  j["mean_I_exact"] = a.mean_exact;
  j["var_I_exact"] = a.var_exact;
  j["mean_I_sc"] = a.mean_sc;
  j["var_I_sc"] = a.var_sc;
  j["delta_mean"] = a.delta_mean;
  j["delta_var"] = a.delta_var;
  return j;
}

std::string sidecar(const ScanSpec& spec, const ScanOutputs& outputs, const std::string& status,
                    const ScanResult* result, std::int64_t rows_done) {
  ojson j;
  j["schema_version"] = kSchemaVersion;
  j["status"] = status;
  j["spec"] = ojson::parse(spec_to_json(spec));
  if (!outputs.config_json.empty()) j["config"] = ojson::parse(outputs.config_json);
  j["config_hash"] = hex64(fnv1a(spec_to_json(spec)));
  j["git_hash"] = QFISC_GIT_HASH;
  j["csv_header"] = kCsvHeader;
  j["coordinates"] = spec.model == Model::KickedTop ? "phi,z" : "x,p";
  j["grid"] = "cell-centred";
  j["rows_complete"] = rows_done;
  if (result) {
    j["heisenberg_time"] = result->heisenberg_time;
    j["aggregates"] = aggregates_json(result->aggregates);
    j["warnings"] = result->warnings;
  }
  return j.dump(2) + "\n";
}

std::vector<std::string> scan_warnings(const ScanSpec& spec) {
  std::vector<std::string> w;
  if (spec.model == Model::KickedRotor) {
    w.emplace_back("kicked-rotor heisenberg_time = M is a dimension-counting estimate");
    w.emplace_back("kicked-rotor columns phi,z hold x,p");
  }
  if (spec.t > 0 && spec.model == Model::KickedTop && double(spec.t) > kicked_top_heisenberg_time(HalfInteger::from_double(spec.J))) {
    w.emplace_back("t exceeds the Heisenberg time");
  }
  return w;
}

}  // namespace

const char* to_string(Model m) {
  switch (m) {
    case Model::KickedTop: return "kicked-top";
    case Model::KickedRotor: return "kicked-rotor";
    case Model::HenonHeiles: return "henon-heiles";
  }
  return "?";
}

const char* to_string(Method m) {
  switch (m) {
    case Method::Exact: return "exact";
    case Method::Semiclassical: return "sc";
    case Method::Both: return "both";
  }
  return "?";
}

const char* to_string(RotorSampler s) { return s == RotorSampler::Grid ? "grid" : "mc"; }

Model parse_model(const std::string& s) {
  if (s == "kicked-top") return Model::KickedTop;
  if (s == "kicked-rotor") return Model::KickedRotor;
  if (s == "henon-heiles") return Model::HenonHeiles;
  throw UsageError("unknown model '" + s + "' (kicked-top, kicked-rotor, henon-heiles)");
}

Method parse_method(const std::string& s) {
  if (s == "exact") return Method::Exact;
  if (s == "sc") return Method::Semiclassical;
  if (s == "both") return Method::Both;
  throw UsageError("unknown method '" + s + "' (exact, sc, both)");
}

RotorSampler parse_rotor_sampler(const std::string& s) {
  if (s == "grid") return RotorSampler::Grid;
  if (s == "mc") return RotorSampler::MonteCarlo;
  throw UsageError("unknown rotor sampler '" + s + "' (grid, mc)");
}

CutoffMode parse_cutoff_mode(const std::string& s) {
  if (s == "scaled") return CutoffMode::Scaled;
  if (s == "absolute") return CutoffMode::Absolute;
  throw UsageError("unknown cutoff mode '" + s + "' (scaled, absolute)");
}

CapWeights parse_cap_weights(const std::string& s) {
  if (s == "gaussian") return CapWeights::Gaussian;
  if (s == "cell-area") return CapWeights::CellArea;
  throw UsageError("unknown cap weighting '" + s + "' (gaussian, cell-area)");
}

void ScanSpec::validate() const {
  if (model == Model::HenonHeiles) {
    throw UsageError("grid scans support kicked-top and kicked-rotor; use timeseries for henon-heiles");
  }
  if (n_phi < 1 || n_z < 1) throw UsageError("grid must be at least 1x1");
  if (t < 0) throw UsageError("t must be >= 0");
  if (r < 1) throw UsageError("r must be >= 1");
  if (!(reff > 0)) throw UsageError("reff must be positive");
  if (n_mc < 1) throw UsageError("n_mc must be >= 1");
  if (!std::isfinite(beta) || !std::isfinite(k)) throw UsageError("beta and k must be finite");
  if (model == Model::KickedTop) {
    HalfInteger::from_double(J);
  } else {
    RotorParams<double>{M, k, t}.validate();
  }
}

double relative_difference(double a, double b) {
  const double s = a + b;
  if (s == 0) return 0;
  return std::abs(a - b) / s;
}

Aggregates aggregate(std::span<const ScanRecord> records) {
  std::vector<double> ex, sc;
  ex.reserve(records.size());
  sc.reserve(records.size());
  for (const auto& r : records) {
    if (!std::isnan(r.i_exact)) ex.push_back(r.i_exact);
    if (!std::isnan(r.i_sc)) sc.push_back(r.i_sc);
  }
  Aggregates a;
  a.n = static_cast<std::int64_t>(records.size());
  a.mean_exact = a.var_exact = a.mean_sc = a.var_sc = a.delta_mean = a.delta_var = kNaN;
  if (!ex.empty()) {
    const auto mv = mean_variance<double>(ex);
    a.mean_exact = mv.mean;
    a.var_exact = mv.variance;
  }
  if (!sc.empty()) {
    const auto mv = mean_variance<double>(sc);
    a.mean_sc = mv.mean;
    a.var_sc = mv.variance;
  }
  if (!ex.empty() && !sc.empty()) {
    a.delta_mean = relative_difference(a.mean_exact, a.mean_sc);
    a.delta_var = relative_difference(a.var_exact, a.var_sc);
  }
  return a;
}

double kicked_top_heisenberg_time(HalfInteger spin) { return double(spin.twice() + 1); }
double rotor_heisenberg_time(std::int64_t M) { return double(M); }

std::vector<double> phi_grid(int n) {
  std::vector<double> v(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) v[static_cast<std::size_t>(i)] = 2 * kPi<double> * (i + 0.5) / n;
  return v;
}

std::vector<double> z_grid(int n) {
  std::vector<double> v(static_cast<std::size_t>(n));
  for (int j = 0; j < n; ++j) v[static_cast<std::size_t>(j)] = -1 + 2 * (j + 0.5) / n;
  return v;
}

std::vector<double> torus_grid(int n) { return phi_grid(n); }

std::uint64_t estimate_scan_memory(const ScanSpec& spec) {
  const double dim = spec.model == Model::KickedTop ? HalfInteger::from_double(spec.J).dim() : double(spec.M);
  double bytes = 64.0 * (1 << 20);
  if (wants_exact(spec.method)) {
    const double mats = is_power_of_two(spec.t) || spec.t <= 1 ? 3 : 6;
    // Construction of the one-step operator holds W, two real products and U.
    const double one_step = spec.model == Model::KickedTop ? 8 * dim * dim * 4 + 16 * dim * dim : 32 * dim * dim;
    bytes += std::max(16 * dim * dim * mats, one_step);
    bytes += 3 * 16 * dim * double(spec.n_phi);
  }
  if (wants_sc(spec.method)) {
    double pts = 0;
    if (spec.model == Model::KickedTop) {
      pts = double(cap_grid_point_count(static_cast<int>(std::floor(spec.reff * spec.r + 1e-9))));
    } else if (spec.rotor_sampler == RotorSampler::Grid) {
      const double reach = std::floor(spec.reff * spec.r + 1e-9);
      pts = kPi<double> * (reach + 1) * (reach + 1);
    } else {
      pts = double(spec.n_mc);
    }
    // Template, rotated copy and per-point actions.
    bytes += pts * 96;
  }
  return static_cast<std::uint64_t>(bytes);
}

std::uint64_t available_memory() {
  const long pages = sysconf(_SC_PHYS_PAGES);
  const long page = sysconf(_SC_PAGE_SIZE);
  if (pages <= 0 || page <= 0) return 0;
  return static_cast<std::uint64_t>(pages) * static_cast<std::uint64_t>(page);
}

std::uint64_t fnv1a(const std::string& bytes) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::string spec_to_json(const ScanSpec& s) {
  ojson j;
  j["model"] = to_string(s.model);
  j["method"] = to_string(s.method);
  if (s.model == Model::KickedTop) {
    j["J"] = s.J;
    j["beta"] = s.beta;
    j["cap_weights"] = to_string(s.cap_weights);
  } else {
    j["M"] = s.M;
    j["rotor_sampler"] = to_string(s.rotor_sampler);
  }
  j["k"] = s.k;
  j["t"] = s.t;
  j["n_phi"] = s.n_phi;
  j["n_z"] = s.n_z;
  j["r"] = s.r;
  j["reff"] = s.reff;
  if (s.model == Model::KickedRotor && s.rotor_sampler == RotorSampler::MonteCarlo) {
    j["n_mc"] = s.n_mc;
    j["seed"] = s.seed;
  }
  return j.dump();
}

std::vector<ScanRecord> read_scan_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != kCsvHeader) throw UsageError(path.string() + ": missing CSV header");
  std::vector<ScanRecord> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    ScanRecord r;
    double* fields[5] = {&r.phi, &r.z, &r.i_exact, &r.i_sc, &r.delta};
    const char* p = line.c_str();
    bool ok = true;
    for (int f = 0; f < 5 && ok; ++f) {
      char* end = nullptr;
      *fields[f] = std::strtod(p, &end);
      ok = end != p && (f == 4 ? *end == '\0' : *end == ',');
      p = end + (f < 4 ? 1 : 0);
    }
    // A torn final line from an interrupted run ends the readable prefix.
    if (!ok) break;
    out.push_back(r);
  }
  return out;
}

ScanResult run_scan(const ScanSpec& spec) { return run_scan(spec, ScanOutputs{}, ScanOptions{}); }

ScanResult run_scan(const ScanSpec& spec, const ScanOutputs& outputs, const ScanOptions& options) {
  spec.validate();
  const auto t_start = Clock::now();
  const std::uint64_t need = estimate_scan_memory(spec);
  const std::uint64_t limit = options.memory_limit ? options.memory_limit : available_memory();
  if (limit && need > limit) {
    std::ostringstream msg;
    msg << "scan needs an estimated " << need / (1 << 20) << " MiB but only " << limit / (1 << 20)
        << " MiB are available";
    throw ResourceError(msg.str());
  }

  const auto rows = row_coords(spec);
  const auto cols = col_coords(spec);
  const auto n_cols = cols.size();
  const bool to_disk = !outputs.csv.empty();

  ScanResult result;
  result.warnings = scan_warnings(spec);
  result.heisenberg_time = spec.model == Model::KickedTop ? kicked_top_heisenberg_time(HalfInteger::from_double(spec.J))
                                                          : rotor_heisenberg_time(spec.M);

  // Resume from a previous partial run of the same spec.
  std::size_t rows_done = 0;
  if (to_disk && options.resume && std::filesystem::exists(outputs.csv)) {
    if (!outputs.json.empty() && std::filesystem::exists(outputs.json)) {
      std::ifstream in(outputs.json);
      const auto meta = ojson::parse(in, nullptr, false);
      if (meta.is_discarded() || !meta.contains("config_hash") ||
          meta["config_hash"] != hex64(fnv1a(spec_to_json(spec)))) {
        throw UsageError("existing output " + outputs.csv.string() + " belongs to a different configuration");
      }
    }
    auto old = read_scan_csv(outputs.csv);
    rows_done = std::min(old.size() / n_cols, rows.size());
    old.resize(rows_done * n_cols);
    for (std::size_t i = 0; i < old.size(); ++i) {
      if (old[i].phi != cols[i % n_cols] || old[i].z != rows[i / n_cols]) {
        throw UsageError("existing output " + outputs.csv.string() + " does not match the scan grid");
      }
    }
    result.records = std::move(old);
  }
  result.resumed_rows = static_cast<std::int64_t>(rows_done);

  File csv;
  if (to_disk) {
    if (outputs.csv.has_parent_path()) std::filesystem::create_directories(outputs.csv.parent_path());
    csv.reset(std::fopen(outputs.csv.string().c_str(), "wb"));
    if (!csv) throw UsageError("cannot write " + outputs.csv.string());
    std::fprintf(csv.get(), "%s\n", kCsvHeader);
    for (const auto& r : result.records) write_record(csv.get(), r);
    std::fflush(csv.get());
    if (!outputs.json.empty()) write_text(outputs.json, sidecar(spec, outputs, "running", nullptr, std::int64_t(rows_done)));
  }

  if (rows_done < rows.size()) {
    RowEngine engine(spec);
    const auto t_bundle = Clock::now();
    engine.build_bundle();
    result.timings.bundle_s = seconds_since(t_bundle);
    result.records.reserve(rows.size() * n_cols);
    for (std::size_t j = rows_done; j < rows.size(); ++j) {
      const auto recs = engine.row(rows[j], cols, result.timings.exact_s, result.timings.semiclassical_s);
      for (const auto& r : recs) {
        result.records.push_back(r);
        if (csv) write_record(csv.get(), r);
      }
      if (csv) std::fflush(csv.get());
      if (options.progress) options.progress(static_cast<int>(j + 1), static_cast<int>(rows.size()));
    }
  }
  csv.reset();

  result.aggregates = aggregate(result.records);
  result.timings.total_s = seconds_since(t_start);
  if (to_disk && !outputs.json.empty()) {
    write_text(outputs.json, sidecar(spec, outputs, "complete", &result, std::int64_t(rows.size())));
  }
  if (!outputs.timings.empty()) {
    ojson tj;
    tj["bundle_s"] = result.timings.bundle_s;
    tj["exact_s"] = result.timings.exact_s;
    tj["semiclassical_s"] = result.timings.semiclassical_s;
    tj["total_s"] = result.timings.total_s;
    tj["resumed_rows"] = result.resumed_rows;
    write_text(outputs.timings, tj.dump(2) + "\n");
  }
  return result;
}

std::vector<std::vector<double>> kicked_top_exact_series(HalfInteger spin, double beta, double k,
                                                         std::span<const std::int64_t> times,
                                                         const Matrixcd& states) {
  FloquetBundle<double> one;
  {
    const auto ops = build_spin_operators<double>(spin);
    one = floquet_one_step(ops, beta, k);
  }
  return bundle_series(std::move(one), times, states);
}

std::vector<SeriesRecord> run_timeseries(const ScanSpec& spec, std::span<const SeriesPoint> points,
                                         std::span<const std::int64_t> times) {
  spec.validate();
  if (points.empty() || times.empty()) throw UsageError("timeseries needs at least one point and one time");
  for (std::size_t q = 0; q < times.size(); ++q) {
    if (times[q] < 0 || (q > 0 && times[q] <= times[q - 1])) {
      throw UsageError("timeseries times must be nonnegative and strictly ascending");
    }
  }
  const bool top = spec.model == Model::KickedTop;
  const HalfInteger spin = top ? HalfInteger::from_double(spec.J) : HalfInteger{};
  std::vector<SeriesRecord> out;
  for (std::size_t p = 0; p < points.size(); ++p) {
    for (auto t : times) out.push_back({static_cast<int>(p), t, kNaN, kNaN, kNaN});
  }
  const auto at = [&](std::size_t p, std::size_t q) -> SeriesRecord& { return out[p * times.size() + q]; };

  if (wants_exact(spec.method)) {
    const Eigen::Index dim = top ? spin.dim() : spec.M;
    Matrixcd states(dim, static_cast<Eigen::Index>(points.size()));
    for (std::size_t p = 0; p < points.size(); ++p) {
      const auto c = static_cast<Eigen::Index>(p);
      if (top) {
        if (std::abs(points[p].z) > 1) throw UsageError("timeseries: z must lie in [-1, 1]");
        states.col(c) = coherent_state<double>(spin, std::acos(points[p].z), points[p].phi).amplitudes;
      } else {
        states.col(c) = rotor_coherent_state<double>(spec.M, points[p].phi, points[p].z);
      }
    }
    const auto series = top ? kicked_top_exact_series(spin, spec.beta, spec.k, times, states)
                            : bundle_series(rotor_floquet(RotorParams<double>{spec.M, spec.k, 1}), times, states);
    for (std::size_t q = 0; q < times.size(); ++q) {
      for (std::size_t p = 0; p < points.size(); ++p) at(p, q).i_exact = series[q][p];
    }
  }
  if (wants_sc(spec.method)) {
    std::unique_ptr<CapGridTemplate<double>> tmpl;
    if (top) tmpl = std::make_unique<CapGridTemplate<double>>(spin, spec.r, spec.reff, spec.cap_weights);
    for (std::size_t p = 0; p < points.size(); ++p) {
      std::vector<SemiclassicalResult<double>> res;
      if (top) {
        const auto ens = tmpl->at(std::acos(points[p].z), points[p].phi);
        res = semiclassical_qfi_series(ens, KickedTopFlow<double>(spec.beta, spec.k), times);
      } else {
        const auto ens = rotor_ensemble(spec, points[p].phi, points[p].z);
        res = semiclassical_qfi_series(ens, StandardMapFlow<double>{spec.k}, times);
      }
      for (std::size_t q = 0; q < times.size(); ++q) at(p, q).i_sc = res[q].i_sc;
    }
  }
  if (wants_exact(spec.method) && wants_sc(spec.method)) {
    for (auto& r : out) r.delta = relative_difference(r.i_exact, r.i_sc);
  }
  return out;
}

std::vector<ConvergencePoint> run_convergence(const ScanSpec& spec, std::span<const int> rs) {
  spec.validate();
  if (spec.model != Model::KickedTop) throw UsageError("converge-r supports the kicked top");
  const HalfInteger spin = HalfInteger::from_double(spec.J);
  const auto phis = phi_grid(spec.n_phi);
  const auto zs = z_grid(spec.n_z);
  const KickedTopFlow<double> flow(spec.beta, spec.k);
  std::vector<ConvergencePoint> out;
  for (int r : rs) {
    const CapGridTemplate<double> tmpl(spin, r, spec.reff, spec.cap_weights);
    std::vector<double> vals;
    vals.reserve(phis.size() * zs.size());
    for (double z : zs) {
      for (double phi : phis) vals.push_back(semiclassical_qfi(tmpl.at(std::acos(z), phi), flow, spec.t).i_sc);
    }
    const auto mv = mean_variance<double>(vals);
    out.push_back({r, static_cast<std::int64_t>(tmpl.size()), mv.mean, mv.variance});
  }
  return out;
}

}  // namespace qfisc
