#ifndef QFISC_SCAN_HPP
#define QFISC_SCAN_HPP

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "qfisc/semiclassical.hpp"
#include "qfisc/spin_algebra.hpp"

namespace qfisc {

inline constexpr int kSchemaVersion = 1;

enum class Model { KickedTop, KickedRotor, HenonHeiles };
enum class Method { Exact, Semiclassical, Both };
enum class RotorSampler { Grid, MonteCarlo };

const char* to_string(Model m);
const char* to_string(Method m);
const char* to_string(RotorSampler s);
Model parse_model(const std::string& s);
Method parse_method(const std::string& s);
RotorSampler parse_rotor_sampler(const std::string& s);
CutoffMode parse_cutoff_mode(const std::string& s);
CapWeights parse_cap_weights(const std::string& s);

/// Raised when a run would not fit the available memory.
class ResourceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ScanSpec {
  Model model = Model::KickedTop;
  Method method = Method::Both;
  double J = 4096;
  std::int64_t M = 100;
  double beta = 1.5;
  double k = 3.0;
  std::int64_t t = 8;
  int n_phi = 220;
  int n_z = 150;
  int r = 50;
  double reff = 5.0;
  CapWeights cap_weights = CapWeights::Gaussian;
  RotorSampler rotor_sampler = RotorSampler::Grid;
  std::int64_t n_mc = 50000;
  std::uint64_t seed = 1;

  void validate() const;
};

/// One grid point. For the rotor, phi holds x and z holds p.
struct ScanRecord {
  double phi = 0;
  double z = 0;
  double i_exact = 0;
  double i_sc = 0;
  double delta = 0;
};

struct Aggregates {
  std::int64_t n = 0;
  double mean_exact = 0;
  double var_exact = 0;
  double mean_sc = 0;
  double var_sc = 0;
  double delta_mean = 0;
  double delta_var = 0;
};

struct ScanTimings {
  double bundle_s = 0;
  double exact_s = 0;
  double semiclassical_s = 0;
  double total_s = 0;
};

struct ScanResult {
  std::vector<ScanRecord> records;
  Aggregates aggregates;
  double heisenberg_time = 0;
  std::vector<std::string> warnings;
  ScanTimings timings;
  std::int64_t resumed_rows = 0;
};

/// |a - b| / (a + b), 0 when both vanish.
double relative_difference(double a, double b);

/// Unweighted means, population variances and their relative differences.
/// Entries that are NaN on one side are skipped for that side.
Aggregates aggregate(std::span<const ScanRecord> records);

double kicked_top_heisenberg_time(HalfInteger spin);
double rotor_heisenberg_time(std::int64_t M);

/// Cell-centred grid coordinates.
std::vector<double> phi_grid(int n);
std::vector<double> z_grid(int n);
std::vector<double> torus_grid(int n);

/// Estimated peak resident bytes for a scan.
std::uint64_t estimate_scan_memory(const ScanSpec& spec);
/// Physical memory reported by the OS, 0 if unknown.
std::uint64_t available_memory();

struct ScanOutputs {
  std::filesystem::path csv;
  std::filesystem::path json;
  std::filesystem::path timings;  // empty: not written
  std::string config_json;        // echoed as "config" in the sidecar when set
};

struct ScanOptions {
  std::uint64_t memory_limit = 0;  // 0: available_memory()
  bool resume = true;
  std::function<void(int row, int rows)> progress;
};

/// Runs the grid scan and streams `phi,z,I_exact,I_sc,delta_I` rows to
/// outputs.csv. A partially written CSV from an interrupted run with the same
/// spec is resumed at the first incomplete z-row. The JSON sidecar is
/// rewritten on completion.
ScanResult run_scan(const ScanSpec& spec, const ScanOutputs& outputs, const ScanOptions& options = {});

/// In-memory variant without files.
ScanResult run_scan(const ScanSpec& spec);

std::vector<ScanRecord> read_scan_csv(const std::filesystem::path& path);

std::string spec_to_json(const ScanSpec& spec);
std::uint64_t fnv1a(const std::string& bytes);

// Time series at fixed initial points (kicked top or rotor).

struct SeriesPoint {
  double phi = 0;
  double z = 0;
};

struct SeriesRecord {
  int point = 0;
  std::int64_t t = 0;
  double i_exact = 0;
  double i_sc = 0;
  double delta = 0;
};

/// I(t) and I_sc(t) for every point and time. The exact side reuses the
/// doubling chain when all times are powers of two.
std::vector<SeriesRecord> run_timeseries(const ScanSpec& spec, std::span<const SeriesPoint> points,
                                         std::span<const std::int64_t> times);

/// Kicked-top exact QFI at several times for a block of states.
std::vector<std::vector<double>> kicked_top_exact_series(HalfInteger spin, double beta, double k,
                                                         std::span<const std::int64_t> times,
                                                         const Matrixcd& states);

struct ConvergencePoint {
  int r = 0;
  std::int64_t n_points = 0;
  double mean_sc = 0;
  double var_sc = 0;
};

/// Phase-space mean of I_sc over the spec's grid for each r.
std::vector<ConvergencePoint> run_convergence(const ScanSpec& spec, std::span<const int> rs);

}  // namespace qfisc

#endif  // QFISC_SCAN_HPP
