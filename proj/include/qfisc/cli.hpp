#ifndef QFISC_CLI_HPP
#define QFISC_CLI_HPP

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "qfisc/scan.hpp"

namespace qfisc {

/// Invalid or inconsistent run configuration (exit code 2).
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitNumerical = 3;

struct RunConfig {
  std::string command;
  ScanSpec scan;
  std::vector<std::int64_t> times;  // timeseries: t values (kicked models)
  std::vector<SeriesPoint> points;  // kicked top: (phi, z); rotor: (x, p); HH: (x, p_x)
  // Henon-Heiles
  double hbar = 1.0 / 50;
  double lambda = 1.0;
  double energy = 1.0 / 12;
  int n_max = 49;
  double dt = 1e-3;
  int substeps = 100;
  double t_max = 20.0;
  double cutoff = 9.0;
  CutoffMode cutoff_mode = CutoffMode::Scaled;
  double max_escape_fraction = 1e-3;
  // converge-r
  int r_min = 1;
  int r_max = 50;
  // run control
  int threads = 0;
  std::filesystem::path out = "out";
  bool dry_run = false;
  bool json_errors = false;
  std::uint64_t memory_limit_mb = 0;

  void validate() const;
};

/// Applies a JSON object of config keys (the long flag names with dashes
/// replaced by underscores). Nested objects are merged into the same key
/// space. Unknown keys and ill-typed values raise ConfigError.
void apply_config_json(const std::string& text, RunConfig& cfg);
void load_config_file(const std::filesystem::path& path, RunConfig& cfg);

/// Full effective configuration as a JSON object.
std::string effective_config_json(const RunConfig& cfg);

/// "220x150" -> (220, 150).
std::pair<int, int> parse_grid(const std::string& s);
/// "1.5,0.3" -> point.
SeriesPoint parse_point(const std::string& s);

int cli_main(int argc, char** argv);

}  // namespace qfisc

#endif  // QFISC_CLI_HPP
