#include <doctest.h>
#include <unistd.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "qfisc/cli.hpp"

using namespace qfisc;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("qfisc_test_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

int run(std::vector<std::string> args) {
  args.insert(args.begin(), "qfisc");
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  argv.push_back(nullptr);
  return cli_main(static_cast<int>(args.size()), argv.data());
}

/// Runs the CLI with stdout and stderr redirected to files.
struct Captured {
  int code;
  std::string out;
  std::string err;
};

Captured run_captured(const std::vector<std::string>& args) {
  const auto dir = fs::temp_directory_path();
  const auto out_path = dir / "qfisc_test_cli_stdout";
  const auto err_path = dir / "qfisc_test_cli_stderr";
  std::fflush(stdout);
  std::fflush(stderr);
  const int saved_out = dup(1);
  const int saved_err = dup(2);
  std::FILE* fo = std::fopen(out_path.c_str(), "w");
  std::FILE* fe = std::fopen(err_path.c_str(), "w");
  dup2(fileno(fo), 1);
  dup2(fileno(fe), 2);
  const int code = run(args);
  std::fflush(stdout);
  std::fflush(stderr);
  dup2(saved_out, 1);
  dup2(saved_err, 2);
  close(saved_out);
  close(saved_err);
  std::fclose(fo);
  std::fclose(fe);
  return {code, slurp(out_path), slurp(err_path)};
}

}  // namespace

TEST_CASE("grid and point parsing") {
  CHECK(parse_grid("220x150") == std::pair{220, 150});
  CHECK(parse_grid("3X4") == std::pair{3, 4});
  CHECK_THROWS_AS(parse_grid("220"), ConfigError);
  CHECK_THROWS_AS(parse_grid("0x5"), ConfigError);
  CHECK_THROWS_AS(parse_grid("4x5x6"), ConfigError);
  CHECK_THROWS_AS(parse_grid("ax5"), ConfigError);
  const auto p = parse_point("1.5,-0.25");
  CHECK(p.phi == 1.5);
  CHECK(p.z == -0.25);
  CHECK_THROWS_AS(parse_point("1.5"), ConfigError);
  CHECK_THROWS_AS(parse_point("1.5,x"), ConfigError);
}

TEST_CASE("config JSON") {
  RunConfig cfg;
  apply_config_json(R"({"model": "kicked-top", "physics": {"J": 20, "k": 2.5}, "grid": "8x6",
                        "t": [1, 2, 4], "point": [[1.0, 0.5], "2.0,-0.5"], "cap_weights": "cell-area"})",
                    cfg);
  CHECK(cfg.scan.J == 20);
  CHECK(cfg.scan.k == 2.5);
  CHECK(cfg.scan.n_phi == 8);
  CHECK(cfg.scan.n_z == 6);
  CHECK(cfg.times == std::vector<std::int64_t>{1, 2, 4});
  CHECK(cfg.scan.t == 4);
  REQUIRE(cfg.points.size() == 2);
  CHECK(cfg.points[1].z == -0.5);
  CHECK(cfg.scan.cap_weights == CapWeights::CellArea);

  RunConfig single;
  apply_config_json(R"({"point": [0.3, 0.4]})", single);
  REQUIRE(single.points.size() == 1);
  CHECK(single.points[0].phi == 0.3);

  RunConfig bad;
  CHECK_THROWS_AS(apply_config_json(R"({"Jay": 20})", bad), ConfigError);
  CHECK_THROWS_AS(apply_config_json(R"({"J": "twenty"})", bad), ConfigError);
  CHECK_THROWS_AS(apply_config_json(R"({"M": 1.5})", bad), ConfigError);
  CHECK_THROWS_AS(apply_config_json(R"({"method": "guess"})", bad), ConfigError);
  CHECK_THROWS_AS(apply_config_json("[1, 2]", bad), ConfigError);
  CHECK_THROWS_AS(apply_config_json("{", bad), ConfigError);
}

TEST_CASE("effective config omits the thread count") {
  RunConfig a, b;
  a.command = b.command = "scan";
  b.threads = 4;
  CHECK(effective_config_json(a) == effective_config_json(b));
}

TEST_CASE("invalid config key exits 2 without output files") {
  const auto dir = fresh_dir("badkey");
  std::ofstream(dir / "cfg.json") << R"({"J": 10, "grid_size": "4x4"})";
  const auto out = dir / "out";
  const auto r = run_captured({"scan", "--config", (dir / "cfg.json").string(), "--out", out.string()});
  CHECK(r.code == 2);
  CHECK(r.err.find("grid_size") != std::string::npos);
  CHECK_FALSE(fs::exists(out));
}

TEST_CASE("invalid values exit 2 without output files") {
  const auto dir = fresh_dir("badvalue");
  const auto out = (dir / "out").string();
  CHECK(run_captured({"scan", "--J", "2.3", "--out", out}).code == 2);
  CHECK(run_captured({"scan", "--grid", "4by4", "--out", out}).code == 2);
  CHECK(run_captured({"scan", "--model", "kicked-rotor", "--M", "51", "--out", out}).code == 2);
  CHECK(run_captured({"scan", "--model", "henon-heiles", "--out", out}).code == 2);
  CHECK(run_captured({"timeseries", "--point", "1,1.5", "--out", out}).code == 2);
  CHECK(run_captured({"scan", "--no-such-flag", "--out", out}).code == 2);
  CHECK(run_captured({"--out", out}).code == 2);
  CHECK(run_captured({"scan", "--J", "4096", "--memory-limit-mb", "1", "--out", out}).code == 2);
  CHECK_FALSE(fs::exists(out));
}

TEST_CASE("json errors") {
  const auto r = run_captured({"scan", "--J", "-3", "--json-errors", "--out", (fresh_dir("jsonerr") / "o").string()});
  CHECK(r.code == 2);
  const auto j = nlohmann::json::parse(r.err);
  CHECK(j["exit_code"] == 2);
  CHECK(j.contains("message"));
}

TEST_CASE("help exits 0") { CHECK(run_captured({"--help"}).code == 0); }

TEST_CASE("dry run writes nothing") {
  const auto out = fresh_dir("dry") / "out";
  const auto r = run_captured({"scan", "--J", "64", "--grid", "10x5", "--dry-run", "--out", out.string()});
  CHECK(r.code == 0);
  const auto j = nlohmann::json::parse(r.out);
  CHECK(j["grid_points"] == 50);
  CHECK(j["hilbert_dimension"] == 129);
  CHECK(j["estimated_memory_bytes"].get<std::uint64_t>() > 0);
  CHECK_FALSE(fs::exists(out));
}

TEST_CASE("small scan through the CLI") {
  const auto dir = fresh_dir("scan");
  std::ofstream(dir / "cfg.json") << R"({"J": 10, "k": 2.0, "t": 3, "grid": "4x3", "r": 4})";
  const auto out = dir / "out";
  const auto r =
      run_captured({"scan", "--config", (dir / "cfg.json").string(), "--k", "2.5", "--out", out.string()});
  REQUIRE(r.code == 0);
  const auto meta = nlohmann::json::parse(slurp(out / "scan.json"));
  CHECK(meta["spec"]["k"] == 2.5);  // flag overrides the file
  CHECK(meta["spec"]["J"] == 10.0);
  CHECK(meta["config"]["command"] == "scan");
  CHECK(meta["status"] == "complete");
  const auto recs = read_scan_csv(out / "scan.csv");
  CHECK(recs.size() == 12);
  CHECK(fs::exists(out / "scan.timings.json"));

  // Same configuration with another thread count reproduces the files.
  const auto out2 = dir / "out2";
  REQUIRE(run_captured({"scan", "--config", (dir / "cfg.json").string(), "--k", "2.5", "--threads", "2", "--out",
                        out2.string()})
              .code == 0);
  CHECK(slurp(out / "scan.csv") == slurp(out2 / "scan.csv"));
  CHECK(slurp(out / "scan.json") == slurp(out2 / "scan.json"));
}

TEST_CASE("exact and semiclassical subcommands") {
  const auto out = fresh_dir("single") / "out";
  REQUIRE(run_captured({"exact", "--J", "8", "--t", "2", "--grid", "2x2", "--out", out.string()}).code == 0);
  REQUIRE(run_captured({"semiclassical", "--J", "8", "--t", "2", "--grid", "2x2", "--r", "3", "--out", out.string()})
              .code == 0);
  const auto ex = read_scan_csv(out / "exact.csv");
  const auto sc = read_scan_csv(out / "semiclassical.csv");
  REQUIRE(ex.size() == 4);
  REQUIRE(sc.size() == 4);
  CHECK(std::isnan(ex[0].i_sc));
  CHECK(std::isnan(sc[0].i_exact));

  REQUIRE(run_captured({"exact", "--J", "8", "--t", "2", "--point", "1,0.2", "--out", out.string()}).code == 0);
  CHECK(slurp(out / "exact_points.csv").rfind("point,phi,z,t,I_exact,I_sc,delta_I\n", 0) == 0);
}

TEST_CASE("timeseries outputs") {
  const auto out = fresh_dir("series") / "out";
  REQUIRE(run_captured({"timeseries", "--J", "10", "--t", "1,2,4", "--point", "1,0.2", "--point", "2,-0.4", "--r", "3",
                        "--out", out.string()})
              .code == 0);
  const auto csv = slurp(out / "timeseries.csv");
  CHECK(csv.rfind("point,phi,z,t,I_exact,I_sc,delta_I\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 7);

  const auto rotor = fresh_dir("series_rotor") / "out";
  REQUIRE(run_captured({"timeseries", "--model", "kicked-rotor", "--M", "30", "--k", "1.3", "--t", "2,3", "--point",
                        "1,2", "--r", "2", "--out", rotor.string()})
              .code == 0);
  CHECK(slurp(rotor / "timeseries.csv").rfind("point,x,p,t,", 0) == 0);

  const auto hh = fresh_dir("series_hh") / "out";
  REQUIRE(run_captured({"timeseries", "--model", "henon-heiles", "--hbar", "0.05", "--nmax", "16", "--t-max", "0.5",
                        "--n-mc", "500", "--out", hh.string()})
              .code == 0);
  const auto hcsv = slurp(hh / "timeseries.csv");
  CHECK(hcsv.rfind("point,x,px,t,I_exact,I_sc,delta_I,I_sc_se\n", 0) == 0);
  CHECK(std::count(hcsv.begin(), hcsv.end(), '\n') == 1 + 2 * 6);
  const auto meta = nlohmann::json::parse(slurp(hh / "timeseries.json"));
  CHECK(meta["basis_size"] == 153);
  CHECK(meta.contains("heisenberg_time"));
  CHECK(meta["cutoff_mode"] == "scaled");
  CHECK(meta["truncation_shift"].get<double>() >= 0);
}

TEST_CASE("converge-r output") {
  const auto out = fresh_dir("conv") / "out";
  REQUIRE(run_captured({"converge-r", "--J", "10", "--t", "2", "--grid", "3x2", "--r-min", "1", "--r-max", "3", "--out",
                        out.string()})
              .code == 0);
  const auto csv = slurp(out / "converge_r.csv");
  CHECK(csv.rfind("r,n_points,mean_I_sc,var_I_sc\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 4);
  CHECK(run_captured({"converge-r", "--r-min", "5", "--r-max", "2", "--out", out.string()}).code == 2);
}
