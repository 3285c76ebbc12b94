#include <doctest.h>
#include <omp.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "qfisc/scan.hpp"

using namespace qfisc;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

fs::path fresh_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("qfisc_test_scan_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

ScanOutputs outputs_in(const fs::path& dir) {
  return {dir / "scan.csv", dir / "scan.json", dir / "scan.timings.json", ""};
}

ScanSpec small_top() {
  ScanSpec s;
  s.J = 12;
  s.beta = 1.5;
  s.k = 3.0;
  s.t = 5;
  s.n_phi = 6;
  s.n_z = 4;
  s.r = 4;
  return s;
}

bool same_records(const std::vector<ScanRecord>& a, const std::vector<ScanRecord>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].phi != b[i].phi || a[i].z != b[i].z || a[i].i_exact != b[i].i_exact || a[i].i_sc != b[i].i_sc ||
        a[i].delta != b[i].delta) {
      return false;
    }
  }
  return true;
}

}  // namespace

TEST_CASE("relative difference") {
  CHECK(relative_difference(3, 1) == 0.5);
  CHECK(relative_difference(1, 3) == 0.5);
  CHECK(relative_difference(0, 0) == 0.0);
  CHECK(relative_difference(2, 2) == 0.0);
  CHECK(relative_difference(1, 0) == 1.0);
}

TEST_CASE("aggregates") {
  std::vector<ScanRecord> recs = {{0, 0, 1, 2, 0}, {0, 0, 3, 2, 0}};
  auto a = aggregate(recs);
  CHECK(a.n == 2);
  CHECK(a.mean_exact == 2.0);
  CHECK(a.var_exact == 1.0);
  CHECK(a.mean_sc == 2.0);
  CHECK(a.var_sc == 0.0);
  CHECK(a.delta_mean == 0.0);
  CHECK(a.delta_var == 1.0);

  const double nan = std::numeric_limits<double>::quiet_NaN();
  recs.push_back({0, 0, nan, 5, nan});
  a = aggregate(recs);
  CHECK(a.mean_exact == 2.0);
  CHECK(a.mean_sc == 3.0);
}

TEST_CASE("grid coordinates are cell centred") {
  const auto phi = phi_grid(4);
  CHECK(phi[0] == doctest::Approx(kPi<double> / 4));
  CHECK(phi[3] == doctest::Approx(7 * kPi<double> / 4));
  const auto z = z_grid(5);
  CHECK(z[0] == doctest::Approx(-0.8));
  CHECK(z[2] == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(z[4] == doctest::Approx(0.8));
}

TEST_CASE("heisenberg times") {
  CHECK(kicked_top_heisenberg_time(HalfInteger::from_double(250)) == 501);
  CHECK(kicked_top_heisenberg_time(HalfInteger::from_double(4096)) == 8193);
  CHECK(kicked_top_heisenberg_time(HalfInteger::from_double(2.5)) == 6);
  CHECK(rotor_heisenberg_time(100) == 100);
}

TEST_CASE("fnv1a reference values") {
  CHECK(fnv1a("") == 0xcbf29ce484222325ull);
  CHECK(fnv1a("a") == 0xaf63dc4c8601ec8cull);
  CHECK(fnv1a("foobar") == 0x85944171f73967e8ull);
}

TEST_CASE("free rotation point matches the closed form") {
  // k = 0, phi = pi, z = 0: the state points along -x, var(Jy) = J/2.
  ScanSpec s;
  s.J = 40;
  s.k = 0;
  s.t = 3;
  s.n_phi = 1;
  s.n_z = 1;
  s.r = 6;
  const auto res = run_scan(s);
  REQUIRE(res.records.size() == 1);
  const auto& r = res.records[0];
  CHECK(r.phi == doctest::Approx(kPi<double>));
  CHECK(r.z == 0.0);
  CHECK(r.i_exact == doctest::Approx(2 * s.J * 9).epsilon(1e-10));
  CHECK(r.delta == relative_difference(r.i_exact, r.i_sc));
  CHECK(r.delta < 0.05);
}

TEST_CASE("method selection fills NaN for the other side") {
  auto s = small_top();
  s.method = Method::Exact;
  const auto ex = run_scan(s);
  s.method = Method::Semiclassical;
  const auto sc = run_scan(s);
  s.method = Method::Both;
  const auto both = run_scan(s);
  for (std::size_t i = 0; i < both.records.size(); ++i) {
    CHECK(std::isnan(ex.records[i].i_sc));
    CHECK(std::isnan(sc.records[i].i_exact));
    CHECK(ex.records[i].i_exact == both.records[i].i_exact);
    CHECK(sc.records[i].i_sc == both.records[i].i_sc);
  }
  CHECK(std::isnan(ex.aggregates.delta_mean));
}

TEST_CASE("streamed scan matches in-memory scan and CSV round trip") {
  const auto dir = fresh_dir("stream");
  const auto spec = small_top();
  const auto mem = run_scan(spec);
  const auto disk = run_scan(spec, outputs_in(dir));
  CHECK(same_records(mem.records, disk.records));
  const auto back = read_scan_csv(dir / "scan.csv");
  CHECK(same_records(back, mem.records));
  const auto a = aggregate(back);
  CHECK(a.mean_exact == mem.aggregates.mean_exact);
  CHECK(a.var_sc == mem.aggregates.var_sc);

  const auto meta = nlohmann::json::parse(slurp(dir / "scan.json"));
  CHECK(meta["schema_version"] == kSchemaVersion);
  CHECK(meta["status"] == "complete");
  CHECK(meta["csv_header"] == "phi,z,I_exact,I_sc,delta_I");
  CHECK(meta["rows_complete"] == spec.n_z);
  CHECK(meta["heisenberg_time"] == 25.0);
  CHECK(meta["aggregates"]["mean_I_exact"].get<double>() == mem.aggregates.mean_exact);
  CHECK(slurp(dir / "scan.csv").rfind("phi,z,I_exact,I_sc,delta_I\n", 0) == 0);
  CHECK(fs::exists(dir / "scan.timings.json"));
}

TEST_CASE("resume after interruption is bit identical") {
  const auto spec = small_top();
  const auto full_dir = fresh_dir("resume_full");
  run_scan(spec, outputs_in(full_dir));
  const std::string full = slurp(full_dir / "scan.csv");

  // Keep the header, one complete row and half of the next.
  const auto dir = fresh_dir("resume_part");
  std::istringstream lines(full);
  std::string line, partial;
  for (int i = 0; i < 1 + spec.n_phi + spec.n_phi / 2 && std::getline(lines, line); ++i) partial += line + "\n";
  partial += "0.5,0.1,12";  // torn final line
  std::ofstream(dir / "scan.csv", std::ios::binary) << partial;
  fs::copy_file(full_dir / "scan.json", dir / "scan.json");

  const auto res = run_scan(spec, outputs_in(dir));
  CHECK(res.resumed_rows == 1);
  CHECK(slurp(dir / "scan.csv") == full);
  CHECK(slurp(dir / "scan.json") == slurp(full_dir / "scan.json"));
}

TEST_CASE("resume refuses output of a different configuration") {
  const auto dir = fresh_dir("resume_other");
  auto spec = small_top();
  run_scan(spec, outputs_in(dir));
  spec.k = 2.0;
  CHECK_THROWS_AS(run_scan(spec, outputs_in(dir)), UsageError);
  ScanOptions fresh;
  fresh.resume = false;
  CHECK_NOTHROW(run_scan(spec, outputs_in(dir), fresh));
}

TEST_CASE("repeated scans and thread counts give identical bytes") {
  const auto spec = small_top();
  std::vector<std::string> csvs;
  for (int threads : {1, 3, 1}) {
    omp_set_num_threads(threads);
    const auto dir = fresh_dir("threads" + std::to_string(csvs.size()));
    run_scan(spec, outputs_in(dir));
    csvs.push_back(slurp(dir / "scan.csv") + slurp(dir / "scan.json"));
  }
  omp_set_num_threads(omp_get_num_procs());
  CHECK(csvs[0] == csvs[1]);
  CHECK(csvs[0] == csvs[2]);
}

TEST_CASE("memory estimate gate") {
  auto spec = small_top();
  ScanOptions tiny;
  tiny.memory_limit = 1024;
  const auto dir = fresh_dir("resources");
  CHECK_THROWS_AS(run_scan(spec, outputs_in(dir), tiny), ResourceError);
  CHECK_FALSE(fs::exists(dir / "scan.csv"));

  ScanSpec big;
  CHECK(estimate_scan_memory(big) > std::uint64_t(3) * 16 * 8193 * 8193);
  big.method = Method::Semiclassical;
  CHECK(estimate_scan_memory(big) < std::uint64_t(1) << 30);
}

TEST_CASE("spec validation") {
  ScanSpec s = small_top();
  s.model = Model::HenonHeiles;
  CHECK_THROWS_AS(s.validate(), UsageError);
  s = small_top();
  s.J = 2.3;
  CHECK_THROWS(s.validate());
  s = small_top();
  s.n_z = 0;
  CHECK_THROWS_AS(s.validate(), UsageError);
  s = small_top();
  s.model = Model::KickedRotor;
  s.M = 51;
  CHECK_THROWS(s.validate());
  CHECK(parse_method("sc") == Method::Semiclassical);
  CHECK(parse_model("kicked-rotor") == Model::KickedRotor);
  CHECK_THROWS_AS(parse_model("pendulum"), UsageError);
}

TEST_CASE("timeseries agrees with the grid scan") {
  auto spec = small_top();
  spec.n_phi = 3;
  spec.n_z = 2;
  const auto scan = run_scan(spec);
  std::vector<SeriesPoint> pts;
  for (const auto& r : scan.records) pts.push_back({r.phi, r.z});
  const std::vector<std::int64_t> times = {spec.t};
  const auto series = run_timeseries(spec, pts, times);
  REQUIRE(series.size() == scan.records.size());
  for (std::size_t i = 0; i < series.size(); ++i) {
    CHECK(series[i].i_exact == doctest::Approx(scan.records[i].i_exact).epsilon(1e-10));
    CHECK(series[i].i_sc == doctest::Approx(scan.records[i].i_sc).epsilon(1e-12));
  }
}

TEST_CASE("exact series: doubling chain and generic times agree") {
  const auto spin = HalfInteger::from_double(15);
  Matrixcd states(spin.dim(), 2);
  states.col(0) = coherent_state<double>(spin, 1.0, 0.4).amplitudes;
  states.col(1) = coherent_state<double>(spin, 2.2, 4.0).amplitudes;
  const std::vector<std::int64_t> pow2 = {1, 2, 4, 8, 16};
  const std::vector<std::int64_t> mixed = {3, 8, 11, 16};
  const auto a = kicked_top_exact_series(spin, 1.5, 3.0, pow2, states);
  const auto b = kicked_top_exact_series(spin, 1.5, 3.0, mixed, states);
  for (int p = 0; p < 2; ++p) {
    CHECK(a[3][p] == doctest::Approx(b[1][p]).epsilon(1e-9));
    CHECK(a[4][p] == doctest::Approx(b[3][p]).epsilon(1e-9));
  }
}

TEST_CASE("rotor scan on the torus") {
  ScanSpec s;
  s.model = Model::KickedRotor;
  s.M = 40;
  s.k = 1.3;
  s.t = 3;
  s.n_phi = 3;
  s.n_z = 2;
  s.r = 3;
  const auto res = run_scan(s);
  REQUIRE(res.records.size() == 6);
  for (const auto& r : res.records) {
    CHECK(r.phi > 0);
    CHECK(r.phi < 2 * kPi<double>);
    CHECK(r.z > 0);
    CHECK(r.z < 2 * kPi<double>);
    CHECK(r.i_exact > 0);
    CHECK(r.i_sc > 0);
  }
  CHECK(res.heisenberg_time == 40);
  CHECK_FALSE(res.warnings.empty());

  s.rotor_sampler = RotorSampler::MonteCarlo;
  s.n_mc = 3000;
  const auto mc1 = run_scan(s);
  const auto mc2 = run_scan(s);
  CHECK(same_records(mc1.records, mc2.records));
}

TEST_CASE("convergence in r matches semiclassical scans") {
  auto spec = small_top();
  spec.n_phi = 3;
  spec.n_z = 2;
  spec.method = Method::Semiclassical;
  const std::vector<int> rs = {2, 5};
  const auto conv = run_convergence(spec, rs);
  REQUIRE(conv.size() == 2);
  for (std::size_t i = 0; i < rs.size(); ++i) {
    spec.r = rs[i];
    const auto scan = run_scan(spec);
    CHECK(conv[i].mean_sc == doctest::Approx(scan.aggregates.mean_sc).epsilon(1e-12));
    CHECK(conv[i].n_points == cap_grid_point_count(static_cast<int>(5 * rs[i])));
  }
}
