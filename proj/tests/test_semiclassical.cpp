#include <doctest.h>

#include <omp.h>

#include <random>
#include <vector>

#include "qfisc/semiclassical.hpp"

using namespace qfisc;
using Point = SpherePoint<double>;

TEST_CASE("cap grid point counts") {
  CHECK(cap_grid_point_count(0) == 1);
  CHECK(cap_grid_point_count(1) == 8);
  CHECK(cap_grid_point_count(2) == 8 + 13);
  // r = 1 with rings out to sigma.
  const CapGridTemplate<double> small(HalfInteger::from_twice(200), 1, 1.0);
  CHECK(small.size() == 8);
  // Default r = 50 out to 5 sigma: about 1.96e5 points.
  const auto n = cap_grid_point_count(250);
  CHECK(std::abs(n - 196000.0) / 196000.0 < 0.01);
  const CapGridTemplate<double> full(HalfInteger::from_twice(8192), 50);
  CHECK(static_cast<std::int64_t>(full.size()) == n);
}

TEST_CASE("cap grid geometry and weights") {
  const HalfInteger spin = HalfInteger::from_twice(100);
  const int r = 4;
  const CapGridTemplate<double> tmpl(spin, r);
  const double sigma = 1 / std::sqrt(101.0);
  CompensatedSum<double> total;
  for (double w : tmpl.weights()) {
    CHECK(w >= 0);
    total.add(w);
  }
  CHECK(std::abs(total.value() - 1) < 1e-12);
  // Ring 3, first point: arc radius 3 d0 due east.
  const Point& p = tmpl.north_points()[1 + 7 + 13];
  CHECK(std::acos(p.z) == doctest::Approx(3 * sigma / r).epsilon(1e-12));
  CHECK(p.y == 0.0);
  CHECK(p.x > 0);

  const auto ens = tmpl.at(1.2, 2.5);
  const Point c = Point::from_angles(1.2, 2.5);
  for (std::size_t i = 0; i < ens.size(); i += 37) {
    const auto& q = ens.points[i];
    const double arc = std::acos(std::clamp(q.x * c.x + q.y * c.y + q.z * c.z, -1.0, 1.0));
    CHECK(arc == doctest::Approx(std::acos(tmpl.north_points()[i].z)).epsilon(1e-9));
    CHECK(std::abs(q.norm() - 1) < 1e-14);
  }
  CHECK(ens.hbar == doctest::Approx(2.0 / 101));

  CHECK_THROWS_AS(CapGridTemplate<double>(spin, 0), DomainError);
  CHECK_THROWS_AS(CapGridTemplate<double>(HalfInteger::from_twice(1), 50), DomainError);
  CHECK_THROWS_AS(tmpl.at(-0.1, 0.0), DomainError);
}

TEST_CASE("weighted variance matches a two-pass oracle") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-5, 5), w(0, 1);
  std::vector<double> values(10001), weights(10001);
  for (std::size_t i = 0; i < values.size(); ++i) {
    values[i] = 1e3 + u(rng);
    weights[i] = w(rng);
  }
  long double sw = 0, sx = 0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    sw += weights[i];
    sx += weights[i] * values[i];
  }
  const long double mean = sx / sw;
  long double sv = 0;
  for (std::size_t i = 0; i < values.size(); ++i) sv += weights[i] * (values[i] - mean) * (values[i] - mean);
  const auto mv = weighted_mean_variance<double>(values, weights);
  CHECK(std::abs(mv.mean - double(mean)) / double(mean) < 1e-12);
  CHECK(std::abs(mv.variance - double(sv / sw)) / double(sv / sw) < 1e-12);
}

TEST_CASE("variance is invariant under a constant shift") {
  std::vector<double> a{0.3, -1.2, 2.5, 0.9}, w{0.1, 0.4, 0.2, 0.3};
  const double v = weighted_mean_variance<double>(a, w).variance;
  for (auto& x : a) x += 12345.678;
  CHECK(weighted_mean_variance<double>(a, w).variance == doctest::Approx(v).epsilon(1e-9));
}

TEST_CASE("semiclassical QFI for the linear rotation") {
  // k = 0: dS/dbeta = -t y with y conserved, so I_sc = (2J+1)^2 t^2 var(y).
  for (int twice_j : {20, 200, 2000}) {
    CAPTURE(twice_j);
    const CapGridTemplate<double> tmpl(HalfInteger::from_twice(twice_j), 50);
    const auto ens = tmpl.at(0.0, 0.0);
    // Ring-sum oracle: mean of sin^2 over ceil(2 pi i) equally spaced azimuths is 1/2.
    const double n = twice_j + 1.0;
    const double d0 = 1 / std::sqrt(n) / 50;
    long double num = 0, den = 1;
    for (int i = 1; i <= 250; ++i) {
      const double rho = i * d0;
      const long double w = std::exp(-n * rho * rho / 2) * std::ceil(2 * kPi<double> * i);
      num += w * std::sin(rho) * std::sin(rho) / 2;
      den += w;
    }
    const double var_y = double(num / den);
    const std::int64_t times[] = {0, 1, 4, 16};
    const auto res = semiclassical_qfi_series(ens, KickedTopFlow<double>(1.5, 0.0), std::span(times));
    CHECK(res[0].i_sc == 0.0);
    for (int q = 1; q < 4; ++q) {
      const double t = double(times[q]);
      CHECK(res[q].i_sc == doctest::Approx(n * n * t * t * var_y).epsilon(1e-10));
      CHECK(res[q].mean_dS == doctest::Approx(0.0).scale(1.0));
    }
    // The extra ceil(2 pi i) - 2 pi i points per ring overweight the inner rings.
    if (twice_j >= 200) CHECK(var_y * n < 1 - 4 / (3 * n) - 5e-4);
  }
}

TEST_CASE("cell-area cap weights reach the continuum cap Gaussian") {
  // Continuum: var(y) = sigma^2 (1 - 4 sigma^2 / 3) + O(sigma^6) with sigma^2 = 1 / (2J+1).
  for (int twice_j : {20, 200, 2000}) {
    CAPTURE(twice_j);
    const double n = twice_j + 1.0;
    const auto ens = build_cap_grid<double>(HalfInteger::from_twice(twice_j), 0.0, 0.0, 50, 5.0, CapWeights::CellArea);
    CHECK(ens.info.cap_weights == CapWeights::CellArea);
    const auto res = semiclassical_qfi(ens, KickedTopFlow<double>(1.5, 0.0), 1);
    const double var_y = res.var_dS;
    CHECK(var_y * n == doctest::Approx(1 - 4 / (3 * n)).epsilon(3 / (n * n) + 1e-4));
  }
}

TEST_CASE("semiclassical series equals single-time calls") {
  const auto ens = build_cap_grid<double>(HalfInteger::from_twice(100), 1.0, 2.0, 10);
  const KickedTopFlow<double> flow(1.5, 3.0);
  const std::int64_t times[] = {1, 2, 5};
  const auto series = semiclassical_qfi_series(ens, flow, std::span(times));
  for (int q = 0; q < 3; ++q) CHECK(series[q].i_sc == semiclassical_qfi(ens, flow, times[q]).i_sc);
}

TEST_CASE("thread count does not change semiclassical results") {
  const auto ens = build_cap_grid<double>(HalfInteger::from_twice(300), 2.0, 0.5, 20);
  const KickedTopFlow<double> flow(1.5, 3.0);
  const int before = omp_get_max_threads();
  omp_set_num_threads(1);
  const auto a = semiclassical_qfi(ens, flow, 12);
  omp_set_num_threads(4);
  const auto b = semiclassical_qfi(ens, flow, 12);
  omp_set_num_threads(before);
  CHECK(a.i_sc == b.i_sc);
  CHECK(a.mean_dS == b.mean_dS);
}

TEST_CASE("Monte Carlo ensemble") {
  using V4 = Eigen::Vector4d;
  const V4 center(0.25, 0.0, 0.0, 0.1);
  const double hbar = 1.0 / 200;
  const auto ens = build_mc_ensemble<double, 4>(center, hbar, 50000, 7, 1e300, CutoffMode::Absolute);
  CHECK(ens.size() == 50000);
  V4 mean = V4::Zero();
  for (const auto& p : ens.points) mean += p;
  mean /= 50000.0;
  const double sigma = std::sqrt(hbar / 2);
  CHECK((mean - center).cwiseAbs().maxCoeff() < 5 * sigma / std::sqrt(50000.0));
  for (int d = 0; d < 4; ++d) {
    double v = 0;
    for (const auto& p : ens.points) v += (p(d) - mean(d)) * (p(d) - mean(d));
    v /= 50000.0;
    CHECK(std::abs(v - 1.0 / 400) / (1.0 / 400) < 0.03);
  }
  double wsum = 0;
  for (double w : ens.weights) wsum += w;
  CHECK(std::abs(wsum - 1) < 1e-12);

  // Same seed, same ensemble.
  const auto again = build_mc_ensemble<double, 4>(center, hbar, 50000, 7, 1e300, CutoffMode::Absolute);
  CHECK(again.points.back() == ens.points.back());

  // Scaled cutoff 9: |dz|^2 / hbar < 9 keeps roughly P(chi^2_4 < 18).
  const auto cut = build_mc_ensemble<double, 4>(center, hbar, 20000, 7, 9.0, CutoffMode::Scaled);
  CHECK(cut.size() < 20000);
  CHECK(cut.size() > 19900);
  for (const auto& p : cut.points) CHECK((p - center).squaredNorm() / hbar < 9.0);

  CHECK_THROWS_AS((build_mc_ensemble<double, 4>(center, hbar, 100, 1, 1e-30, CutoffMode::Absolute)), UsageError);
  CHECK_THROWS_AS((build_mc_ensemble<double, 4>(center, hbar, 0, 1)), UsageError);
}

namespace {

struct DriftFlow {
  double step(Eigen::Vector2d& p) const {
    p(0) += 1;
    return p(1);
  }
};

struct SometimesNanFlow {
  double step(Eigen::Vector2d& p) const { return p(0) > 0.3 ? std::nan("") : p(0); }
};

}  // namespace

TEST_CASE("single-point ensembles are degenerate") {
  GaussianEnsemble<Eigen::Vector2d, double> ens;
  ens.points = {Eigen::Vector2d(0.1, 0.2)};
  ens.weights = {1.0};
  ens.hbar = 0.01;
  const auto r = semiclassical_qfi(ens, DriftFlow{}, 3);
  CHECK(r.i_sc == 0.0);
  CHECK(r.degenerate);
}

TEST_CASE("non-finite trajectories are counted and bounded") {
  GaussianEnsemble<Eigen::Vector2d, double> ens;
  ens.hbar = 0.01;
  for (int i = 0; i < 2000; ++i) {
    ens.points.emplace_back(i == 0 ? 1.0 : 0.0001 * i / 2000.0, 0.0);
    ens.weights.push_back(1.0 / 2000);
  }
  const auto r = semiclassical_qfi(ens, SometimesNanFlow{}, 2);
  CHECK(r.n_failed == 1);
  CHECK(std::isfinite(r.i_sc));
  for (int i = 1; i < 5; ++i) ens.points[i](0) = 1.0;
  CHECK_THROWS_AS(semiclassical_qfi(ens, SometimesNanFlow{}, 2), NumericalError);
}
