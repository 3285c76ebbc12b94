#ifndef QFISC_SEMICLASSICAL_HPP
#define QFISC_SEMICLASSICAL_HPP

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "qfisc/kicked_top_classical.hpp"
#include "qfisc/linalg.hpp"
#include "qfisc/spin_algebra.hpp"
#include "qfisc/types.hpp"

namespace qfisc {

enum class EnsembleKind { CapGrid, SquareGrid, MonteCarlo };

/// Cutoff reading for Monte Carlo ensembles: Scaled rejects
/// |z - z0|^2 / hbar >= cutoff, Absolute rejects |z - z0|^2 >= cutoff.
enum class CutoffMode { Scaled, Absolute };

inline const char* to_string(CutoffMode m) { return m == CutoffMode::Scaled ? "scaled" : "absolute"; }

/// Cap-grid point weights. Gaussian: exp(-(2J+1) d^2 / 2) per point.
/// CellArea: the same Gaussian times the flat area of the point's cell, the
/// annulus of half-width d0 / 2 around its ring shared by the ring's
/// ceil(2 pi i) points (a disk of radius d0 / 2 for the centre).
enum class CapWeights { Gaussian, CellArea };

inline const char* to_string(CapWeights w) { return w == CapWeights::Gaussian ? "gaussian" : "cell-area"; }

struct EnsembleInfo {
  EnsembleKind kind = EnsembleKind::CapGrid;
  int r = 0;
  double reff_multiple = 0;
  std::int64_t n_requested = 0;
  std::uint64_t seed = 0;
  double cutoff = 0;
  CutoffMode cutoff_mode = CutoffMode::Scaled;
  CapWeights cap_weights = CapWeights::Gaussian;
};

/// Weighted set of initial phase-space points standing in for a Gaussian
/// (minimum-uncertainty) initial state.
template <typename Point, typename Scalar = double>
struct GaussianEnsemble {
  std::vector<Point> points;
  std::vector<Scalar> weights;  // sum to one
  Scalar hbar{1};
  Point center{};
  EnsembleInfo info;

  std::size_t size() const { return points.size(); }
};

/// N(rings) = 1 + sum_{i=1}^{rings} ceil(2 pi i).
inline std::int64_t cap_grid_point_count(int rings) {
  std::int64_t n = 1;
  for (int i = 1; i <= rings; ++i) n += static_cast<std::int64_t>(std::ceil(2 * kPi<double> * i));
  return n;
}

/// Concentric-ring grid around the north pole, reusable for any centre.
/// Ring i sits at arc radius i d0 (d0 = sigma / r) and carries ceil(2 pi i)
/// equally spaced points, the first at azimuth 0. Rings extend to
/// reff_multiple * sigma; weights are exp(-(2J+1) d^2 / 2), normalised.
template <typename Scalar = double>
class CapGridTemplate {
 public:
  CapGridTemplate(HalfInteger spin, int r, double reff_multiple = 5.0, CapWeights weighting = CapWeights::Gaussian)
      : spin_(spin), r_(r), reff_(reff_multiple), weighting_(weighting) {
    if (r < 1) throw DomainError("cap grid: r must be >= 1");
    const Scalar two_j_plus_one = Scalar(spin.twice() + 1);
    const Scalar sigma = Scalar(1) / std::sqrt(two_j_plus_one);
    const Scalar d0 = sigma / Scalar(r);
    const int rings = static_cast<int>(std::floor(reff_multiple * r + 1e-9));
    if (Scalar(rings) * d0 >= kPi<Scalar>) {
      throw DomainError("cap grid: cap radius reaches pi (J too small for the requested cutoff)");
    }
    const auto count = static_cast<std::size_t>(cap_grid_point_count(rings));
    points_.reserve(count);
    weights_.reserve(count);
    points_.push_back({0, 0, 1});
    weights_.push_back(weighting == CapWeights::CellArea ? kPi<Scalar> / 4 : Scalar(1));
    for (int i = 1; i <= rings; ++i) {
      const Scalar rho = Scalar(i) * d0;
      const auto on_ring = static_cast<int>(std::ceil(2 * kPi<double> * i));
      Scalar w = std::exp(-two_j_plus_one * rho * rho / 2);
      if (weighting == CapWeights::CellArea) w *= 2 * kPi<Scalar> * Scalar(i) / Scalar(on_ring);
      const Scalar sr = std::sin(rho);
      const Scalar cr = std::cos(rho);
      for (int q = 0; q < on_ring; ++q) {
        const Scalar alpha = 2 * kPi<Scalar> * Scalar(q) / Scalar(on_ring);
        points_.push_back({sr * std::cos(alpha), sr * std::sin(alpha), cr});
        weights_.push_back(w);
      }
    }
    const Scalar total = pairwise_sum<Scalar>(weights_);
    for (auto& w : weights_) w /= total;
  }

  HalfInteger spin() const { return spin_; }
  int r() const { return r_; }
  CapWeights weighting() const { return weighting_; }
  std::size_t size() const { return points_.size(); }
  const std::vector<SpherePoint<Scalar>>& north_points() const { return points_; }
  const std::vector<Scalar>& weights() const { return weights_; }

  /// The grid rotated so that the north pole lands on (theta, phi).
  GaussianEnsemble<SpherePoint<Scalar>, Scalar> at(Scalar theta, Scalar phi) const {
    if (!(theta >= 0 && theta <= kPi<Scalar>)) throw DomainError("cap grid: theta must lie in [0, pi]");
    GaussianEnsemble<SpherePoint<Scalar>, Scalar> ens;
    const Scalar ct = std::cos(theta), st = std::sin(theta);
    const Scalar cp = std::cos(phi), sp = std::sin(phi);
    ens.points.resize(points_.size());
    for (std::size_t i = 0; i < points_.size(); ++i) {
      const auto& p = points_[i];
      const Scalar x1 = p.x * ct + p.z * st;
      const Scalar z1 = -p.x * st + p.z * ct;
      ens.points[i] = {x1 * cp - p.y * sp, x1 * sp + p.y * cp, z1};
    }
    ens.weights = weights_;
    ens.hbar = Scalar(2) / Scalar(spin_.twice() + 1);
    ens.center = SpherePoint<Scalar>::from_angles(theta, phi);
    ens.info.kind = EnsembleKind::CapGrid;
    ens.info.r = r_;
    ens.info.reff_multiple = reff_;
    ens.info.cap_weights = weighting_;
    return ens;
  }

 private:
  HalfInteger spin_;
  int r_;
  double reff_;
  CapWeights weighting_;
  std::vector<SpherePoint<Scalar>> points_;
  std::vector<Scalar> weights_;
};

template <typename Scalar = double>
GaussianEnsemble<SpherePoint<Scalar>, Scalar> build_cap_grid(HalfInteger spin, Scalar theta, Scalar phi, int r,
                                                             double reff_multiple = 5.0,
                                                             CapWeights weighting = CapWeights::Gaussian) {
  return CapGridTemplate<Scalar>(spin, r, reff_multiple, weighting).at(theta, phi);
}

/// Isotropic Gaussian samples with per-coordinate variance hbar / 2, uniform
/// weights over the accepted draws. Deterministic for a given seed.
template <typename Scalar, int Dim>
GaussianEnsemble<Eigen::Matrix<Scalar, Dim, 1>, Scalar> build_mc_ensemble(
    const Eigen::Matrix<Scalar, Dim, 1>& center, Scalar hbar, std::int64_t n, std::uint64_t seed,
    Scalar cutoff = Scalar(9), CutoffMode mode = CutoffMode::Scaled) {
  if (n < 1) throw UsageError("build_mc_ensemble: n must be >= 1");
  if (!(hbar > 0)) throw UsageError("build_mc_ensemble: hbar must be positive");
  using Point = Eigen::Matrix<Scalar, Dim, 1>;
  GaussianEnsemble<Point, Scalar> ens;
  ens.hbar = hbar;
  ens.center = center;
  ens.info.kind = EnsembleKind::MonteCarlo;
  ens.info.n_requested = n;
  ens.info.seed = seed;
  ens.info.cutoff = cutoff;
  ens.info.cutoff_mode = mode;

  std::mt19937_64 rng(seed);
  std::normal_distribution<Scalar> normal(Scalar(0), std::sqrt(hbar / 2));
  ens.points.reserve(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) {
    Point dz(center.size());
    for (Eigen::Index d = 0; d < center.size(); ++d) dz(d) = normal(rng);
    const Scalar dist2 = dz.squaredNorm();
    const Scalar measure = mode == CutoffMode::Scaled ? dist2 / hbar : dist2;
    if (measure < cutoff) ens.points.push_back(center + dz);
  }
  if (ens.points.empty()) throw UsageError("build_mc_ensemble: cutoff rejected every sample");
  ens.weights.assign(ens.points.size(), Scalar(1) / Scalar(ens.points.size()));
  return ens;
}

/// Any per-step classical flow usable by the engine: `step` advances a point
/// by one output step and returns that step's contribution to dS/dparameter
/// (non-finite on failure, e.g. escape).
template <typename F, typename Point, typename Scalar>
concept ActionFlow = requires(const F& f, Point& p) {
  { f.step(p) } -> std::convertible_to<Scalar>;
};

template <typename Scalar = double>
struct SemiclassicalResult {
  std::int64_t t = 0;
  Scalar i_sc{0};
  Scalar mean_dS{0};
  Scalar var_dS{0};
  std::int64_t n_points = 0;
  std::int64_t n_failed = 0;
  bool degenerate = false;  // fewer than two contributing points
  Scalar std_error = std::numeric_limits<Scalar>::quiet_NaN();  // bootstrap, when requested
};

/// Multiplicities of `resamples` bootstrap draws (with replacement) over the
/// indices where `use` is set. Row b holds the counts of resample b.
inline std::vector<std::vector<std::uint16_t>> bootstrap_counts(const std::vector<unsigned char>& use, int resamples,
                                                                std::uint64_t seed) {
  std::vector<std::size_t> pool;
  for (std::size_t i = 0; i < use.size(); ++i) {
    if (use[i]) pool.push_back(i);
  }
  std::vector<std::vector<std::uint16_t>> counts(static_cast<std::size_t>(resamples),
                                                 std::vector<std::uint16_t>(use.size(), 0));
  if (pool.empty()) return counts;
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
  for (auto& row : counts) {
    for (std::size_t j = 0; j < pool.size(); ++j) ++row[pool[pick(rng)]];
  }
  return counts;
}

/// I_sc(t) = (4 / hbar^2) var(dS/dparameter) at each of the requested
/// (ascending, nonnegative) times, evolving every ensemble point once.
/// Points whose action turns non-finite are excluded; more than
/// max_failed_fraction of them (default 0.1%) is a numerical failure. With bootstrap_resamples > 0 the standard error
/// of I_sc is estimated from that many resamples of the (uniformly weighted)
/// contributing points.
template <typename Point, typename Scalar, typename Flow>
  requires ActionFlow<Flow, Point, Scalar>
std::vector<SemiclassicalResult<Scalar>> semiclassical_qfi_series(const GaussianEnsemble<Point, Scalar>& ens,
                                                                  const Flow& flow,
                                                                  std::span<const std::int64_t> times,
                                                                  int bootstrap_resamples = 0,
                                                                  Scalar max_failed_fraction = Scalar(1e-3)) {
  if (ens.points.size() != ens.weights.size() || ens.points.empty()) {
    throw UsageError("semiclassical_qfi: malformed ensemble");
  }
  for (std::size_t i = 0; i < times.size(); ++i) {
    if (times[i] < 0 || (i > 0 && times[i] < times[i - 1])) {
      throw UsageError("semiclassical_qfi: times must be nonnegative and ascending");
    }
  }
  const std::size_t n = ens.points.size();
  const std::size_t nt = times.size();
  const std::int64_t t_max = nt ? times.back() : 0;
  std::vector<Scalar> actions(n * nt, Scalar(0));  // [time][point]
  std::vector<unsigned char> failed(n, 0);

#pragma omp parallel for schedule(static)
  for (std::int64_t ii = 0; ii < static_cast<std::int64_t>(n); ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    Point p = ens.points[i];
    CompensatedSum<Scalar> sum;
    std::size_t next = 0;
    while (next < nt && times[next] == 0) actions[next++ * n + i] = 0;
    for (std::int64_t s = 1; s <= t_max && next < nt; ++s) {
      sum.add(static_cast<Scalar>(flow.step(p)));
      while (next < nt && times[next] == s) actions[next++ * n + i] = sum.value();
    }
    for (std::size_t q = 0; q < nt; ++q) {
      if (!std::isfinite(actions[q * n + i])) failed[i] = 1;
    }
  }

  std::int64_t n_failed = 0;
  for (auto f : failed) n_failed += f;
  if (Scalar(n_failed) > max_failed_fraction * Scalar(n)) {
    std::ostringstream msg;
    msg << "semiclassical_qfi: " << n_failed << " of " << n << " trajectories failed (non-finite action)";
    throw NumericalError(msg.str());
  }
  std::vector<Scalar> weights = ens.weights;
  for (std::size_t i = 0; i < n; ++i) {
    if (failed[i]) weights[i] = 0;
  }
  const std::int64_t contributing = static_cast<std::int64_t>(n) - n_failed;
  std::vector<std::vector<std::uint16_t>> boot;
  if (bootstrap_resamples > 0) {
    std::vector<unsigned char> use(n);
    for (std::size_t i = 0; i < n; ++i) use[i] = !failed[i];
    boot = bootstrap_counts(use, bootstrap_resamples, ens.info.seed ^ 0x9e3779b97f4a7c15ull);
  }

  std::vector<SemiclassicalResult<Scalar>> out(nt);
  for (std::size_t q = 0; q < nt; ++q) {
    std::span<const Scalar> a(actions.data() + q * n, n);
    std::vector<Scalar> clean(a.begin(), a.end());
    for (std::size_t i = 0; i < n; ++i) {
      if (failed[i]) clean[i] = 0;
    }
    const auto mv = weighted_mean_variance<Scalar>(clean, weights);
    auto& r = out[q];
    r.t = times[q];
    r.mean_dS = mv.mean;
    r.var_dS = mv.variance;
    r.i_sc = Scalar(4) / (ens.hbar * ens.hbar) * mv.variance;
    r.n_points = static_cast<std::int64_t>(n);
    r.n_failed = n_failed;
    r.degenerate = contributing < 2;
    if (!boot.empty()) {
      std::vector<Scalar> samples(boot.size());
      std::vector<Scalar> w(n);
      for (std::size_t b = 0; b < boot.size(); ++b) {
        for (std::size_t i = 0; i < n; ++i) w[i] = Scalar(boot[b][i]);
        samples[b] = Scalar(4) / (ens.hbar * ens.hbar) * weighted_mean_variance<Scalar>(clean, w).variance;
      }
      r.std_error = std::sqrt(mean_variance<Scalar>(samples).variance * Scalar(boot.size()) /
                              Scalar(std::max<std::size_t>(boot.size() - 1, 1)));
    }
  }
  return out;
}

template <typename Point, typename Scalar, typename Flow>
  requires ActionFlow<Flow, Point, Scalar>
SemiclassicalResult<Scalar> semiclassical_qfi(const GaussianEnsemble<Point, Scalar>& ens, const Flow& flow,
                                              std::int64_t t) {
  const std::int64_t times[1] = {t};
  return semiclassical_qfi_series(ens, flow, std::span<const std::int64_t>(times, 1)).front();
}

/// Kicked-top flow for the engine.
template <typename Scalar = double>
struct KickedTopFlow {
  KickedTopMap<Scalar> map;
  KickedTopFlow(Scalar beta, Scalar k) : map(beta, k) {}
  Scalar step(SpherePoint<Scalar>& p) const { return map.step(p); }
};

}  // namespace qfisc

#endif  // QFISC_SEMICLASSICAL_HPP
