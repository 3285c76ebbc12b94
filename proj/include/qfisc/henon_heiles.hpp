#ifndef QFISC_HENON_HEILES_HPP
#define QFISC_HENON_HEILES_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <sstream>
#include <vector>

#include "qfisc/linalg.hpp"
#include "qfisc/semiclassical.hpp"
#include "qfisc/types.hpp"

namespace qfisc {

/// Phase-space point ordered (x, y, p_x, p_y).
template <typename Scalar = double>
using HHPoint = Eigen::Matrix<Scalar, 4, 1>;

/// H' = x^2 y - y^3 / 3, the coefficient of lambda.
template <typename Scalar>
Scalar hh_perturbation(const HHPoint<Scalar>& z) {
  return z(0) * z(0) * z(1) - z(1) * z(1) * z(1) / 3;
}

template <typename Scalar>
Scalar hh_energy(const HHPoint<Scalar>& z, Scalar lambda) {
  return (z(2) * z(2) + z(3) * z(3) + z(0) * z(0) + z(1) * z(1)) / 2 + lambda * hh_perturbation(z);
}

/// Point (x, y, p_x, p_y) on the energy shell E with p_y > 0.
template <typename Scalar>
HHPoint<Scalar> hh_point_from_energy(Scalar x, Scalar y, Scalar px, Scalar energy, Scalar lambda) {
  HHPoint<Scalar> z(x, y, px, 0);
  const Scalar py2 = 2 * (energy - hh_energy(z, lambda));
  if (py2 < 0) throw DomainError("hh_point_from_energy: point lies outside the energy shell");
  z(3) = std::sqrt(py2);
  return z;
}

template <typename Scalar = double>
struct HHState {
  HHPoint<Scalar> z = HHPoint<Scalar>::Zero();
  Scalar lambda{1};
  Scalar energy{0};

  static HHState at(const HHPoint<Scalar>& z, Scalar lambda) { return {z, lambda, hh_energy(z, lambda)}; }
};

/// Fourth-order Yoshida composition of the kick-drift-kick leapfrog, fixed dt.
template <typename Scalar = double>
class YoshidaIntegrator {
 public:
  YoshidaIntegrator(Scalar lambda, Scalar dt) : lambda_(lambda), dt_(dt) {
    if (!(dt > 0)) throw UsageError("YoshidaIntegrator: dt must be positive");
    const Scalar cbrt2 = std::cbrt(Scalar(2));
    const Scalar w1 = Scalar(1) / (2 - cbrt2);
    const Scalar w0 = -cbrt2 / (2 - cbrt2);
    c_[0] = c_[3] = w1 / 2 * dt;
    c_[1] = c_[2] = (w0 + w1) / 2 * dt;
    d_[0] = d_[2] = w1 * dt;
    d_[1] = w0 * dt;
  }

  Scalar dt() const { return dt_; }
  Scalar lambda() const { return lambda_; }

  void step(HHPoint<Scalar>& z) const {
    for (int s = 0; s < 3; ++s) {
      z(0) += c_[s] * z(2);
      z(1) += c_[s] * z(3);
      const Scalar x = z(0), y = z(1);
      z(2) -= d_[s] * (x + 2 * lambda_ * x * y);
      z(3) -= d_[s] * (y + lambda_ * (x * x - y * y));
    }
    z(0) += c_[3] * z(2);
    z(1) += c_[3] * z(3);
  }

 private:
  Scalar lambda_;
  Scalar dt_;
  Scalar c_[4];
  Scalar d_[3];
};

template <typename Scalar = double>
struct HHTrajectory {
  std::vector<HHPoint<Scalar>> points;  // t = 0, dt, 2 dt, ...
  Scalar dt{0};
  Scalar dS_dlambda{0};  // -integral of H' over [0, t_final]
  Scalar max_energy_drift{0};
  bool escaped = false;
};

inline constexpr double kHHEscapeRadius = 1.5;

/// Composite quadrature weights on n+1 equispaced samples: Simpson, with a
/// closing 3/8 panel when n is odd (trapezoid for n = 1).
template <typename Scalar>
std::vector<Scalar> simpson_weights(std::int64_t n, Scalar h) {
  std::vector<Scalar> w(static_cast<std::size_t>(n + 1), Scalar(0));
  if (n == 0) return w;
  if (n == 1) {
    w[0] = w[1] = h / 2;
    return w;
  }
  const std::int64_t simpson_end = (n % 2 == 0) ? n : n - 3;
  for (std::int64_t i = 0; i + 2 <= simpson_end; i += 2) {
    w[i] += h / 3;
    w[i + 1] += 4 * h / 3;
    w[i + 2] += h / 3;
  }
  if (simpson_end != n) {
    const auto i = simpson_end;
    w[i] += 3 * h / 8;
    w[i + 1] += 9 * h / 8;
    w[i + 2] += 9 * h / 8;
    w[i + 3] += 3 * h / 8;
  }
  return w;
}

/// Integrates to t_final with the step dt (shrunk to divide t_final) and
/// accumulates dS/dlambda = -integral of H'.
template <typename Scalar = double>
HHTrajectory<Scalar> hh_integrate(const HHState<Scalar>& start, Scalar t_final, Scalar dt,
                                  Scalar escape_radius = Scalar(kHHEscapeRadius)) {
  if (!(dt > 0)) throw UsageError("hh_integrate: dt must be positive");
  if (t_final < 0) throw UsageError("hh_integrate: t_final must be nonnegative");
  const auto steps = static_cast<std::int64_t>(std::ceil(t_final / dt - Scalar(1e-9)));
  HHTrajectory<Scalar> out;
  out.dt = steps > 0 ? t_final / Scalar(steps) : dt;
  const YoshidaIntegrator<Scalar> integ(start.lambda, out.dt);
  const Scalar e0 = hh_energy(start.z, start.lambda);
  out.points.reserve(static_cast<std::size_t>(steps + 1));
  out.points.push_back(start.z);
  HHPoint<Scalar> z = start.z;
  for (std::int64_t s = 0; s < steps; ++s) {
    integ.step(z);
    out.points.push_back(z);
    out.max_energy_drift = std::max(out.max_energy_drift, std::abs(hh_energy(z, start.lambda) - e0));
    if (z(0) * z(0) + z(1) * z(1) > escape_radius * escape_radius || !z.allFinite()) {
      out.escaped = true;
      out.dS_dlambda = std::numeric_limits<Scalar>::quiet_NaN();
      return out;
    }
  }
  const auto w = simpson_weights<Scalar>(steps, out.dt);
  CompensatedSum<Scalar> sum;
  for (std::size_t i = 0; i < out.points.size(); ++i) sum.add(-w[i] * hh_perturbation(out.points[i]));
  out.dS_dlambda = sum.value();
  return out;
}

/// Engine flow: one output step = `substeps` (even) integrator steps with a
/// Simpson panel for -integral H'. Escaped trajectories return NaN.
template <typename Scalar = double>
class HenonHeilesFlow {
 public:
  HenonHeilesFlow(Scalar lambda, Scalar dt, int substeps, Scalar escape_radius = Scalar(kHHEscapeRadius))
      : integ_(lambda, dt), substeps_(substeps), escape2_(escape_radius * escape_radius) {
    if (substeps < 2 || substeps % 2 != 0) throw UsageError("HenonHeilesFlow: substeps must be even and >= 2");
  }

  Scalar output_step() const { return integ_.dt() * Scalar(substeps_); }

  Scalar step(HHPoint<Scalar>& z) const {
    const Scalar h = integ_.dt();
    Scalar acc = hh_perturbation(z);
    for (int s = 1; s <= substeps_; ++s) {
      integ_.step(z);
      if (!(z(0) * z(0) + z(1) * z(1) <= escape2_)) return std::numeric_limits<Scalar>::quiet_NaN();
      const Scalar coef = (s == substeps_) ? Scalar(1) : (s % 2 ? Scalar(4) : Scalar(2));
      acc += coef * hh_perturbation(z);
    }
    return -acc * h / 3;
  }

 private:
  YoshidaIntegrator<Scalar> integ_;
  int substeps_;
  Scalar escape2_;
};

/// Truncated two-dimensional oscillator model of the quantum Henon-Heiles
/// Hamiltonian. Basis: product states (n_x, n_y) with n_x + n_y <= n_max.
template <typename Scalar = double>
struct HHQuantumModel {
  Scalar hbar{0};
  Scalar lambda{0};
  int n_max = 0;
  std::vector<std::pair<int, int>> basis;
  MatrixR<Scalar> H;
  MatrixR<Scalar> Hprime;
  VectorR<Scalar> energies;       // ascending
  MatrixR<Scalar> eigenvectors;   // columns
  MatrixR<Scalar> Hprime_eigen;   // <n|H'|m> in the eigenbasis

  Eigen::Index basis_size() const { return static_cast<Eigen::Index>(basis.size()); }
};

inline Eigen::Index hh_basis_size(int n_max) { return Eigen::Index(n_max + 1) * (n_max + 2) / 2; }

namespace detail {
/// Position operator sqrt(hbar/2)(a + a^dagger) on n = 0 .. dim-1.
template <typename Scalar>
MatrixR<Scalar> oscillator_position(int dim, Scalar hbar) {
  MatrixR<Scalar> x = MatrixR<Scalar>::Zero(dim, dim);
  const Scalar s = std::sqrt(hbar / 2);
  for (int n = 0; n + 1 < dim; ++n) {
    x(n + 1, n) = x(n, n + 1) = s * std::sqrt(Scalar(n + 1));
  }
  return x;
}
}  // namespace detail

template <typename Scalar = double>
HHQuantumModel<Scalar> hh_build_quantum(Scalar hbar, int n_max, Scalar lambda) {
  if (!(hbar > 0)) throw DomainError("hh_build_quantum: hbar must be positive");
  if (n_max < 0) throw DomainError("hh_build_quantum: n_max must be >= 0");
  HHQuantumModel<Scalar> model;
  model.hbar = hbar;
  model.lambda = lambda;
  model.n_max = n_max;
  for (int total = 0; total <= n_max; ++total) {
    for (int nx = total; nx >= 0; --nx) model.basis.emplace_back(nx, total - nx);
  }
  const Eigen::Index nb = model.basis_size();

  // Padded so that x^2 and y^3 entries are exact for indices <= n_max.
  const int pad = n_max + 4;
  const MatrixR<Scalar> x1 = detail::oscillator_position<Scalar>(pad, hbar);
  const MatrixR<Scalar> x2 = x1 * x1;
  const MatrixR<Scalar> x3 = x2 * x1;

  model.Hprime = MatrixR<Scalar>::Zero(nb, nb);
  for (Eigen::Index a = 0; a < nb; ++a) {
    const auto [ax, ay] = model.basis[static_cast<std::size_t>(a)];
    for (Eigen::Index b = 0; b < nb; ++b) {
      const auto [bx, by] = model.basis[static_cast<std::size_t>(b)];
      if (std::abs(ax - bx) > 2 || std::abs(ay - by) > 3) continue;
      Scalar v = x2(ax, bx) * x1(ay, by);
      if (ax == bx) v -= x3(ay, by) / 3;
      model.Hprime(a, b) = v;
    }
  }
  model.H = lambda * model.Hprime;
  for (Eigen::Index a = 0; a < nb; ++a) {
    const auto [ax, ay] = model.basis[static_cast<std::size_t>(a)];
    model.H(a, a) += hbar * Scalar(ax + ay + 1);
  }

  Eigen::SelfAdjointEigenSolver<MatrixR<Scalar>> solver(model.H);
  if (solver.info() != Eigen::Success) throw NumericalError("hh_build_quantum: eigensolve failed");
  model.energies = solver.eigenvalues();
  model.eigenvectors = solver.eigenvectors();
  MatrixR<Scalar> tmp;
  parallel_product(tmp, model.Hprime, model.eigenvectors);
  parallel_product(model.Hprime_eigen, model.eigenvectors.transpose(), tmp);
  return model;
}

/// Largest distance from an eigenvalue below `energy_max` to the nearest
/// eigenvalue of the model with a basis about 1.5x larger. Levels are matched
/// by proximity since enlarging the basis adds spurious states outside the
/// well that shift the low end of the spectrum.
template <typename Scalar = double>
Scalar hh_truncation_shift(const HHQuantumModel<Scalar>& model, Scalar energy_max) {
  int bigger = model.n_max;
  while (hh_basis_size(bigger) < (3 * model.basis_size()) / 2) ++bigger;
  const auto ref = hh_build_quantum(model.hbar, bigger, model.lambda);
  const std::vector<Scalar> e(ref.energies.data(), ref.energies.data() + ref.energies.size());
  Scalar worst = 0;
  for (Eigen::Index i = 0; i < model.basis_size(); ++i) {
    const Scalar x = model.energies(i);
    if (x < 0 || x > energy_max) continue;
    const auto it = std::lower_bound(e.begin(), e.end(), x);
    Scalar d = std::numeric_limits<Scalar>::max();
    if (it != e.end()) d = std::min(d, *it - x);
    if (it != e.begin()) d = std::min(d, x - *(it - 1));
    worst = std::max(worst, d);
  }
  return worst;
}

/// Isotropic oscillator coherent state centred at z0 in the truncated basis.
template <typename Scalar = double>
VectorC<Scalar> hh_coherent_state(const HHQuantumModel<Scalar>& model, const HHPoint<Scalar>& z0) {
  using Cplx = std::complex<Scalar>;
  const Scalar norm = std::sqrt(2 * model.hbar);
  const Cplx ax(z0(0) / norm, z0(2) / norm);
  const Cplx ay(z0(1) / norm, z0(3) / norm);
  const auto one_mode = [&](Cplx alpha) {
    std::vector<Cplx> c(static_cast<std::size_t>(model.n_max + 1));
    c[0] = std::exp(-std::norm(alpha) / 2);
    for (int n = 0; n < model.n_max; ++n) c[n + 1] = c[n] * alpha / std::sqrt(Scalar(n + 1));
    return c;
  };
  const auto cx = one_mode(ax);
  const auto cy = one_mode(ay);
  VectorC<Scalar> psi(model.basis_size());
  for (Eigen::Index a = 0; a < model.basis_size(); ++a) {
    const auto [nx, ny] = model.basis[static_cast<std::size_t>(a)];
    psi(a) = cx[nx] * cy[ny];
  }
  const Scalar retained = psi.squaredNorm();
  if (retained < Scalar(0.999)) {
    std::ostringstream msg;
    msg << "hh_coherent_state: truncated basis retains only " << retained << " of the norm; enlarge n_max";
    throw NumericalError(msg.str());
  }
  return psi;
}

/// (e^{i d t / hbar} - 1) / (i d), written without cancellation; t / hbar for
/// |d| below the degeneracy threshold.
template <typename Scalar>
std::complex<Scalar> hh_generator_factor(Scalar d, Scalar t, Scalar hbar, Scalar threshold) {
  if (std::abs(d) < threshold) return {t / hbar, 0};
  const Scalar half = d * t / (2 * hbar);
  return (2 * std::sin(half) / d) * std::complex<Scalar>(std::cos(half), std::sin(half));
}

template <typename Scalar>
Scalar hh_degeneracy_threshold(const HHQuantumModel<Scalar>& model) {
  return Scalar(1e-12) * model.energies.cwiseAbs().maxCoeff();
}

/// Generator L(t) in the energy eigenbasis; U^dagger dU/dlambda = -i L.
template <typename Scalar = double>
MatrixC<Scalar> hh_generator_matrix(const HHQuantumModel<Scalar>& model, Scalar t) {
  const Eigen::Index nb = model.basis_size();
  const Scalar thr = hh_degeneracy_threshold(model);
  MatrixC<Scalar> L(nb, nb);
  for (Eigen::Index m = 0; m < nb; ++m) {
    for (Eigen::Index n = 0; n < nb; ++n) {
      L(n, m) = model.Hprime_eigen(n, m) *
                hh_generator_factor(model.energies(n) - model.energies(m), t, model.hbar, thr);
    }
  }
  return L;
}

/// Exact QFI I(t) = 4 (<L^2> - <L>^2) for each requested time.
template <typename Scalar = double>
std::vector<Scalar> hh_exact_qfi_series(const HHQuantumModel<Scalar>& model, const HHPoint<Scalar>& center,
                                        std::span<const Scalar> times) {
  const VectorC<Scalar> psi = hh_coherent_state(model, center);
  const VectorC<Scalar> c = model.eigenvectors.transpose().template cast<std::complex<Scalar>>() * psi;
  const Eigen::Index nb = model.basis_size();
  const Scalar thr = hh_degeneracy_threshold(model);
  std::vector<Scalar> out(times.size());
  for (std::size_t q = 0; q < times.size(); ++q) {
    const Scalar t = times[q];
    VectorC<Scalar> lc = VectorC<Scalar>::Zero(nb);
#pragma omp parallel for schedule(static)
    for (Eigen::Index n = 0; n < nb; ++n) {
      std::complex<Scalar> acc(0);
      for (Eigen::Index m = 0; m < nb; ++m) {
        const Scalar h = model.Hprime_eigen(n, m);
        if (h == Scalar(0)) continue;
        acc += h * hh_generator_factor(model.energies(n) - model.energies(m), t, model.hbar, thr) * c(m);
      }
      lc(n) = acc;
    }
    const Scalar second = lc.squaredNorm();
    const Scalar first = std::real(c.dot(lc));
    out[q] = std::max(Scalar(0), 4 * (second - first * first));
  }
  return out;
}

template <typename Scalar = double>
Scalar hh_exact_qfi(const HHQuantumModel<Scalar>& model, const HHPoint<Scalar>& center, Scalar t) {
  const Scalar times[1] = {t};
  return hh_exact_qfi_series(model, center, std::span<const Scalar>(times, 1)).front();
}

/// var(H') in the initial coherent state, evaluated in the oscillator basis.
template <typename Scalar = double>
Scalar hh_perturbation_variance(const HHQuantumModel<Scalar>& model, const HHPoint<Scalar>& center) {
  const VectorC<Scalar> psi = hh_coherent_state(model, center);
  const VectorC<Scalar> hpsi = model.Hprime.template cast<std::complex<Scalar>>() * psi;
  const Scalar mean = std::real(psi.dot(hpsi));
  return hpsi.squaredNorm() - mean * mean;
}

struct HHSemiclassicalOptions {
  std::int64_t n = 50000;
  std::uint64_t seed = 1;
  double dt = 1e-3;
  int substeps = 100;  // integrator steps per output step
  double cutoff = 9.0;
  CutoffMode cutoff_mode = CutoffMode::Scaled;
  int bootstrap = 100;  // resamples for the standard error, 0 to skip
  double max_failed_fraction = 1e-3;
};

/// Semiclassical I_sc at the output times t_q = q * dt * substeps.
template <typename Scalar = double>
std::vector<SemiclassicalResult<Scalar>> hh_semiclassical_qfi_series(const HHPoint<Scalar>& center, Scalar hbar,
                                                                     Scalar lambda,
                                                                     std::span<const std::int64_t> output_steps,
                                                                     const HHSemiclassicalOptions& opt) {
  const auto ens = build_mc_ensemble<Scalar, 4>(center, hbar, opt.n, opt.seed, Scalar(opt.cutoff), opt.cutoff_mode);
  const HenonHeilesFlow<Scalar> flow(lambda, Scalar(opt.dt), opt.substeps);
  return semiclassical_qfi_series(ens, flow, output_steps, opt.bootstrap, Scalar(opt.max_failed_fraction));
}

/// Heisenberg time hbar / Delta, Delta the mean spacing of the 10 levels
/// nearest to `energy`.
template <typename Scalar = double>
Scalar hh_heisenberg_time(const HHQuantumModel<Scalar>& model, Scalar energy) {
  constexpr Eigen::Index kLevels = 10;
  if (model.basis_size() < kLevels + 1) throw NumericalError("hh_heisenberg_time: fewer than 11 levels");
  std::vector<Scalar> e(model.energies.data(), model.energies.data() + model.energies.size());
  std::vector<std::size_t> idx(e.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::partial_sort(idx.begin(), idx.begin() + kLevels, idx.end(),
                    [&](std::size_t a, std::size_t b) { return std::abs(e[a] - energy) < std::abs(e[b] - energy); });
  Scalar lo = std::numeric_limits<Scalar>::max(), hi = std::numeric_limits<Scalar>::lowest();
  for (Eigen::Index i = 0; i < kLevels; ++i) {
    lo = std::min(lo, e[idx[static_cast<std::size_t>(i)]]);
    hi = std::max(hi, e[idx[static_cast<std::size_t>(i)]]);
  }
  const Scalar spacing = (hi - lo) / Scalar(kLevels - 1);
  if (!(spacing > 0)) throw NumericalError("hh_heisenberg_time: degenerate levels");
  return model.hbar / spacing;
}

}  // namespace qfisc

#endif  // QFISC_HENON_HEILES_HPP
