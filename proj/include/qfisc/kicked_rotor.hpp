#ifndef QFISC_KICKED_ROTOR_HPP
#define QFISC_KICKED_ROTOR_HPP

#include <cmath>
#include <cstdint>

#include "qfisc/floquet.hpp"
#include "qfisc/semiclassical.hpp"

namespace qfisc {

template <typename Scalar>
Scalar wrap_two_pi(Scalar v) {
  const Scalar two_pi = 2 * kPi<Scalar>;
  Scalar r = std::fmod(v, two_pi);
  if (r < 0) r += two_pi;
  if (r >= two_pi) r = 0;
  return r;
}

/// Signed distance a - b folded into [-pi, pi).
template <typename Scalar>
Scalar circular_difference(Scalar a, Scalar b) {
  return wrap_two_pi(a - b + kPi<Scalar>) - kPi<Scalar>;
}

template <typename Scalar = double>
struct RotorParams {
  std::int64_t M = 2;
  Scalar k{0};
  std::int64_t t = 1;

  Scalar hbar() const { return 2 * kPi<Scalar> / Scalar(M); }
  void validate() const {
    if (M < 2) throw DomainError("kicked rotor: M must be >= 2");
    // The closed-form one-period kernel is a quadratic Gauss sum that is
    // unitary only for even M.
    if (M % 2 != 0) throw DomainError("kicked rotor: M must be even");
    if (t < 0) throw DomainError("kicked rotor: t must be >= 0");
    if (!std::isfinite(k)) throw DomainError("kicked rotor: non-finite k");
  }
};

template <typename Scalar = double>
struct TorusPoint {
  Scalar x{0};
  Scalar p{0};
};

/// Standard map: p' = p + k sin x, x' = x + p' (both mod 2 pi).
template <typename Scalar>
TorusPoint<Scalar> standard_map_step(TorusPoint<Scalar> pt, Scalar k) {
  const Scalar p = wrap_two_pi(pt.p + k * std::sin(pt.x));
  return {wrap_two_pi(pt.x + p), p};
}

template <typename Scalar>
TorusPoint<Scalar> standard_map_inverse_step(TorusPoint<Scalar> pt, Scalar k) {
  const Scalar x = wrap_two_pi(pt.x - pt.p);
  return {x, wrap_two_pi(pt.p - k * std::sin(x))};
}

/// Standard-map flow; each step contributes -cos x (pre-kick) to dS/dk.
template <typename Scalar = double>
struct StandardMapFlow {
  Scalar k{0};
  Scalar step(TorusPoint<Scalar>& pt) const {
    const Scalar c = std::cos(pt.x);
    pt = standard_map_step(pt, k);
    return -c;
  }
};

/// One-period rotor bundle for the parameter k:
/// U_{mn} = exp(i pi (m-n)^2 / M - i k (M / 2 pi) cos(2 pi n / M)) / sqrt(i M),
/// dU/dk = U diag(-i (M / 2 pi) cos(2 pi n / M)).
template <typename Scalar = double>
FloquetBundle<Scalar> rotor_floquet(const RotorParams<Scalar>& params) {
  params.validate();
  using Cplx = std::complex<Scalar>;
  const std::int64_t M = params.M;
  const Scalar Ms = Scalar(M);
  const Scalar scale = Ms / (2 * kPi<Scalar>);
  const Cplx prefactor = Scalar(1) / std::sqrt(Cplx(0, Ms));

  // Quadratic phase depends on (m-n)^2 mod 2M only.
  VectorC<Scalar> free_phase(M);
  for (std::int64_t d = 0; d < M; ++d) {
    const std::int64_t q = (d * d) % (2 * M);
    free_phase(d) = prefactor * std::polar(Scalar(1), kPi<Scalar> * Scalar(q) / Ms);
  }
  FloquetBundle<Scalar> out;
  out.t = 1;
  out.U.resize(M, M);
  out.dU.resize(M, M);
  for (std::int64_t n = 0; n < M; ++n) {
    const Scalar c = std::cos(2 * kPi<Scalar> * Scalar(n) / Ms);
    const Cplx kick = std::polar(Scalar(1), -params.k * scale * c);
    const Cplx dkick = Cplx(0, -scale * c);
    for (std::int64_t m = 0; m < M; ++m) {
      const std::int64_t d = m >= n ? m - n : n - m;
      out.U(m, n) = free_phase(d) * kick;
      out.dU(m, n) = out.U(m, n) * dkick;
    }
  }
  return out;
}

template <typename Scalar = double>
FloquetBundle<Scalar> rotor_bundle(const RotorParams<Scalar>& params) {
  params.validate();
  if (params.t == 0) return FloquetBundle<Scalar>::identity(params.M);
  return propagate_bundle(rotor_floquet(params), params.t);
}

/// Minimum-uncertainty wave packet centred at (x0, p0), periodised over the
/// torus by summing lattice images in position; equal widths sqrt(hbar/2).
/// Sampling on the M-point position lattice wraps momentum mod 2 pi.
template <typename Scalar = double>
VectorC<Scalar> rotor_coherent_state(std::int64_t M, Scalar x0, Scalar p0) {
  if (M < 2) throw DomainError("rotor_coherent_state: M must be >= 2");
  const Scalar hbar = 2 * kPi<Scalar> / Scalar(M);
  const Scalar two_pi = 2 * kPi<Scalar>;
  // exp(-d^2 / (2 hbar)) < 1e-16 once d^2 > 2 hbar * 36.9.
  const Scalar reach = std::sqrt(2 * hbar * Scalar(36.9));
  const int images = std::max(3, static_cast<int>(std::ceil(reach / two_pi)) + 1);
  VectorC<Scalar> psi(M);
  for (std::int64_t n = 0; n < M; ++n) {
    const Scalar x = two_pi * Scalar(n) / Scalar(M);
    std::complex<Scalar> amp(0);
    for (int j = -images; j <= images; ++j) {
      const Scalar d = x - x0 + two_pi * Scalar(j);
      amp += std::polar(std::exp(-d * d / (2 * hbar)), p0 * d / hbar);
    }
    psi(n) = amp;
  }
  psi /= psi.norm();
  return psi;
}

/// Square grid with spacing sigma / r inside reff_multiple * sigma,
/// sigma = sqrt(hbar / 2), Gaussian weights exp(-d^2 / (2 sigma^2)).
template <typename Scalar = double>
GaussianEnsemble<TorusPoint<Scalar>, Scalar> build_square_grid(TorusPoint<Scalar> center, Scalar hbar, int r,
                                                               double reff_multiple = 5.0) {
  if (r < 1) throw DomainError("square grid: r must be >= 1");
  if (!(hbar > 0)) throw DomainError("square grid: hbar must be positive");
  const Scalar sigma = std::sqrt(hbar / 2);
  const Scalar spacing = sigma / Scalar(r);
  const int reach = static_cast<int>(std::floor(reff_multiple * r + 1e-9));
  GaussianEnsemble<TorusPoint<Scalar>, Scalar> ens;
  ens.hbar = hbar;
  ens.center = {wrap_two_pi(center.x), wrap_two_pi(center.p)};
  ens.info.kind = EnsembleKind::SquareGrid;
  ens.info.r = r;
  ens.info.reff_multiple = reff_multiple;
  const std::int64_t reach2 = std::int64_t(reach) * reach;
  for (int i = -reach; i <= reach; ++i) {
    for (int j = -reach; j <= reach; ++j) {
      const std::int64_t d2 = std::int64_t(i) * i + std::int64_t(j) * j;
      if (d2 > reach2) continue;
      ens.points.push_back({wrap_two_pi(center.x + Scalar(i) * spacing), wrap_two_pi(center.p + Scalar(j) * spacing)});
      ens.weights.push_back(std::exp(-Scalar(d2) / (2 * Scalar(r) * Scalar(r))));
    }
  }
  const Scalar total = pairwise_sum<Scalar>(ens.weights);
  for (auto& w : ens.weights) w /= total;
  return ens;
}

template <typename Scalar = double>
QfiValue<Scalar> rotor_exact_qfi(const FloquetBundle<Scalar>& bundle, const VectorC<Scalar>& state) {
  return exact_qfi(bundle, state);
}

template <typename Scalar = double>
SemiclassicalResult<Scalar> rotor_semiclassical_qfi(const GaussianEnsemble<TorusPoint<Scalar>, Scalar>& ens,
                                                    Scalar k, std::int64_t t) {
  return semiclassical_qfi(ens, StandardMapFlow<Scalar>{k}, t);
}

}  // namespace qfisc

#endif  // QFISC_KICKED_ROTOR_HPP
