#ifndef QFISC_KICKED_TOP_CLASSICAL_HPP
#define QFISC_KICKED_TOP_CLASSICAL_HPP

#include <algorithm>
#include <cmath>
#include <span>

#include "qfisc/linalg.hpp"
#include "qfisc/types.hpp"

namespace qfisc {

/// Unit vector on the classical spin sphere.
template <typename Scalar = double>
struct SpherePoint {
  Scalar x{0};
  Scalar y{0};
  Scalar z{1};

  static SpherePoint from_angles(Scalar theta, Scalar phi) {
    return {std::sin(theta) * std::cos(phi), std::sin(theta) * std::sin(phi), std::cos(theta)};
  }
  /// From canonical coordinates (phi, z).
  static SpherePoint from_phi_z(Scalar phi, Scalar z) {
    const Scalar rho = std::sqrt(std::max(Scalar(0), Scalar(1) - z * z));
    return {rho * std::cos(phi), rho * std::sin(phi), z};
  }

  Scalar norm() const { return std::sqrt(x * x + y * y + z * z); }
  void normalize() {
    const Scalar inv = Scalar(1) / norm();
    x *= inv;
    y *= inv;
    z *= inv;
  }
  Scalar phi() const {
    const Scalar p = std::atan2(y, x);
    return p < 0 ? p + 2 * kPi<Scalar> : p;
  }
};

/// One kick with precomputed trigonometry. Rotation about y by beta, then
/// torsion about z by the angle k z'.
template <typename Scalar = double>
class KickedTopMap {
 public:
  KickedTopMap(Scalar beta, Scalar k) : cos_b_(std::cos(beta)), sin_b_(std::sin(beta)), k_(k) {}

  /// Advances p by one step (renormalised) and returns the step's
  /// contribution -y to dS/dbeta, taken before the step.
  Scalar step(SpherePoint<Scalar>& p) const {
    const Scalar y0 = p.y;
    const Scalar x1 = p.x * cos_b_ + p.z * sin_b_;
    const Scalar z1 = -p.x * sin_b_ + p.z * cos_b_;
    const Scalar angle = k_ * z1;
    const Scalar ca = std::cos(angle);
    const Scalar sa = std::sin(angle);
    p.x = x1 * ca - y0 * sa;
    p.y = x1 * sa + y0 * ca;
    p.z = z1;
    p.normalize();
    return -y0;
  }

  /// Exact inverse of step.
  void inverse_step(SpherePoint<Scalar>& p) const {
    const Scalar angle = -k_ * p.z;
    const Scalar ca = std::cos(angle);
    const Scalar sa = std::sin(angle);
    const Scalar x1 = p.x * ca - p.y * sa;
    const Scalar y1 = p.x * sa + p.y * ca;
    const Scalar z1 = p.z;
    p.x = x1 * cos_b_ - z1 * sin_b_;
    p.y = y1;
    p.z = x1 * sin_b_ + z1 * cos_b_;
    p.normalize();
  }

 private:
  Scalar cos_b_;
  Scalar sin_b_;
  Scalar k_;
};

template <typename Scalar>
SpherePoint<Scalar> kicked_top_step(SpherePoint<Scalar> p, Scalar beta, Scalar k) {
  KickedTopMap<Scalar>(beta, k).step(p);
  return p;
}

/// dS/dbeta = -sum of y over the pre-step points of a trajectory.
template <typename Scalar>
Scalar accumulate_dSdbeta(std::span<const SpherePoint<Scalar>> pre_step_points) {
  if (pre_step_points.empty()) throw UsageError("accumulate_dSdbeta: empty trajectory");
  CompensatedSum<Scalar> sum;
  for (const auto& p : pre_step_points) sum.add(-p.y);
  return sum.value();
}

/// Evolves p for t steps and returns dS/dbeta.
template <typename Scalar>
Scalar evolve_dSdbeta(SpherePoint<Scalar>& p, Scalar beta, Scalar k, long t) {
  if (t < 1) throw UsageError("evolve_dSdbeta: t must be >= 1");
  const KickedTopMap<Scalar> map(beta, k);
  CompensatedSum<Scalar> sum;
  for (long s = 0; s < t; ++s) sum.add(map.step(p));
  return sum.value();
}

/// One-step generating action S1(z_t, z_{t+1}) of the kicked top: three
/// arccos terms for the rotation by beta and -(k/2) z_{t+1}^2 for the torsion.
/// The arccos branch describes transitions with y_t >= 0; there
/// dS1/dbeta at fixed endpoints equals -y_t. Arguments within 1e-9 outside
/// [-1, 1] are clipped, anything further throws.
template <typename Scalar>
Scalar one_step_action(Scalar z_t, Scalar z_next, Scalar beta, Scalar k) {
  const auto safe_acos = [](Scalar a) {
    if (!(std::abs(a) <= Scalar(1) + Scalar(1e-9))) {
      throw DomainError("one_step_action: inconsistent endpoints (arccos argument out of range)");
    }
    return std::acos(std::clamp(a, Scalar(-1), Scalar(1)));
  };
  const Scalar sb = std::sin(beta);
  const Scalar cb = std::cos(beta);
  const Scalar rho_t = std::sqrt(Scalar(1) - z_t * z_t);
  const Scalar rho_next = std::sqrt(Scalar(1) - z_next * z_next);
  return z_t * safe_acos((z_t * cb - z_next) / (sb * rho_t)) -
         z_next * safe_acos((z_t - z_next * cb) / (sb * rho_next)) +
         safe_acos((z_t * z_next - cb) / (rho_t * rho_next)) - k / 2 * z_next * z_next;
}

}  // namespace qfisc

#endif  // QFISC_KICKED_TOP_CLASSICAL_HPP
