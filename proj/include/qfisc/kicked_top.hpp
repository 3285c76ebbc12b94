#ifndef QFISC_KICKED_TOP_HPP
#define QFISC_KICKED_TOP_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>

#include "qfisc/floquet.hpp"
#include "qfisc/spin_algebra.hpp"

namespace qfisc {

template <typename Scalar = double>
struct KickedTopParams {
  HalfInteger spin;
  Scalar beta{0};
  Scalar k{0};
  std::int64_t t = 1;

  void validate() const {
    if (t < 0) throw DomainError("kicked top: t must be >= 0");
    if (!std::isfinite(beta) || !std::isfinite(k)) throw DomainError("kicked top: non-finite parameter");
  }
};

/// One period: U = exp(-i k J_z^2 / (2J+1)) V_y exp(-i beta J_z) V_y^dagger,
/// dU/dbeta = -i U J_y. Both exponentials are diagonal phases; the rotation
/// is assembled from two real products W cos(beta m) W^T and W sin(beta m) W^T.
template <typename Scalar>
FloquetBundle<Scalar> floquet_one_step(const SpinOperators<Scalar>& ops, Scalar beta, Scalar k) {
  using Cplx = std::complex<Scalar>;
  const Eigen::Index n = ops.dim();
  const VectorR<Scalar>& m = ops.jz_diagonal();
  const MatrixR<Scalar>& w = ops.jy_eigenvectors_real();

  MatrixR<Scalar> re;
  MatrixR<Scalar> im;
  {
    MatrixR<Scalar> scaled = w * (beta * m).array().cos().matrix().asDiagonal();
    parallel_product(re, scaled, w.transpose());
    scaled = w * (beta * m).array().sin().matrix().asDiagonal();
    parallel_product(im, scaled, w.transpose());
  }

  const Scalar twice_j_plus_one = Scalar(ops.spin().twice() + 1);
  const VectorC<Scalar>& d = ops.row_phases();
  VectorC<Scalar> left(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    left(i) = std::polar(Scalar(1), -k * m(i) * m(i) / twice_j_plus_one) * d(i);
  }

  FloquetBundle<Scalar> out;
  out.t = 1;
  out.U.resize(n, n);
  for (Eigen::Index c = 0; c < n; ++c) {
    const Cplx right = std::conj(d(c));
    for (Eigen::Index r = 0; r < n; ++r) {
      out.U(r, c) = left(r) * Cplx(re(r, c), -im(r, c)) * right;
    }
  }
  re.resize(0, 0);
  im.resize(0, 0);
  out.dU = Cplx(0, -1) * ops.right_multiply_jy(out.U);
  return out;
}

template <typename Scalar>
FloquetBundle<Scalar> propagate_bundle(const SpinOperators<Scalar>& ops,
                                       const KickedTopParams<Scalar>& params) {
  params.validate();
  if (ops.spin().twice() != params.spin.twice()) throw UsageError("propagate_bundle: J mismatch");
  if (params.t == 0) return FloquetBundle<Scalar>::identity(ops.dim());
  return propagate_bundle(floquet_one_step(ops, params.beta, params.k), params.t);
}

/// chi(eps) = <psi0| U_{beta-eps}(t)^dagger U_{beta+eps}(t) |psi0>.
template <typename Scalar>
std::complex<Scalar> loschmidt_echo(const SpinOperators<Scalar>& ops, const KickedTopParams<Scalar>& params,
                                    const VectorC<Scalar>& state, Scalar epsilon) {
  if (state.size() != ops.dim()) throw UsageError("loschmidt_echo: dimension mismatch");
  KickedTopParams<Scalar> plus = params;
  KickedTopParams<Scalar> minus = params;
  plus.beta += epsilon;
  minus.beta -= epsilon;
  const VectorC<Scalar> fwd = propagate_bundle(ops, plus).U * state;
  if (epsilon == Scalar(0)) return fwd.squaredNorm();
  const VectorC<Scalar> bwd = propagate_bundle(ops, minus).U * state;
  return bwd.dot(fwd);
}

/// Finite-difference step for qfi_from_echo. ||dU/dbeta|| <= t J bounds the
/// echo's curvature scale.
template <typename Scalar>
Scalar default_echo_step(const KickedTopParams<Scalar>& params) {
  const Scalar scale = Scalar(std::max<std::int64_t>(params.t, 1)) * std::max(Scalar(0.5), Scalar(params.spin.value()));
  return Scalar(0.02) / scale;
}

/// QFI = chi'^2 - chi'' at eps = 0 with five-point central differences.
template <typename Scalar>
Scalar qfi_from_echo(const SpinOperators<Scalar>& ops, const KickedTopParams<Scalar>& params,
                     const VectorC<Scalar>& state, Scalar step) {
  std::array<std::complex<Scalar>, 5> chi;
  for (int i = 0; i < 5; ++i) chi[i] = loschmidt_echo(ops, params, state, Scalar(i - 2) * step);
  const std::complex<Scalar> d1 = (-chi[4] + Scalar(8) * chi[3] - Scalar(8) * chi[1] + chi[0]) / (12 * step);
  const std::complex<Scalar> d2 =
      (-chi[4] + Scalar(16) * chi[3] - Scalar(30) * chi[2] + Scalar(16) * chi[1] - chi[0]) / (12 * step * step);
  return std::real(d1 * d1 - d2);
}

template <typename Scalar>
Scalar qfi_from_echo(const SpinOperators<Scalar>& ops, const KickedTopParams<Scalar>& params,
                     const VectorC<Scalar>& state) {
  return qfi_from_echo(ops, params, state, default_echo_step(params));
}

}  // namespace qfisc

#endif  // QFISC_KICKED_TOP_HPP
