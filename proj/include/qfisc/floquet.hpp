#ifndef QFISC_FLOQUET_HPP
#define QFISC_FLOQUET_HPP

#include <cstdint>
#include <optional>
#include <utility>

#include "qfisc/linalg.hpp"
#include "qfisc/types.hpp"

namespace qfisc {

/// U(t) together with its derivative with respect to the estimation parameter.
template <typename Scalar = double>
struct FloquetBundle {
  MatrixC<Scalar> U;
  MatrixC<Scalar> dU;
  std::int64_t t = 0;

  Eigen::Index dim() const { return U.rows(); }

  static FloquetBundle identity(Eigen::Index dim) {
    return {MatrixC<Scalar>::Identity(dim, dim), MatrixC<Scalar>::Zero(dim, dim), 0};
  }
};

/// (A, dA) * (B, dB) = (AB, dA B + A dB).
template <typename Scalar>
FloquetBundle<Scalar> combine(const FloquetBundle<Scalar>& a, const FloquetBundle<Scalar>& b) {
  if (a.dim() != b.dim()) throw UsageError("combine: bundle dimensions differ");
  FloquetBundle<Scalar> out;
  parallel_product(out.dU, a.dU, b.U);
  parallel_product_add(out.dU, a.U, b.dU);
  parallel_product(out.U, a.U, b.U);
  out.t = a.t + b.t;
  return out;
}

/// G(u+1) from G(u): the derivative is updated first, then U is squared.
/// Peak memory is three dense matrices.
template <typename Scalar>
void square_in_place(FloquetBundle<Scalar>& g) {
  {
    MatrixC<Scalar> next_dU;
    parallel_product(next_dU, g.dU, g.U);
    parallel_product_add(next_dU, g.U, g.dU);
    g.dU = std::move(next_dU);
  }
  {
    MatrixC<Scalar> next_U;
    parallel_product(next_U, g.U, g.U);
    g.U = std::move(next_U);
  }
  g.t *= 2;
}

/// Raises a one-step bundle to time t. Powers of two use the doubling
/// recursion alone; other t combine the doubled bundles of the set bits of t.
template <typename Scalar>
FloquetBundle<Scalar> propagate_bundle(FloquetBundle<Scalar> one_step, std::int64_t t) {
  if (t < 0) throw UsageError("propagate_bundle: t must be nonnegative");
  if (one_step.t != 1) throw UsageError("propagate_bundle: expected a one-step bundle");
  if (t == 0) return FloquetBundle<Scalar>::identity(one_step.dim());

  std::optional<FloquetBundle<Scalar>> result;
  FloquetBundle<Scalar> g = std::move(one_step);
  for (std::int64_t rest = t; rest != 0; rest >>= 1) {
    if (rest & 1) {
      if (rest == 1 && !result) return g;
      result = result ? combine(*result, g) : g;
    }
    if (rest > 1) square_in_place(g);
  }
  return std::move(*result);
}

/// Reference derivative by the explicit sum over the t insertion points of
/// dU(1), used to check the doubling recursion.
template <typename Scalar>
MatrixC<Scalar> naive_derivative_sum(const FloquetBundle<Scalar>& one_step, std::int64_t t) {
  const Eigen::Index n = one_step.dim();
  // prefix[i] = U^i
  std::vector<MatrixC<Scalar>> powers;
  powers.reserve(static_cast<std::size_t>(t));
  powers.push_back(MatrixC<Scalar>::Identity(n, n));
  for (std::int64_t i = 1; i < t; ++i) powers.push_back(powers.back() * one_step.U);
  MatrixC<Scalar> sum = MatrixC<Scalar>::Zero(n, n);
  for (std::int64_t i = 0; i < t; ++i) {
    sum += powers[static_cast<std::size_t>(i)] * one_step.dU *
           powers[static_cast<std::size_t>(t - 1 - i)];
  }
  return sum;
}

/// Pure-state QFI for the state U(t)|psi0>.
template <typename Scalar = double>
struct QfiValue {
  Scalar value{0};  // clamped at zero
  Scalar raw{0};
  bool clamped = false;
};

/// I = 4(<psi|dU^dagger dU|psi> - |<psi|U^dagger dU|psi>|^2) from the images
/// phi = U psi, dphi = dU psi. Negative round-off down to -1e-8 of the first
/// term is clamped; anything below throws.
template <typename Scalar, typename A, typename B>
QfiValue<Scalar> qfi_from_images(const Eigen::MatrixBase<A>& phi, const Eigen::MatrixBase<B>& dphi) {
  const Scalar a = dphi.squaredNorm();
  const Scalar b = std::norm(phi.dot(dphi));
  const Scalar raw = 4 * (a - b);
  QfiValue<Scalar> out{raw, raw, false};
  if (raw < 0) {
    if (raw < -Scalar(1e-8) * 4 * a) throw NumericalError("QFI is significantly negative");
    out.value = 0;
    out.clamped = true;
  }
  return out;
}

template <typename Scalar>
QfiValue<Scalar> exact_qfi(const FloquetBundle<Scalar>& bundle, const VectorC<Scalar>& state) {
  if (state.size() != bundle.dim()) throw UsageError("exact_qfi: state and bundle dimensions differ");
  const VectorC<Scalar> phi = bundle.U * state;
  const VectorC<Scalar> dphi = bundle.dU * state;
  return qfi_from_images<Scalar>(phi, dphi);
}

/// QFI for every column of `states`; two panel products for the whole block.
template <typename Scalar>
std::vector<QfiValue<Scalar>> exact_qfi_batch(const FloquetBundle<Scalar>& bundle,
                                              const MatrixC<Scalar>& states) {
  if (states.rows() != bundle.dim()) {
    throw UsageError("exact_qfi_batch: state and bundle dimensions differ");
  }
  MatrixC<Scalar> phi;
  MatrixC<Scalar> dphi;
  parallel_product(phi, bundle.U, states);
  parallel_product(dphi, bundle.dU, states);
  std::vector<QfiValue<Scalar>> out(static_cast<std::size_t>(states.cols()));
  for (Eigen::Index c = 0; c < states.cols(); ++c) {
    out[static_cast<std::size_t>(c)] = qfi_from_images<Scalar>(phi.col(c), dphi.col(c));
  }
  return out;
}

/// Unitarity defect max |U^dagger U - 1|.
template <typename Scalar>
Scalar unitarity_defect(const MatrixC<Scalar>& u) {
  MatrixC<Scalar> g;
  parallel_product(g, u.adjoint(), u);
  g.diagonal().array() -= Scalar(1);
  return g.cwiseAbs().maxCoeff();
}

}  // namespace qfisc

#endif  // QFISC_FLOQUET_HPP
