#ifndef QFISC_SPIN_ALGEBRA_HPP
#define QFISC_SPIN_ALGEBRA_HPP

#include <cmath>
#include <cstdint>
#include <sstream>
#include <string>

#include "qfisc/types.hpp"

namespace qfisc {

/// Nonnegative half-integer spin quantum number, stored as 2J.
class HalfInteger {
 public:
  constexpr HalfInteger() = default;

  static HalfInteger from_twice(std::int64_t twice) {
    if (twice < 0) throw DomainError("spin quantum number must be nonnegative");
    HalfInteger h;
    h.twice_ = twice;
    return h;
  }

  static HalfInteger from_double(double j) {
    const double twice = 2.0 * j;
    if (!std::isfinite(j) || j < 0.0 || std::abs(twice - std::round(twice)) > 1e-12) {
      std::ostringstream msg;
      msg << "J = " << j << " is not a nonnegative half-integer";
      throw DomainError(msg.str());
    }
    return from_twice(static_cast<std::int64_t>(std::llround(twice)));
  }

  constexpr std::int64_t twice() const { return twice_; }
  constexpr double value() const { return 0.5 * static_cast<double>(twice_); }
  constexpr Eigen::Index dim() const { return static_cast<Eigen::Index>(twice_ + 1); }

 private:
  std::int64_t twice_ = 0;
};

/// Collective-spin operators for one J in the J_z eigenbasis.
///
/// Basis index i labels |J, m> with m = J - i, so J_z = diag(J, J-1, ..., -J)
/// and J_+ is supported on the superdiagonal. J_y is stored through its
/// eigendecomposition J_y = V_y J_z V_y^dagger with
/// V_y = diag(row_phases) * W * diag(column_phases), W real orthogonal. The
/// columns of V_y are ordered like the J_z diagonal and each has its first
/// significant component real and positive.
template <typename Scalar = double>
class SpinOperators {
 public:
  using Real = Scalar;
  using Cplx = std::complex<Scalar>;

  HalfInteger spin() const { return spin_; }
  Scalar j() const { return Scalar(spin_.value()); }
  Eigen::Index dim() const { return spin_.dim(); }

  /// m values, i.e. the diagonal of J_z.
  const VectorR<Scalar>& jz_diagonal() const { return m_; }
  /// (J_+)_{i,i+1} = sqrt((J+m_i)(J-m_i+1)).
  const VectorR<Scalar>& jplus_superdiagonal() const { return jplus_; }
  /// J_y eigenvalues in column order of V_y (equal to the J_z diagonal).
  const VectorR<Scalar>& jy_eigenvalues() const { return jy_eigenvalues_; }

  const MatrixR<Scalar>& jy_eigenvectors_real() const { return w_; }
  const VectorC<Scalar>& row_phases() const { return row_phases_; }
  const VectorC<Scalar>& column_phases() const { return column_phases_; }

  MatrixR<Scalar> jz() const { return m_.asDiagonal(); }

  MatrixR<Scalar> jplus() const {
    MatrixR<Scalar> out = MatrixR<Scalar>::Zero(dim(), dim());
    for (Eigen::Index i = 0; i + 1 < dim(); ++i) out(i, i + 1) = jplus_(i);
    return out;
  }

  /// J_y = i (J_+^dagger - J_+) / 2.
  MatrixC<Scalar> jy() const {
    const MatrixC<Scalar> jp = jplus().template cast<Cplx>();
    return Cplx(0, Scalar(0.5)) * (jp.adjoint() - jp);
  }

  MatrixC<Scalar> jx() const {
    const MatrixC<Scalar> jp = jplus().template cast<Cplx>();
    return Scalar(0.5) * (jp.adjoint() + jp);
  }

  MatrixC<Scalar> vy() const {
    return row_phases_.asDiagonal() * w_.template cast<Cplx>() * column_phases_.asDiagonal();
  }

  /// (J_y)_{i,i+1}; the subdiagonal is its conjugate.
  Cplx jy_superdiagonal(Eigen::Index i) const { return Cplx(0, -Scalar(0.5) * jplus_(i)); }

  /// m * J_y for a dense m, in O(rows * dim).
  template <typename Derived>
  MatrixC<Scalar> right_multiply_jy(const Eigen::MatrixBase<Derived>& mat) const {
    const Eigen::Index n = dim();
    MatrixC<Scalar> out = MatrixC<Scalar>::Zero(mat.rows(), n);
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j > 0) out.col(j) += mat.col(j - 1) * jy_superdiagonal(j - 1);
      if (j + 1 < n) out.col(j) += mat.col(j + 1) * std::conj(jy_superdiagonal(j));
    }
    return out;
  }

  /// J_y * v in O(dim).
  VectorC<Scalar> apply_jy(const VectorC<Scalar>& v) const {
    const Eigen::Index n = dim();
    VectorC<Scalar> out = VectorC<Scalar>::Zero(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      if (i + 1 < n) out(i) += jy_superdiagonal(i) * v(i + 1);
      if (i > 0) out(i) += std::conj(jy_superdiagonal(i - 1)) * v(i - 1);
    }
    return out;
  }

  template <typename S>
  friend SpinOperators<S> build_spin_operators(HalfInteger spin);

 private:
  HalfInteger spin_;
  VectorR<Scalar> m_;
  VectorR<Scalar> jplus_;
  VectorR<Scalar> jy_eigenvalues_;
  MatrixR<Scalar> w_;
  VectorC<Scalar> row_phases_;
  VectorC<Scalar> column_phases_;
};

/// Builds J_z, J_+ and the J_y eigenbasis.
///
/// J_y is tridiagonal in the J_z basis with purely imaginary off-diagonal
/// entries; the diagonal unitary D = diag(i^n) maps it to the real symmetric
/// tridiagonal T = D^dagger J_y D, which is handed to the tridiagonal QL solver.
template <typename Scalar = double>
SpinOperators<Scalar> build_spin_operators(HalfInteger spin) {
  using Cplx = std::complex<Scalar>;
  SpinOperators<Scalar> ops;
  ops.spin_ = spin;
  const Eigen::Index n = spin.dim();
  const Scalar j = Scalar(spin.value());

  ops.m_.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) ops.m_(i) = j - Scalar(i);

  ops.jplus_.resize(std::max<Eigen::Index>(n - 1, 0));
  for (Eigen::Index i = 0; i + 1 < n; ++i) {
    ops.jplus_(i) = std::sqrt(Scalar(spin.twice() - i) * Scalar(i + 1));
  }

  ops.row_phases_.resize(n);
  static const Cplx kPowersOfI[4] = {Cplx(1, 0), Cplx(0, 1), Cplx(-1, 0), Cplx(0, -1)};
  for (Eigen::Index i = 0; i < n; ++i) ops.row_phases_(i) = kPowersOfI[i % 4];

  if (n == 1) {
    ops.w_ = MatrixR<Scalar>::Ones(1, 1);
    ops.jy_eigenvalues_ = VectorR<Scalar>::Zero(1);
    ops.column_phases_ = VectorC<Scalar>::Ones(1);
    return ops;
  }

  const VectorR<Scalar> diag = VectorR<Scalar>::Zero(n);
  const VectorR<Scalar> sub = Scalar(0.5) * ops.jplus_;
  {
    Eigen::SelfAdjointEigenSolver<MatrixR<Scalar>> solver;
    solver.computeFromTridiagonal(diag, sub, Eigen::ComputeEigenvectors);
    if (solver.info() != Eigen::Success) {
      std::ostringstream msg;
      msg << "J_y eigensolve did not converge for J = " << j << " (dim " << n << ")";
      throw NumericalError(msg.str());
    }
    // Ascending eigenvalues; reverse to match J_z = diag(J, ..., -J).
    ops.jy_eigenvalues_ = solver.eigenvalues().reverse();
    ops.w_ = solver.eigenvectors().rowwise().reverse();
  }

  Scalar worst = 0;
  for (Eigen::Index c = 0; c < n; ++c) {
    worst = std::max(worst, std::abs(ops.jy_eigenvalues_(c) - ops.m_(c)));
  }
  const Scalar tol = Scalar(1e-9) * std::max<Scalar>(Scalar(1), j);
  if (!(worst <= tol)) {
    std::ostringstream msg;
    msg << "J_y spectrum deviates from {-J..J} by " << worst << " for J = " << j;
    throw NumericalError(msg.str());
  }

  ops.column_phases_.resize(n);
  for (Eigen::Index c = 0; c < n; ++c) {
    const auto col = ops.w_.col(c);
    const Scalar threshold = Scalar(1e-10) * col.cwiseAbs().maxCoeff();
    Eigen::Index first = 0;
    while (first < n && std::abs(col(first)) <= threshold) ++first;
    const Cplx lead = ops.row_phases_(first) * col(first);
    ops.column_phases_(c) = std::conj(lead) / std::abs(lead);
  }
  return ops;
}

template <typename Scalar = double>
SpinOperators<Scalar> build_spin_operators(double j) {
  return build_spin_operators<Scalar>(HalfInteger::from_double(j));
}

/// SU(2) spin-coherent state |J, theta, phi> in the J_z basis.
template <typename Scalar = double>
struct CoherentStateVector {
  HalfInteger spin;
  Scalar theta{0};
  Scalar phi{0};
  VectorC<Scalar> amplitudes;
};

/// Amplitude of |J, m> is sqrt(C(2J, J-m)) (e^{i phi} sin(theta/2))^{J-m}
/// cos(theta/2)^{J+m}; magnitudes are evaluated in log space.
template <typename Scalar = double>
CoherentStateVector<Scalar> coherent_state(HalfInteger spin, Scalar theta, Scalar phi) {
  if (!(theta >= Scalar(0) && theta <= kPi<Scalar>)) {
    throw DomainError("coherent_state: theta must lie in [0, pi]");
  }
  const Eigen::Index n = spin.dim();
  const auto twice = static_cast<Scalar>(spin.twice());
  const Scalar s = std::sin(theta / 2);
  const Scalar c = std::cos(theta / 2);
  const Scalar log_s = std::log(s);
  const Scalar log_c = std::log(c);
  const Scalar lg_total = std::lgamma(twice + 1);

  CoherentStateVector<Scalar> out{spin, theta, phi, VectorC<Scalar>(n)};
  for (Eigen::Index i = 0; i < n; ++i) {
    const Scalar down = Scalar(i);  // J - m
    const Scalar up = twice - down; // J + m
    const Scalar log_binom = lg_total - std::lgamma(down + 1) - std::lgamma(up + 1);
    // 0^0 = 1 at the poles.
    const Scalar sin_part = down == 0 ? Scalar(0) : down * log_s;
    const Scalar cos_part = up == 0 ? Scalar(0) : up * log_c;
    const Scalar log_mag = Scalar(0.5) * log_binom + sin_part + cos_part;
    const Scalar mag = std::isfinite(log_mag) ? std::exp(log_mag) : Scalar(0);
    out.amplitudes(i) = std::polar(mag, std::fmod(down * phi, 2 * kPi<Scalar>));
  }
  return out;
}

template <typename Scalar = double>
CoherentStateVector<Scalar> coherent_state(double j, Scalar theta, Scalar phi) {
  return coherent_state<Scalar>(HalfInteger::from_double(j), theta, phi);
}

}  // namespace qfisc

#endif  // QFISC_SPIN_ALGEBRA_HPP
