#ifndef QFISC_LINALG_HPP
#define QFISC_LINALG_HPP

#include <algorithm>
#include <cstddef>
#include <span>
#include <vector>

#include "qfisc/types.hpp"

namespace qfisc {

// Columns per panel in parallel_product. Fixed so that every output column is
// produced by the same single-threaded kernel call whatever the thread count.
inline constexpr Eigen::Index kProductPanel = 256;

/// dst = lhs * rhs, parallel over fixed-width column panels of rhs.
/// `dst` must not alias `lhs` or `rhs`.
template <typename Dst, typename Lhs, typename Rhs>
void parallel_product(Dst& dst, const Lhs& lhs, const Rhs& rhs) {
  const Eigen::Index cols = rhs.cols();
  dst.resize(lhs.rows(), cols);
  const Eigen::Index panels = (cols + kProductPanel - 1) / kProductPanel;
#pragma omp parallel for schedule(static)
  for (Eigen::Index p = 0; p < panels; ++p) {
    const Eigen::Index c0 = p * kProductPanel;
    const Eigen::Index w = std::min(kProductPanel, cols - c0);
    dst.middleCols(c0, w).noalias() = lhs * rhs.middleCols(c0, w);
  }
}

/// dst += lhs * rhs with the same panel decomposition as parallel_product.
template <typename Dst, typename Lhs, typename Rhs>
void parallel_product_add(Dst& dst, const Lhs& lhs, const Rhs& rhs) {
  const Eigen::Index cols = rhs.cols();
  const Eigen::Index panels = (cols + kProductPanel - 1) / kProductPanel;
#pragma omp parallel for schedule(static)
  for (Eigen::Index p = 0; p < panels; ++p) {
    const Eigen::Index c0 = p * kProductPanel;
    const Eigen::Index w = std::min(kProductPanel, cols - c0);
    dst.middleCols(c0, w).noalias() += lhs * rhs.middleCols(c0, w);
  }
}

/// Neumaier-compensated running sum.
template <typename Scalar>
class CompensatedSum {
 public:
  void add(Scalar x) {
    const Scalar t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x)) {
      comp_ += (sum_ - t) + x;
    } else {
      comp_ += (x - t) + sum_;
    }
    sum_ = t;
  }
  Scalar value() const { return sum_ + comp_; }

 private:
  Scalar sum_{0};
  Scalar comp_{0};
};

/// Pairwise (tree) summation in a fixed order.
template <typename Scalar>
Scalar pairwise_sum(std::span<const Scalar> xs) {
  if (xs.size() <= 8) {
    Scalar s{0};
    for (Scalar x : xs) s += x;
    return s;
  }
  const std::size_t half = xs.size() / 2;
  return pairwise_sum(xs.first(half)) + pairwise_sum(xs.subspan(half));
}

template <typename Scalar>
struct MeanVariance {
  Scalar mean{0};
  Scalar variance{0};
};

/// Unweighted mean and population variance, both by pairwise summation.
template <typename Scalar>
MeanVariance<Scalar> mean_variance(std::span<const Scalar> xs) {
  if (xs.empty()) throw UsageError("mean_variance: empty input");
  const Scalar n = Scalar(xs.size());
  const Scalar mean = pairwise_sum(xs) / n;
  std::vector<Scalar> sq(xs.size());
  std::transform(xs.begin(), xs.end(), sq.begin(), [mean](Scalar x) {
    const Scalar d = x - mean;
    return d * d;
  });
  return {mean, pairwise_sum<Scalar>(sq) / n};
}

/// Weighted population variance by West's single-pass update. Weights need
/// not be normalised; zero weights are skipped.
template <typename Scalar>
MeanVariance<Scalar> weighted_mean_variance(std::span<const Scalar> values,
                                            std::span<const Scalar> weights) {
  if (values.size() != weights.size()) {
    throw UsageError("weighted_mean_variance: size mismatch");
  }
  Scalar wsum{0};
  Scalar mean{0};
  Scalar m2{0};
  for (std::size_t i = 0; i < values.size(); ++i) {
    const Scalar w = weights[i];
    if (w == Scalar(0)) continue;
    wsum += w;
    const Scalar d = values[i] - mean;
    mean += (w / wsum) * d;
    m2 += w * d * (values[i] - mean);
  }
  if (wsum <= Scalar(0)) throw UsageError("weighted_mean_variance: zero total weight");
  return {mean, std::max(Scalar(0), m2 / wsum)};
}

}  // namespace qfisc

#endif  // QFISC_LINALG_HPP
