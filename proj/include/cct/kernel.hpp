#pragma once

#include <cmath>
#include <concepts>
#include <cstddef>
#include <numbers>

#include "cct/dataset.hpp"
#include "cct/errors.hpp"
#include "cct/random.hpp"

namespace cct {

enum class KernelFamily { gaussian, box };

/// Volume of the d-dimensional Euclidean ball of the given radius.
inline double ball_volume(Index dim, double radius) {
  const double d = static_cast<double>(dim);
  return std::pow(std::numbers::pi, d / 2.0) * std::pow(radius, d) / std::tgamma(d / 2.0 + 1.0);
}

/// Localization kernel H(x, x') = h^{-d} K((x - x') / h).
///
/// Gaussian: K is the standard normal density. Box: K is uniform on the
/// ball of radius sqrt(2).
class KernelSpec {
 public:
  KernelSpec(KernelFamily family, double bandwidth, Index dim)
      : family_(family), bandwidth_(bandwidth), dim_(dim) {
    if (!(bandwidth > 0.0) || !std::isfinite(bandwidth)) {
      throw argument_error("kernel bandwidth must be positive and finite");
    }
    if (dim < 1) throw argument_error("kernel dimension must be at least 1");
    const double d = static_cast<double>(dim);
    if (family == KernelFamily::gaussian) {
      peak_ = std::pow(2.0 * std::numbers::pi * bandwidth * bandwidth, -d / 2.0);
    } else {
      peak_ = 1.0 / (ball_volume(dim, std::numbers::sqrt2) * std::pow(bandwidth, d));
    }
  }

  KernelFamily family() const noexcept { return family_; }
  double bandwidth() const noexcept { return bandwidth_; }
  Index dim() const noexcept { return dim_; }

  /// H(x, x), the maximum of the kernel.
  double peak() const noexcept { return peak_; }

  double weight(VectorRef x, VectorRef y) const {
    if (x.size() != dim_ || y.size() != dim_) {
      throw argument_error("kernel_weight: dimension mismatch");
    }
    const double sq = (x - y).squaredNorm();
    if (family_ == KernelFamily::gaussian) {
      return peak_ * std::exp(-sq / (2.0 * bandwidth_ * bandwidth_));
    }
    return sq <= 2.0 * bandwidth_ * bandwidth_ ? peak_ : 0.0;
  }

  /// Draw from the density H(center, .).
  Vector sample(VectorRef center, RandomStream& rng) const {
    if (center.size() != dim_) {
      throw argument_error("sample_localization_point: dimension mismatch");
    }
    Vector z(dim_);
    for (Index k = 0; k < dim_; ++k) z(k) = rng.normal();
    if (family_ == KernelFamily::gaussian) {
      return center + bandwidth_ * z;
    }
    // Uniform on the ball: isotropic direction, radius density ~ r^{d-1}.
    const double norm = z.norm();
    const double radius = std::numbers::sqrt2 * bandwidth_ *
                          std::pow(rng.uniform(), 1.0 / static_cast<double>(dim_));
    return center + (radius / norm) * z;
  }

 private:
  KernelFamily family_;
  double bandwidth_;
  Index dim_;
  double peak_ = 0.0;
};

/// Anything that can weight pairs of points and sample localization points.
/// KernelSpec is the production model; tests substitute constant kernels.
template <class K>
concept LocalizationKernel = requires(const K& k, VectorRef x, RandomStream& rng) {
  { k.weight(x, x) } -> std::convertible_to<double>;
  { k.sample(x, rng) } -> std::convertible_to<Vector>;
};

inline double kernel_weight(const KernelSpec& spec, VectorRef x, VectorRef y) {
  return spec.weight(x, y);
}

inline Vector sample_localization_point(const KernelSpec& spec, VectorRef x, RandomStream& rng) {
  return spec.sample(x, rng);
}

/// h = (n / 2)^{-1 / (d_w + 2)}.
inline double default_bandwidth(std::size_t n, std::size_t weighting_dim) {
  if (n < 2) throw argument_error("default_bandwidth: n must be at least 2");
  if (weighting_dim < 1) throw argument_error("default_bandwidth: dimension must be at least 1");
  return std::pow(static_cast<double>(n) / 2.0, -1.0 / (static_cast<double>(weighting_dim) + 2.0));
}

}  // namespace cct
