#pragma once

// Simulation distributions and bootstrap resampling.

#include <Eigen/Dense>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <variant>
#include <vector>

#include "uniqtest/errors.hpp"
#include "uniqtest/geometry.hpp"
#include "uniqtest/rng.hpp"

namespace uniqtest {

/// 0.5 N_w(a, sd) + 0.5 N_w(pi - a, sd); the null case is a = 0.
struct CircleNullMixture {
  double a = 0.0;
  double sd = std::numbers::pi / 50.0;  ///< standard deviation of the wrapped normal
};

/// X = (Y, sqrt(1 - Y^2) Z), Y ~ N(0, variance), Z uniform on S^(p-1).
/// Fréchet means at the two poles (+-1, 0, ..., 0).
struct SpherePoleNull {
  int p = 2;
  /// Variance of the polar coordinate; negative selects the default 1e-6 / p^2.
  double variance = -1.0;

  double effective_variance() const { return variance < 0.0 ? 1e-6 / (p * static_cast<double>(p)) : variance; }
};

/// Draw with replacement from a fixed set of angles.
struct EmpiricalCircle {
  std::vector<Angle> support;
};

/// Draw with replacement from a fixed set of sphere points.
struct EmpiricalSphere {
  std::vector<SpherePoint> support;
};

using SimDistribution = std::variant<CircleNullMixture, SpherePoleNull, EmpiricalCircle, EmpiricalSphere>;

inline std::vector<Angle> sample_circle_mixture(double a, double sd, std::size_t n, RngStream& stream) {
  if (n < 1) throw DataError("sample size must be at least 1");
  if (!(sd >= 0.0)) throw DataError("wrapped normal sd must be nonnegative");
  std::vector<Angle> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double center = stream.uniform() < 0.5 ? a : std::numbers::pi - a;
    out.emplace_back(center + sd * stream.normal());
  }
  return out;
}

inline std::vector<SpherePoint> sample_uniform_sphere(int p, std::size_t n, RngStream& stream) {
  if (p < 1) throw DataError("sphere dimension must be at least 1");
  std::vector<SpherePoint> out;
  out.reserve(n);
  Eigen::VectorXd v(p + 1);
  for (std::size_t i = 0; i < n; ++i) {
    do {
      for (int k = 0; k <= p; ++k) v(k) = stream.normal();
    } while (v.squaredNorm() < 1e-300);
    out.emplace_back(v);
  }
  return out;
}

inline std::vector<SpherePoint> sample_sphere_pole_null(int p, std::size_t n, RngStream& stream,
                                                        double variance = -1.0) {
  if (p < 2) throw DataError("pole null needs p >= 2");
  const double sd = std::sqrt(SpherePoleNull{p, variance}.effective_variance());
  std::vector<SpherePoint> out;
  out.reserve(n);
  Eigen::VectorXd x(p + 1);
  Eigen::VectorXd z(p);
  for (std::size_t i = 0; i < n; ++i) {
    const double y = std::clamp(sd * stream.normal(), -1.0, 1.0);
    do {
      for (int k = 0; k < p; ++k) z(k) = stream.normal();
    } while (z.squaredNorm() < 1e-300);
    z.normalize();
    x(0) = y;
    x.tail(p) = std::sqrt(1.0 - y * y) * z;
    out.emplace_back(x);
  }
  return out;
}

/// n i.i.d. uniform indices in [0, n): one n-out-of-n bootstrap resample.
inline std::vector<std::size_t> resample_indices(std::size_t n, RngStream& stream) {
  std::vector<std::size_t> idx(n);
  for (auto& i : idx) i = static_cast<std::size_t>(stream.below(n));
  return idx;
}

/// Resample expressed as weights count_i / n over the original points.
inline std::vector<double> resample_weights(std::size_t n, RngStream& stream) {
  std::vector<double> w(n, 0.0);
  const double unit = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) w[static_cast<std::size_t>(stream.below(n))] += unit;
  return w;
}

inline std::vector<double> weights_from_indices(std::size_t n, std::span<const std::size_t> indices) {
  std::vector<double> w(n, 0.0);
  const double unit = 1.0 / static_cast<double>(indices.size());
  for (auto i : indices) {
    if (i >= n) throw DataError("resample index out of range");
    w[i] += unit;
  }
  return w;
}

}  // namespace uniqtest
