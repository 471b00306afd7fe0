#pragma once

// Common vocabulary of the m-estimation problems.
//
// A problem owns its sample and evaluates the weighted Fréchet function
//   F_w(descriptor) = sum_i w_i rho(descriptor, x_i),   sum_i w_i = 1.
// Uniform weights give the sample Fréchet function F_n; bootstrap resamples
// are passed as multiplicity weights count_i / n, so a refit never copies data.

#include <Eigen/Dense>
#include <algorithm>
#include <concepts>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "uniqtest/rng.hpp"

namespace uniqtest {

template <class Descriptor>
struct LocalMinimum {
  Descriptor descriptor;
  double loss;
};

template <class Descriptor>
struct FitResult {
  Descriptor descriptor;  ///< global minimizer found
  double loss;            ///< F at descriptor
  std::vector<LocalMinimum<Descriptor>> local_minima;  ///< distinct minima, ascending loss
  int starts_used = 0;
};

/// Interface shared by all estimators consumed by the bootstrap engine.
template <class P>
concept MEstimationProblem = requires(const P& problem, std::span<const double> weights, RngStream& stream,
                                      const typename P::Descriptor& a) {
  typename P::Descriptor;
  { problem.size() } -> std::convertible_to<std::size_t>;
  { problem.id() } -> std::convertible_to<std::string>;
  { problem.loss(a, weights) } -> std::convertible_to<double>;
  { problem.distance(a, a) } -> std::convertible_to<double>;
  { problem.fit(weights, stream, &a) } -> std::same_as<FitResult<typename P::Descriptor>>;
};

/// Problems whose descriptor space carries a log map into a linear tangent
/// space at a base descriptor; these support the PCA-based summary.
template <class P>
concept HasTangentSpace = MEstimationProblem<P> && requires(const P& problem, const typename P::Descriptor& a) {
  { problem.log(a, a) } -> std::convertible_to<Eigen::VectorXd>;
};

inline std::vector<double> uniform_weights(std::size_t n) {
  return std::vector<double>(n, 1.0 / static_cast<double>(n));
}

/// Sorts candidates by loss and keeps those farther than `merge_radius` (under
/// `distance`) from every better one.  The first entry is the global minimum.
template <class Descriptor, class Distance>
std::vector<LocalMinimum<Descriptor>> merge_minima(std::vector<LocalMinimum<Descriptor>> candidates,
                                                   double merge_radius, Distance&& distance) {
  std::stable_sort(candidates.begin(), candidates.end(),
                   [](const auto& x, const auto& y) { return x.loss < y.loss; });
  std::vector<LocalMinimum<Descriptor>> kept;
  for (auto& c : candidates) {
    const bool duplicate = std::any_of(kept.begin(), kept.end(), [&](const auto& k) {
      return distance(k.descriptor, c.descriptor) <= merge_radius;
    });
    if (!duplicate) kept.push_back(std::move(c));
  }
  return kept;
}

}  // namespace uniqtest
