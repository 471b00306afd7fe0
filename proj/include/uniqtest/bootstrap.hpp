#pragma once

// n-out-of-n bootstrap of an m-estimator and the scalar summaries of the
// bootstrap descriptors: d_j = d(mu_hat, mu*_j) and, on spaces with a log
// map, ell_j = |first principal score of log_{mu_hat}(mu*_j)|.
//
// Streams: the sample fit uses task index kSampleFitTask; replicate j uses
// RngStream(seed, j) with substreams 0/1 for resampling/fitting and 2/3 for
// the single retry.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "uniqtest/errors.hpp"
#include "uniqtest/geometry.hpp"
#include "uniqtest/parallel.hpp"
#include "uniqtest/problem.hpp"
#include "uniqtest/rng.hpp"
#include "uniqtest/sampling.hpp"

namespace uniqtest {

inline constexpr std::uint64_t kSampleFitTask = std::numeric_limits<std::uint64_t>::max();
inline constexpr double kMaxDroppedFraction = 0.01;

template <class Descriptor>
struct BootstrapSet {
  std::vector<Descriptor> descriptors;  ///< kept replicates, by replicate index
  std::vector<double> losses;           ///< bootstrap Fréchet variance of each kept replicate
  std::vector<double> d;
  std::optional<std::vector<double>> ell;
  std::vector<std::size_t> replicate_index;  ///< original j of each kept replicate
  FitResult<Descriptor> sample_fit;
  std::uint64_t seed = 0;
  std::size_t B = 0;
  std::size_t dropped = 0;

  std::size_t kept() const { return d.size(); }
};

struct BootstrapOptions {
  bool compute_ell = true;  ///< ignored for problems without a log map
  unsigned threads = 0;     ///< 0: default_thread_count()
};

template <MEstimationProblem P>
FitResult<typename P::Descriptor> fit_sample(const P& problem, std::uint64_t seed) {
  RngStream stream(seed, kSampleFitTask);
  return problem.fit(uniform_weights(problem.size()), stream, nullptr);
}

template <MEstimationProblem P>
BootstrapSet<typename P::Descriptor> run_bootstrap(const P& problem, std::size_t B, std::uint64_t seed,
                                                   BootstrapOptions options = {}) {
  using D = typename P::Descriptor;
  if (B < 100) throw DataError("bootstrap needs B >= 100");
  constexpr bool has_log = HasTangentSpace<P>;
  const bool want_ell = has_log && options.compute_ell;

  BootstrapSet<D> out{{}, {}, {}, {}, {}, fit_sample(problem, seed)};
  out.seed = seed;
  out.B = B;
  const D& center = out.sample_fit.descriptor;
  const std::size_t n = problem.size();

  struct Replicate {
    std::optional<D> descriptor;
    double loss = 0.0;
    double d = 0.0;
    Eigen::VectorXd log;
  };
  std::vector<Replicate> reps(B);
  parallel_for(
      B,
      [&](std::size_t j) {
        RngStream stream(seed, j);
        for (std::uint64_t attempt = 0; attempt < 2; ++attempt) {
          try {
            RngStream resample = stream.substream(2 * attempt);
            RngStream fitting = stream.substream(2 * attempt + 1);
            const auto weights = resample_weights(n, resample);
            auto fit = problem.fit(weights, fitting, &center);
            Replicate r;
            r.d = problem.distance(center, fit.descriptor);
            if constexpr (has_log) {
              if (want_ell) r.log = problem.log(center, fit.descriptor);
            }
            r.loss = fit.loss;
            r.descriptor = std::move(fit.descriptor);
            reps[j] = std::move(r);
            return;
          } catch (const NumericError&) {
          }
        }
      },
      options.threads);

  std::vector<Eigen::VectorXd> logs;
  for (std::size_t j = 0; j < B; ++j) {
    auto& r = reps[j];
    if (!r.descriptor) {
      ++out.dropped;
      continue;
    }
    out.descriptors.push_back(std::move(*r.descriptor));
    out.losses.push_back(r.loss);
    out.d.push_back(r.d);
    out.replicate_index.push_back(j);
    if (want_ell) logs.push_back(std::move(r.log));
  }
  if (static_cast<double>(out.dropped) > kMaxDroppedFraction * static_cast<double>(B))
    throw NumericError("bootstrap dropped " + std::to_string(out.dropped) + " of " + std::to_string(B) +
                       " replicates");
  if (want_ell) {
    const bool all_zero = std::all_of(logs.begin(), logs.end(), [](const auto& v) { return v.squaredNorm() == 0.0; });
    std::vector<double> ell(logs.size(), 0.0);
    if (!all_zero) {
      const auto axis = first_principal_axis(logs);
      for (std::size_t j = 0; j < ell.size(); ++j) ell[j] = std::abs(axis.scores[j]);
    }
    out.ell = std::move(ell);
  }
  return out;
}

/// Problems that can minimize the weighted Fréchet function over a ball.
template <class P>
concept HasLocalFit = MEstimationProblem<P> && requires(const P& problem, std::span<const double> w,
                                                        const typename P::Descriptor& a, double r) {
  { problem.local_fit(w, a, r) } -> std::same_as<LocalMinimum<typename P::Descriptor>>;
};

/// Half the smallest pairwise anchor distance.
template <MEstimationProblem P>
double default_anchor_radius(const P& problem, std::span<const typename P::Descriptor> anchors) {
  if (anchors.size() < 2) throw DataError("need at least two anchors");
  double gap = std::numeric_limits<double>::infinity();
  for (std::size_t a = 0; a < anchors.size(); ++a)
    for (std::size_t b = a + 1; b < anchors.size(); ++b) gap = std::min(gap, problem.distance(anchors[a], anchors[b]));
  return 0.5 * gap;
}

/// Row j, column i: minimal Fréchet function of weight row j over the ball of
/// the given radius around anchor i.
template <HasLocalFit P>
Eigen::MatrixXd local_loss_matrix(const P& problem, std::span<const typename P::Descriptor> anchors, double radius,
                                  std::span<const std::vector<double>> weight_rows, unsigned threads = 0) {
  if (anchors.empty()) throw DataError("need at least one anchor");
  if (!(radius > 0.0)) throw DataError("anchor radius must be positive");
  const double tol = 1e-12 * std::max(1.0, 2.0 * radius);
  for (std::size_t a = 0; a < anchors.size(); ++a)
    for (std::size_t b = a + 1; b < anchors.size(); ++b)
      if (problem.distance(anchors[a], anchors[b]) < 2.0 * radius - tol)
        throw DataError("anchors closer than twice the local radius");
  Eigen::MatrixXd out(static_cast<Eigen::Index>(weight_rows.size()), static_cast<Eigen::Index>(anchors.size()));
  parallel_for(
      weight_rows.size(),
      [&](std::size_t j) {
        for (std::size_t i = 0; i < anchors.size(); ++i)
          out(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) =
              problem.local_fit(weight_rows[j], anchors[i], radius).loss;
      },
      threads);
  return out;
}

/// B x m matrix of bootstrap local losses V*^i, resamples drawn from
/// RngStream(seed, j).substream(0).
template <HasLocalFit P>
Eigen::MatrixXd bootstrap_loss_vector(const P& problem, std::span<const typename P::Descriptor> anchors,
                                      double radius, std::size_t B, std::uint64_t seed, unsigned threads = 0) {
  std::vector<std::vector<double>> rows(B);
  for (std::size_t j = 0; j < B; ++j) {
    RngStream resample = RngStream(seed, j).substream(0);
    rows[j] = resample_weights(problem.size(), resample);
  }
  return local_loss_matrix(problem, anchors, radius, std::span<const std::vector<double>>(rows), threads);
}

}  // namespace uniqtest
