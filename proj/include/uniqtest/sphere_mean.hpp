#pragma once

// Intrinsic Fréchet mean on S^p by multi-start Riemannian fixed-point
// iteration  mu <- exp_mu( sum_i w_i log_mu(x_i) ).

#include <Eigen/Dense>
#include <cmath>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "uniqtest/errors.hpp"
#include "uniqtest/geometry.hpp"
#include "uniqtest/problem.hpp"
#include "uniqtest/rng.hpp"

namespace uniqtest {

struct SphereMeanConfig {
  int starts = 10;
  double tol = 1e-11;  ///< stop when the step norm falls below this
  int max_iter = 2000;
  double merge_radius = 1e-3;
  int perturbed_restarts = 3;  ///< per start, after hitting the cut locus
};

class SphereMeanProblem {
 public:
  using Descriptor = SpherePoint;

  explicit SphereMeanProblem(std::vector<SpherePoint> points, SphereMeanConfig config = {})
      : points_(std::move(points)), config_(config) {
    if (points_.empty()) throw DataError("sphere mean of an empty sample");
    for (const auto& x : points_)
      if (x.ambient_dim() != points_.front().ambient_dim()) throw DataError("sphere points of mixed dimension");
    if (config_.starts < 1) throw DataError("need at least one start");
  }

  std::size_t size() const { return points_.size(); }
  std::string id() const { return "sphere-mean"; }
  Eigen::Index dim() const { return points_.front().dim(); }
  const std::vector<SpherePoint>& data() const { return points_; }

  double loss(const SpherePoint& p, std::span<const double> weights) const {
    check_weights(weights);
    double f = 0.0;
    for (std::size_t i = 0; i < points_.size(); ++i) {
      if (weights[i] == 0.0) continue;
      const double d = sphere_distance(p, points_[i]);
      f += weights[i] * d * d;
    }
    return f;
  }

  double distance(const SpherePoint& a, const SpherePoint& b) const { return sphere_distance(a, b); }

  Eigen::VectorXd log(const SpherePoint& base, const SpherePoint& q) const { return log_map_vec(base, q); }

  FitResult<SpherePoint> fit(std::span<const double> weights, RngStream& stream,
                             const SpherePoint* warm_start) const {
    check_weights(weights);
    std::vector<std::size_t> support;
    for (std::size_t i = 0; i < points_.size(); ++i)
      if (weights[i] > 0.0) support.push_back(i);
    if (support.empty()) throw DataError("all weights are zero");

    std::vector<SpherePoint> starts;
    if (warm_start) starts.push_back(*warm_start);
    Eigen::VectorXd extrinsic = Eigen::VectorXd::Zero(points_.front().ambient_dim());
    for (auto i : support) extrinsic += weights[i] * points_[i].coords();
    const int random_starts = extrinsic.norm() > 1e-12 ? config_.starts - 1 : config_.starts;
    if (extrinsic.norm() > 1e-12) starts.emplace_back(extrinsic);
    for (int s = 0; s < random_starts; ++s) starts.push_back(points_[support[stream.below(support.size())]]);

    std::vector<LocalMinimum<SpherePoint>> candidates;
    for (std::size_t s = 0; s < starts.size(); ++s) {
      RngStream perturb = stream.substream(s);
      if (auto mu = descend(starts[s], weights, support, perturb))
        candidates.push_back({*mu, loss(*mu, weights)});
    }
    if (candidates.empty()) throw NumericError("sphere mean: every start failed at the cut locus");
    auto minima = merge_minima(std::move(candidates), config_.merge_radius,
                               [](const SpherePoint& a, const SpherePoint& b) { return sphere_distance(a, b); });
    FitResult<SpherePoint> out{minima.front().descriptor, minima.front().loss, std::move(minima),
                               static_cast<int>(starts.size())};
    return out;
  }

  FitResult<SpherePoint> fit(std::span<const double> weights, RngStream& stream) const {
    return fit(weights, stream, nullptr);
  }

  /// Minimum of F over the closed geodesic ball B_radius(anchor), by projected
  /// fixed-point iteration started at the anchor.
  LocalMinimum<SpherePoint> local_fit(std::span<const double> weights, const SpherePoint& anchor,
                                      double radius) const {
    check_weights(weights);
    if (!(radius > 0.0) || radius >= std::numbers::pi) throw DataError("local fit radius must be in (0, pi)");
    SpherePoint mu = anchor;
    for (int it = 0; it < config_.max_iter; ++it) {
      Eigen::VectorXd step = mean_log(mu, weights);
      SpherePoint next = exp_map(mu, step);
      const double from_anchor = sphere_distance(anchor, next);
      if (from_anchor > radius) {
        const Eigen::VectorXd dir = log_map_vec(anchor, next);
        next = exp_map(anchor, (radius / dir.norm()) * dir);
      }
      const double moved = sphere_distance(mu, next);
      mu = next;
      if (moved < config_.tol) break;
    }
    return {mu, loss(mu, weights)};
  }

 private:
  void check_weights(std::span<const double> weights) const {
    if (weights.size() != points_.size()) throw DataError("weight vector length does not match sample size");
  }

  Eigen::VectorXd mean_log(const SpherePoint& mu, std::span<const double> weights) const {
    Eigen::VectorXd step = Eigen::VectorXd::Zero(mu.ambient_dim());
    for (std::size_t i = 0; i < points_.size(); ++i)
      if (weights[i] > 0.0) step += weights[i] * log_map_vec(mu, points_[i]);
    return step;
  }

  std::optional<SpherePoint> descend(const SpherePoint& start, std::span<const double> weights,
                                     const std::vector<std::size_t>& support, RngStream& perturb) const {
    SpherePoint origin = start;
    for (int attempt = 0; attempt <= config_.perturbed_restarts; ++attempt) {
      try {
        SpherePoint mu = origin;
        for (int it = 0; it < config_.max_iter; ++it) {
          Eigen::VectorXd step = Eigen::VectorXd::Zero(mu.ambient_dim());
          for (auto i : support) step += weights[i] * log_map_vec(mu, points_[i]);
          mu = exp_map(mu, step);
          if (step.norm() < config_.tol) break;
        }
        return mu;
      } catch (const CutLocusError&) {
        Eigen::VectorXd v(start.ambient_dim());
        for (Eigen::Index k = 0; k < v.size(); ++k) v(k) = perturb.normal();
        v -= v.dot(start.coords()) * start.coords();
        if (v.norm() > 0.0) origin = exp_map(start, (1e-3 / v.norm()) * v);
      }
    }
    return std::nullopt;
  }

  std::vector<SpherePoint> points_;
  SphereMeanConfig config_;
};

inline FitResult<SpherePoint> frechet_mean_sphere(std::vector<SpherePoint> points, std::uint64_t seed = 0,
                                                  SphereMeanConfig config = {}) {
  SphereMeanProblem problem(std::move(points), config);
  RngStream stream(seed, 0);
  return problem.fit(uniform_weights(problem.size()), stream, nullptr);
}

}  // namespace uniqtest
