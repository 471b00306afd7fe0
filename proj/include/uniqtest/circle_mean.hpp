#pragma once

// Exact Fréchet mean on the circle, rho(p, x) = d(p, x)^2.
//
// F is piecewise quadratic in the angle: within each arc between consecutive
// antipodes of data points the data can be lifted to a fixed interval of
// length 2*pi, where F is the ordinary variance about the lifted mean.  The
// kinks at antipodes are concave, so every local minimum is the lifted mean of
// some cut that lands inside its own arc.  Enumerating the cuts after one sort
// gives all local minima in O(n) per weight vector.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "uniqtest/errors.hpp"
#include "uniqtest/geometry.hpp"
#include "uniqtest/problem.hpp"

namespace uniqtest {

struct CircleMeanConfig {
  double merge_radius = 1e-3;  ///< radians
};

class CircleMeanProblem {
 public:
  using Descriptor = Angle;

  explicit CircleMeanProblem(std::vector<Angle> angles, CircleMeanConfig config = {})
      : angles_(std::move(angles)), config_(config) {
    if (angles_.empty()) throw DataError("circle mean of an empty sample");
    order_.resize(angles_.size());
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    std::stable_sort(order_.begin(), order_.end(),
                     [&](std::size_t a, std::size_t b) { return angles_[a].value() < angles_[b].value(); });
    sorted_.reserve(angles_.size());
    for (auto i : order_) sorted_.push_back(angles_[i].value());
  }

  std::size_t size() const { return angles_.size(); }
  std::string id() const { return "circle-mean"; }
  const std::vector<Angle>& data() const { return angles_; }
  const CircleMeanConfig& config() const { return config_; }

  double loss(const Angle& p, std::span<const double> weights) const {
    check_weights(weights);
    double f = 0.0;
    for (std::size_t i = 0; i < angles_.size(); ++i) {
      if (weights[i] == 0.0) continue;
      const double d = circle_distance(p, angles_[i]);
      f += weights[i] * d * d;
    }
    return f;
  }

  double distance(const Angle& a, const Angle& b) const { return circle_distance(a, b); }

  /// Log map in the angular chart: a 1-vector holding the signed rotation.
  Eigen::VectorXd log(const Angle& base, const Angle& q) const {
    return Eigen::VectorXd::Constant(1, circle_log(base, q));
  }

  FitResult<Angle> fit(std::span<const double> weights, RngStream& /*stream*/, const Angle* /*warm_start*/) const {
    auto candidates = valid_cuts(weights);
    if (candidates.empty()) throw NumericError("circle mean: no valid cut found");
    const int cuts = static_cast<int>(candidates.size());
    auto minima = merge_minima(std::move(candidates), config_.merge_radius,
                               [](const Angle& a, const Angle& b) { return circle_distance(a, b); });
    // re-evaluate the kept minima directly; the prefix-sum losses are only used for ranking
    for (auto& m : minima) m.loss = loss(m.descriptor, weights);
    std::stable_sort(minima.begin(), minima.end(), [](const auto& x, const auto& y) { return x.loss < y.loss; });
    FitResult<Angle> out{minima.front().descriptor, minima.front().loss, std::move(minima), cuts};
    return out;
  }

  FitResult<Angle> fit(std::span<const double> weights) const {
    RngStream unused(0, 0);
    return fit(weights, unused, nullptr);
  }

  /// Minimum of F over the closed arc of the given radius (< pi) around anchor.
  LocalMinimum<Angle> local_fit(std::span<const double> weights, const Angle& anchor, double radius) const {
    if (!(radius > 0.0) || radius >= std::numbers::pi) throw DataError("local fit radius must be in (0, pi)");
    LocalMinimum<Angle> best{Angle(anchor.value() - radius), 0.0};
    best.loss = loss(best.descriptor, weights);
    const Angle upper(anchor.value() + radius);
    if (const double f = loss(upper, weights); f < best.loss) best = {upper, f};
    for (auto& c : valid_cuts(weights)) {
      if (circle_distance(c.descriptor, anchor) > radius) continue;
      const double f = loss(c.descriptor, weights);
      if (f < best.loss) best = {c.descriptor, f};
    }
    return best;
  }

 private:
  void check_weights(std::span<const double> weights) const {
    if (weights.size() != angles_.size()) throw DataError("weight vector length does not match sample size");
  }

  std::vector<LocalMinimum<Angle>> valid_cuts(std::span<const double> weights) const {
    check_weights(weights);
    constexpr double kPi = std::numbers::pi;
    std::vector<double> x;
    std::vector<double> w;
    x.reserve(sorted_.size());
    w.reserve(sorted_.size());
    for (std::size_t k = 0; k < sorted_.size(); ++k) {
      const double wk = weights[order_[k]];
      if (wk > 0.0) {
        x.push_back(sorted_[k]);
        w.push_back(wk);
      }
    }
    if (x.empty()) throw DataError("all weights are zero");
    const std::size_t m = x.size();
    double total = 0.0, sum = 0.0, sum_sq = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      total += w[i];
      sum += w[i] * x[i];
      sum_sq += w[i] * x[i] * x[i];
    }
    std::vector<LocalMinimum<Angle>> out;
    double lifted_w = 0.0;  // weight of points lifted by 2*pi (indices < k)
    double lifted_x = 0.0;  // their weighted sum before lifting
    constexpr double kSlack = 1e-12;
    for (std::size_t k = 0; k < m; ++k) {
      if (k > 0) {
        lifted_w += w[k - 1];
        lifted_x += w[k - 1] * x[k - 1];
      }
      const double mean = (sum + kTwoPi * lifted_w) / total;
      const double lowest = x[k];
      const double highest = k == 0 ? x[m - 1] : x[k - 1] + kTwoPi;
      if (lowest < mean - kPi - kSlack || highest > mean + kPi + kSlack) continue;
      const double second = (sum_sq + 2.0 * kTwoPi * lifted_x + kTwoPi * kTwoPi * lifted_w) / total;
      out.push_back({Angle(mean), std::max(0.0, second - mean * mean)});
    }
    return out;
  }

  std::vector<Angle> angles_;
  CircleMeanConfig config_;
  std::vector<std::size_t> order_;
  std::vector<double> sorted_;
};

inline FitResult<Angle> frechet_mean_circle(std::vector<Angle> angles, CircleMeanConfig config = {}) {
  CircleMeanProblem problem(std::move(angles), config);
  return problem.fit(uniform_weights(problem.size()));
}

}  // namespace uniqtest
