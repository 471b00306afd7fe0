#pragma once

// Least-squares fit of the saturating growth curve
//   f(t, theta) = max{0, (theta3 + theta4 t) (1 - exp(theta1 - t / theta2))}
// with rho((t, l), theta) = (l - f(t, theta))^2, by multi-start Nelder-Mead.

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "uniqtest/errors.hpp"
#include "uniqtest/nelder_mead.hpp"
#include "uniqtest/problem.hpp"
#include "uniqtest/rng.hpp"

namespace uniqtest {

struct CurveParams {
  double theta1 = 0.0;
  double theta2 = 1.0;  ///< growth time scale, > 0
  double theta3 = 0.0;
  double theta4 = 0.0;

  Eigen::Vector4d vec() const { return {theta1, theta2, theta3, theta4}; }
  static CurveParams from(const Eigen::Ref<const Eigen::VectorXd>& v) { return {v(0), v(1), v(2), v(3)}; }
};

struct CurvePoint {
  double t;
  double length;
};

inline double curve_model(double t, const CurveParams& th) {
  const double value = (th.theta3 + th.theta4 * t) * (1.0 - std::exp(th.theta1 - t / th.theta2));
  return std::max(0.0, value);
}

/// Sum over the grid of squared differences between the two curves.
inline double curve_distance(const CurveParams& a, const CurveParams& b, std::span<const double> grid) {
  if (grid.empty()) throw DataError("curve distance needs a non-empty time grid");
  double d = 0.0;
  for (double t : grid) {
    const double diff = curve_model(t, a) - curve_model(t, b);
    d += diff * diff;
  }
  return d;
}

/// Lower bound of theta1 * theta2 when the constraint is enabled.
inline constexpr double kCurveOnsetBound = -30.0;

struct CurveFitConfig {
  int starts = 30;
  bool constrain = false;  ///< enforce theta1 * theta2 >= -30
  double merge_radius = 1e-4;  ///< in curve_distance
  int polish_rounds = 3;  ///< Nelder-Mead restarts from the previous optimum
  NelderMeadOptions nelder_mead{};
};

class CurveFitProblem {
 public:
  using Descriptor = CurveParams;

  CurveFitProblem(std::vector<CurvePoint> data, CurveFitConfig config = {})
      : data_(std::move(data)), config_(config) {
    if (data_.size() < 5) throw DataError("curve fit needs at least 5 points");
    if (config_.starts < 1) throw DataError("need at least one start");
    grid_.reserve(data_.size());
    double t_max = 0.0, l_max = 0.0;
    for (const auto& p : data_) {
      if (!std::isfinite(p.t) || !std::isfinite(p.length)) throw DataError("non-finite curve data");
      grid_.push_back(p.t);
      t_max = std::max(t_max, p.t);
      l_max = std::max(l_max, std::abs(p.length));
    }
    if (l_max == 0.0) l_max = 1.0;
    const double horizon = std::max(t_max, 2.0);
    box_lo_ = {-10.0, 1.0, -l_max, -l_max / horizon};
    box_hi_ = {10.0, horizon, 2.0 * l_max, l_max / horizon};
  }

  std::size_t size() const { return data_.size(); }
  std::string id() const { return config_.constrain ? "curve-fit-constrained" : "curve-fit"; }
  const std::vector<CurvePoint>& data() const { return data_; }
  std::span<const double> grid() const { return grid_; }
  std::pair<Eigen::Vector4d, Eigen::Vector4d> start_box() const {
    return {Eigen::Vector4d(box_lo_.data()), Eigen::Vector4d(box_hi_.data())};
  }

  bool feasible(const CurveParams& th) const {
    if (!(th.theta2 > 0.0)) return false;
    return !config_.constrain || th.theta1 * th.theta2 >= kCurveOnsetBound;
  }

  double loss(const CurveParams& th, std::span<const double> weights) const {
    check_weights(weights);
    if (!(th.theta2 > 0.0)) return std::numeric_limits<double>::infinity();
    double f = 0.0;
    for (std::size_t i = 0; i < data_.size(); ++i) {
      if (weights[i] == 0.0) continue;
      const double r = data_[i].length - curve_model(data_[i].t, th);
      f += weights[i] * r * r;
    }
    return f;
  }

  double distance(const CurveParams& a, const CurveParams& b) const { return curve_distance(a, b, grid_); }

  FitResult<CurveParams> fit(std::span<const double> weights, RngStream& stream,
                             const CurveParams* warm_start) const {
    check_weights(weights);
    std::vector<Eigen::Vector4d> starts;
    if (warm_start) starts.push_back(warm_start->vec());
    for (auto& s : latin_hypercube(stream)) starts.push_back(project(s));

    auto objective = [&](const Eigen::VectorXd& v) {
      const auto th = CurveParams::from(v);
      return feasible(th) ? loss(th, weights) : std::numeric_limits<double>::infinity();
    };
    const Eigen::Vector4d width = Eigen::Vector4d(box_hi_.data()) - Eigen::Vector4d(box_lo_.data());

    std::vector<LocalMinimum<CurveParams>> candidates;
    for (const auto& s : starts) {
      Eigen::VectorXd x = s;
      Eigen::VectorXd step = 0.1 * width;
      double best = objective(x);
      for (int round = 0; round <= config_.polish_rounds; ++round) {
        auto r = nelder_mead(objective, x, step, config_.nelder_mead);
        const bool improved = r.value < best - 1e-15 * std::max(1.0, std::abs(best));
        if (r.value <= best) {
          x = r.x;
          best = r.value;
        }
        if (round > 0 && !improved) break;
        step = (0.01 * width).cwiseMax(1e-4 * x.cwiseAbs());
      }
      if (std::isfinite(best)) candidates.push_back({CurveParams::from(x), best});
    }
    if (candidates.empty()) throw NumericError("curve fit: every optimizer run diverged");
    auto minima = merge_minima(std::move(candidates), config_.merge_radius,
                               [this](const CurveParams& a, const CurveParams& b) { return distance(a, b); });
    FitResult<CurveParams> out{minima.front().descriptor, minima.front().loss, std::move(minima),
                               static_cast<int>(starts.size())};
    return out;
  }

 private:
  void check_weights(std::span<const double> weights) const {
    if (weights.size() != data_.size()) throw DataError("weight vector length does not match sample size");
  }

  std::vector<Eigen::Vector4d> latin_hypercube(RngStream& stream) const {
    const int s = config_.starts;
    std::vector<Eigen::Vector4d> pts(s);
    std::vector<int> strata(s);
    for (int dim = 0; dim < 4; ++dim) {
      for (int i = 0; i < s; ++i) strata[i] = i;
      for (int i = s - 1; i > 0; --i) std::swap(strata[i], strata[stream.below(i + 1)]);
      for (int i = 0; i < s; ++i) {
        const double u = (strata[i] + stream.uniform()) / s;
        pts[i](dim) = box_lo_[dim] + u * (box_hi_[dim] - box_lo_[dim]);
      }
    }
    return pts;
  }

  Eigen::Vector4d project(Eigen::Vector4d v) const {
    if (config_.constrain && v(0) * v(1) < kCurveOnsetBound) v(0) = kCurveOnsetBound / v(1);
    return v;
  }

  std::vector<CurvePoint> data_;
  CurveFitConfig config_;
  std::vector<double> grid_;
  std::array<double, 4> box_lo_{};
  std::array<double, 4> box_hi_{};
};

inline FitResult<CurveParams> curve_fit(std::vector<CurvePoint> data, CurveFitConfig config = {},
                                        std::uint64_t seed = 0) {
  CurveFitProblem problem(std::move(data), config);
  RngStream stream(seed, 0);
  return problem.fit(uniform_weights(problem.size()), stream, nullptr);
}

/// Synthetic curve data: f(t, truth) + N(0, noise_sd^2) on the given times.
inline std::vector<CurvePoint> sample_curve_data(const CurveParams& truth, std::span<const double> times,
                                                 double noise_sd, RngStream& stream) {
  std::vector<CurvePoint> out;
  out.reserve(times.size());
  for (double t : times) out.push_back({t, curve_model(t, truth) + noise_sd * stream.normal()});
  return out;
}

}  // namespace uniqtest
