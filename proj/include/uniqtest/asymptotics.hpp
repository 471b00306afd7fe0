#pragma once

// Monte Carlo checks of the limit theory behind the test: the normal
// quantile-sum bound, the CLT for differences of local sample losses, and
// consistency of the plug-in loss covariance.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"
#include "uniqtest/bootstrap.hpp"
#include "uniqtest/circle_mean.hpp"
#include "uniqtest/errors.hpp"
#include "uniqtest/geometry.hpp"
#include "uniqtest/parallel.hpp"
#include "uniqtest/rng.hpp"
#include "uniqtest/sampling.hpp"

namespace uniqtest {

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

/// Inverse standard normal CDF: rational approximation (P. J. Acklam) plus
/// one Halley step, accurate to ~1e-15.
inline double normal_quantile(double u) {
  if (!(u > 0.0 && u < 1.0)) throw DataError("normal_quantile needs u in (0, 1)");
  // 1 - u is exact for u >= 0.5
  if (u > 0.5) return -normal_quantile(1.0 - u);
  static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
                                 1.383577518672690e+02,  -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
                                 6.680131188771972e+01,  -1.328068155288572e+01};
  static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
                                 -2.549732539343734e+00, 4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
                                 3.754408661907416e+00};
  double x;
  if (u < 0.02425) {
    const double q = std::sqrt(-2.0 * std::log(u));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else {
    const double q = u - 0.5;
    const double r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  }
  const double step = (normal_cdf(x) - u) * std::sqrt(2.0 * std::numbers::pi) * std::exp(0.5 * x * x);
  return x - step / (1.0 + 0.5 * x * step);
}

/// Asymptotic Kolmogorov p-value for the one-sample KS distance D at size n.
inline double kolmogorov_pvalue(double distance, std::size_t n) {
  const double sn = std::sqrt(static_cast<double>(n));
  const double lambda = (sn + 0.12 + 0.11 / sn) * distance;
  if (lambda < 1e-3) return 1.0;
  double sum = 0.0;
  for (int k = 1; k <= 200; ++k) {
    const double term = std::exp(-2.0 * k * k * lambda * lambda);
    sum += (k % 2 == 1 ? 2.0 : -2.0) * term;
    if (term < 1e-300) break;
  }
  return std::clamp(sum, 0.0, 1.0);
}

/// KS distance of `values` to the normal with their own mean and sd.
inline double ks_distance_to_fitted_normal(std::span<const double> values) {
  const std::size_t n = values.size();
  if (n < 2) throw DataError("KS test needs at least two values");
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(n);
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / static_cast<double>(n - 1));
  if (!(sd > 0.0)) return 1.0;
  std::vector<double> z(values.begin(), values.end());
  std::sort(z.begin(), z.end());
  double dist = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double f = normal_cdf((z[i] - mean) / sd);
    dist = std::max({dist, f - static_cast<double>(i) / static_cast<double>(n),
                     static_cast<double>(i + 1) / static_cast<double>(n) - f});
  }
  return dist;
}

// ---- quantile-sum bound ----

struct QuantileSumReport {
  int m = 0;
  Eigen::MatrixXd sigma;
  double alpha = 0.0;
  std::size_t mc_reps = 0;
  std::uint64_t seed = 0;
  double estimate = 0.0;  ///< MC estimate of sum_i P(A_i)
  double se = 0.0;
  bool equality = false;  ///< m = 2: the sum equals alpha
  bool pass = false;
};

/// Estimates sum_i P(A_i) with A_i = {x_i - x_j <= sqrt(e_ij' S e_ij) q(alpha/2) for all j != i},
/// X ~ N(0, S).  For alpha < 1 the A_i are disjoint (each says x_i is the
/// smallest coordinate by a margin), so the sum is the probability of their
/// union and the draw-wise indicator is Bernoulli.
inline QuantileSumReport verify_quantile_sum(const Eigen::MatrixXd& sigma, double alpha, std::size_t mc_reps,
                                             std::uint64_t seed, unsigned threads = 0) {
  const auto m = sigma.rows();
  if (m < 2 || sigma.cols() != m) throw DataError("covariance must be square with m >= 2");
  if (!(alpha > 0.0 && alpha < 1.0)) throw DataError("alpha must lie in (0, 1)");
  if (mc_reps < 1) throw DataError("need at least one Monte Carlo draw");
  if (!sigma.isApprox(sigma.transpose(), 1e-12)) throw DataError("covariance must be symmetric");
  Eigen::LLT<Eigen::MatrixXd> llt(sigma);
  if (llt.info() != Eigen::Success) throw DataError("covariance must be positive definite");
  const Eigen::MatrixXd chol = llt.matrixL();
  const double q = normal_quantile(alpha / 2.0);
  Eigen::MatrixXd bound(m, m);
  for (Eigen::Index i = 0; i < m; ++i)
    for (Eigen::Index j = 0; j < m; ++j)
      bound(i, j) = std::sqrt(std::max(0.0, sigma(i, i) + sigma(j, j) - 2.0 * sigma(i, j))) * q;

  constexpr std::size_t chunk = 1u << 16;
  const std::size_t chunks = (mc_reps + chunk - 1) / chunk;
  std::vector<std::size_t> hits(chunks, 0);
  parallel_for(
      chunks,
      [&](std::size_t c) {
        RngStream stream(seed, c);
        const std::size_t begin = c * chunk;
        const std::size_t end = std::min(mc_reps, begin + chunk);
        Eigen::VectorXd z(m), x(m);
        for (std::size_t r = begin; r < end; ++r) {
          for (Eigen::Index a = 0; a < m; ++a) z(a) = stream.normal();
          x.noalias() = chol * z;
          for (Eigen::Index i = 0; i < m; ++i) {
            bool in = true;
            for (Eigen::Index j = 0; j < m && in; ++j)
              if (j != i && !(x(i) - x(j) <= bound(i, j))) in = false;
            if (in) {
              ++hits[c];
              break;
            }
          }
        }
      },
      threads);

  QuantileSumReport r;
  r.m = static_cast<int>(m);
  r.sigma = sigma;
  r.alpha = alpha;
  r.mc_reps = mc_reps;
  r.seed = seed;
  const double total = static_cast<double>(std::accumulate(hits.begin(), hits.end(), std::size_t{0}));
  r.estimate = total / static_cast<double>(mc_reps);
  r.se = std::sqrt(std::max(r.estimate * (1.0 - r.estimate), 1e-300) / static_cast<double>(mc_reps));
  r.equality = m == 2;
  r.pass = r.equality ? std::abs(r.estimate - alpha) <= 3.0 * r.se : r.estimate <= alpha + 3.0 * r.se;
  return r;
}

// ---- population loss moments on the circle ----

namespace detail {

inline double sq(double x) { return x * x; }

/// Mean vector and covariance of (rho(anchor_i, X))_i for a circle
/// distribution: exact sums for an empirical law, otherwise trapezoidal
/// integration of the wrapped normal mixture density on a fine grid (the
/// integrand is smooth and periodic, so the rule converges geometrically).
inline std::pair<Eigen::VectorXd, Eigen::MatrixXd> circle_loss_moments(const SimDistribution& dist,
                                                                       std::span<const Angle> anchors,
                                                                       std::size_t grid = 1u << 17) {
  const auto m = static_cast<Eigen::Index>(anchors.size());
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(m);
  Eigen::MatrixXd second = Eigen::MatrixXd::Zero(m, m);
  Eigen::VectorXd rho(m);
  auto accumulate = [&](double x, double w) {
    for (Eigen::Index i = 0; i < m; ++i) rho(i) = sq(circle_distance(anchors[static_cast<std::size_t>(i)], Angle(x)));
    mean += w * rho;
    second += w * rho * rho.transpose();
  };
  if (const auto* e = std::get_if<EmpiricalCircle>(&dist)) {
    if (e->support.empty()) throw DataError("empty empirical distribution");
    const double w = 1.0 / static_cast<double>(e->support.size());
    for (const auto& a : e->support) accumulate(a.value(), w);
  } else if (const auto* c = std::get_if<CircleNullMixture>(&dist)) {
    if (!(c->sd > 0.0)) throw DataError("wrapped normal needs sd > 0 for integration");
    const double h = kTwoPi / static_cast<double>(grid);
    const double norm = 1.0 / (c->sd * std::sqrt(2.0 * std::numbers::pi));
    const int wraps = static_cast<int>(std::ceil(10.0 * c->sd / kTwoPi)) + 1;
    for (std::size_t g = 0; g < grid; ++g) {
      const double x = h * static_cast<double>(g);
      double density = 0.0;
      for (double center : {c->a, std::numbers::pi - c->a})
        for (int k = -wraps; k <= wraps; ++k) {
          const double diff = circle_log(Angle(center), Angle(x)) + kTwoPi * k;
          density += 0.5 * norm * std::exp(-0.5 * sq(diff / c->sd));
        }
      accumulate(x, density * h);
    }
  } else {
    throw DataError("loss moments are implemented for circle distributions only");
  }
  return {mean, second - mean * mean.transpose()};
}

inline std::vector<Angle> draw_circle(const SimDistribution& dist, std::size_t n, RngStream& stream) {
  if (const auto* c = std::get_if<CircleNullMixture>(&dist)) return sample_circle_mixture(c->a, c->sd, n, stream);
  if (const auto* e = std::get_if<EmpiricalCircle>(&dist)) {
    if (e->support.empty()) throw DataError("empty empirical distribution");
    std::vector<Angle> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) out.push_back(e->support[stream.below(e->support.size())]);
    return out;
  }
  throw DataError("this check needs a circle distribution");
}

inline double sample_variance(std::span<const double> v) {
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += sq(x - mean);
  return v.size() > 1 ? ss / static_cast<double>(v.size() - 1) : 0.0;
}

}  // namespace detail

/// Minimizers +-pi/2 of the symmetric circle mixture (a = 0) and of {0, pi}.
inline std::vector<Angle> circle_null_anchors() { return {Angle(0.5 * std::numbers::pi), Angle(1.5 * std::numbers::pi)}; }

// ---- loss CLT ----

struct LossCltReport {
  std::size_t n = 0;
  std::size_t M = 0;
  std::uint64_t seed = 0;
  double radius = 0.0;
  double empirical_variance = 0.0;  ///< of sqrt(n) (V1_hat - V2_hat)
  double variance_se = 0.0;         ///< normal-theory SE of the empirical variance
  double target_variance = 0.0;     ///< Var[tau1 - tau2]
  double ratio = 0.0;
  double ks_distance = 0.0;
  double ks_pvalue = 1.0;
  std::vector<double> local_loss_mean;   ///< mean of V_hat^i over reps
  std::vector<double> population_loss;   ///< V^i = F(mu^i)
  std::vector<double> local_variance;    ///< empirical Var[sqrt(n) (V_hat^i - V^i)]
  std::vector<double> local_target;      ///< Var[tau^i(0, X)]
  std::size_t global_outside = 0;        ///< reps whose global minimum beat every local loss
  bool pass = false;
};

inline LossCltReport verify_loss_clt(const SimDistribution& dist, std::span<const Angle> anchors, std::size_t n,
                                     std::size_t M, std::uint64_t seed, double ratio_tol = 0.15,
                                     double ks_level = 0.01, unsigned threads = 0) {
  if (anchors.size() != 2) throw DataError("loss CLT check uses exactly two anchors");
  if (n < 2 || M < 2) throw DataError("need n >= 2 and M >= 2");
  const double radius = 0.5 * circle_distance(anchors[0], anchors[1]);
  if (!(radius > 0.0)) throw DataError("anchors must differ");
  std::vector<double> diffs(M);
  std::vector<double> v1(M), v2(M);
  std::vector<char> outside(M, 0);
  parallel_for(
      M,
      [&](std::size_t r) {
        RngStream stream(seed, r);
        CircleMeanProblem problem(detail::draw_circle(dist, n, stream));
        const auto w = uniform_weights(n);
        const Eigen::MatrixXd losses =
            local_loss_matrix(problem, anchors, radius, std::span<const std::vector<double>>(&w, 1), 1);
        v1[r] = losses(0, 0);
        v2[r] = losses(0, 1);
        diffs[r] = std::sqrt(static_cast<double>(n)) * (v1[r] - v2[r]);
        RngStream unused(seed, r);
        const double global = problem.fit(w, unused, nullptr).loss;
        if (global < std::min(v1[r], v2[r]) - 1e-12) outside[r] = 1;
      },
      threads);
  const auto [mean, cov] = detail::circle_loss_moments(dist, anchors);
  LossCltReport rep;
  rep.n = n;
  rep.M = M;
  rep.seed = seed;
  rep.radius = radius;
  rep.empirical_variance = detail::sample_variance(diffs);
  rep.variance_se = rep.empirical_variance * std::sqrt(2.0 / static_cast<double>(M - 1));
  rep.target_variance = std::max(0.0, cov(0, 0) + cov(1, 1) - 2.0 * cov(0, 1));
  // both variances at rounding level: the loss difference is constant
  const bool degenerate = rep.target_variance <= 1e-20 && rep.empirical_variance <= 1e-20;
  rep.ratio = degenerate ? 1.0 : rep.empirical_variance / rep.target_variance;
  rep.ks_distance = degenerate ? 0.0 : ks_distance_to_fitted_normal(diffs);
  rep.ks_pvalue = degenerate ? 1.0 : kolmogorov_pvalue(rep.ks_distance, M);
  rep.local_loss_mean = {std::accumulate(v1.begin(), v1.end(), 0.0) / static_cast<double>(M),
                         std::accumulate(v2.begin(), v2.end(), 0.0) / static_cast<double>(M)};
  rep.population_loss = {mean(0), mean(1)};
  const double scale = static_cast<double>(n);
  rep.local_variance = {scale * detail::sample_variance(v1), scale * detail::sample_variance(v2)};
  rep.local_target = {cov(0, 0), cov(1, 1)};
  rep.global_outside = static_cast<std::size_t>(std::count(outside.begin(), outside.end(), 1));
  rep.pass = std::abs(rep.ratio - 1.0) <= ratio_tol && rep.ks_pvalue > ks_level && rep.global_outside == 0;
  return rep;
}

// ---- plug-in loss covariance ----

struct LossCovarianceReport {
  std::vector<std::size_t> n_grid;
  std::size_t M = 0;
  std::uint64_t seed = 0;
  Eigen::VectorXd v;
  double target = 0.0;                    ///< v' Cov[tau(0, X)] v
  std::vector<double> mean_plugin;        ///< average of v' Cov[tau*_n] v per n
  std::vector<double> mean_abs_deviation; ///< |plug-in - target| averaged per n
  std::vector<double> deviation_se;
  std::optional<double> slope;            ///< log-log slope of the deviation in n
  double slope_lo = -0.65;
  double slope_hi = -0.35;
  bool pass = false;
};

/// For each n, M samples: the plug-in v' Cov_n[rho(mu_hat^i, X)] v, with
/// mu_hat^i the local sample minimizers in the half-gap balls, compared to
/// the population value.  The mean absolute deviation should decay like
/// n^(-1/2).
inline LossCovarianceReport verify_loss_covariance(const SimDistribution& dist, std::span<const Angle> anchors,
                                                   std::span<const std::size_t> n_grid, std::size_t M,
                                                   const Eigen::VectorXd& v, std::uint64_t seed,
                                                   unsigned threads = 0) {
  if (anchors.size() < 2) throw DataError("need at least two anchors");
  if (static_cast<std::size_t>(v.size()) != anchors.size()) throw DataError("v must have one entry per anchor");
  if (n_grid.size() < 2) throw DataError("need at least two sample sizes");
  if (M < 2) throw DataError("need M >= 2");
  double radius = INFINITY;
  for (std::size_t a = 0; a < anchors.size(); ++a)
    for (std::size_t b = a + 1; b < anchors.size(); ++b)
      radius = std::min(radius, 0.5 * circle_distance(anchors[a], anchors[b]));
  const auto [mean, cov] = detail::circle_loss_moments(dist, anchors);
  LossCovarianceReport rep;
  rep.n_grid.assign(n_grid.begin(), n_grid.end());
  rep.M = M;
  rep.seed = seed;
  rep.v = v;
  rep.target = v.dot(cov * v);
  const auto m = static_cast<Eigen::Index>(anchors.size());
  for (std::size_t g = 0; g < n_grid.size(); ++g) {
    const std::size_t n = n_grid[g];
    std::vector<double> plugin(M);
    parallel_for(
        M,
        [&](std::size_t r) {
          RngStream stream(seed, g * M + r);
          const auto data = detail::draw_circle(dist, n, stream);
          CircleMeanProblem problem(data);
          const auto w = uniform_weights(n);
          std::vector<Angle> local;
          for (const auto& a : anchors) local.push_back(problem.local_fit(w, a, radius).descriptor);
          Eigen::MatrixXd rho(static_cast<Eigen::Index>(n), m);
          for (std::size_t j = 0; j < n; ++j)
            for (Eigen::Index i = 0; i < m; ++i)
              rho(static_cast<Eigen::Index>(j), i) = detail::sq(circle_distance(local[static_cast<std::size_t>(i)], data[j]));
          const Eigen::VectorXd proj = rho * v;
          const double mu = proj.mean();
          plugin[r] = (proj.array() - mu).square().mean();
        },
        threads);
    std::vector<double> dev(M);
    for (std::size_t r = 0; r < M; ++r) dev[r] = std::abs(plugin[r] - rep.target);
    rep.mean_plugin.push_back(std::accumulate(plugin.begin(), plugin.end(), 0.0) / static_cast<double>(M));
    rep.mean_abs_deviation.push_back(std::accumulate(dev.begin(), dev.end(), 0.0) / static_cast<double>(M));
    rep.deviation_se.push_back(std::sqrt(detail::sample_variance(dev) / static_cast<double>(M)));
  }
  const bool all_zero = std::all_of(rep.mean_abs_deviation.begin(), rep.mean_abs_deviation.end(),
                                    [](double x) { return x == 0.0; });
  if (all_zero) {
    rep.pass = true;
    return rep;
  }
  // least-squares slope of log(deviation) on log(n)
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const double k = static_cast<double>(n_grid.size());
  for (std::size_t g = 0; g < n_grid.size(); ++g) {
    const double x = std::log(static_cast<double>(n_grid[g]));
    const double y = std::log(rep.mean_abs_deviation[g]);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  rep.slope = (k * sxy - sx * sy) / (k * sxx - sx * sx);
  rep.pass = *rep.slope >= rep.slope_lo && *rep.slope <= rep.slope_hi;
  return rep;
}

// ---- serialization ----

inline nlohmann::ordered_json to_json(const QuantileSumReport& r) {
  nlohmann::ordered_json j;
  j["check"] = "quantile-sum";
  j["m"] = r.m;
  std::vector<std::vector<double>> s(static_cast<std::size_t>(r.m));
  for (int i = 0; i < r.m; ++i)
    for (int k = 0; k < r.m; ++k) s[static_cast<std::size_t>(i)].push_back(r.sigma(i, k));
  j["sigma"] = s;
  j["alpha"] = r.alpha;
  j["mc_reps"] = r.mc_reps;
  j["seed"] = r.seed;
  j["estimate"] = r.estimate;
  j["se"] = r.se;
  j["relation"] = r.equality ? "equal" : "at most";
  j["pass"] = r.pass;
  return j;
}

inline nlohmann::ordered_json to_json(const LossCltReport& r) {
  nlohmann::ordered_json j;
  j["check"] = "loss-clt";
  j["n"] = r.n;
  j["M"] = r.M;
  j["seed"] = r.seed;
  j["radius"] = r.radius;
  j["empirical_variance"] = r.empirical_variance;
  j["variance_se"] = r.variance_se;
  j["target_variance"] = r.target_variance;
  j["ratio"] = r.ratio;
  j["ks_distance"] = r.ks_distance;
  j["ks_pvalue"] = r.ks_pvalue;
  j["local_loss_mean"] = r.local_loss_mean;
  j["population_loss"] = r.population_loss;
  j["local_variance"] = r.local_variance;
  j["local_target"] = r.local_target;
  j["global_outside"] = r.global_outside;
  j["pass"] = r.pass;
  return j;
}

inline nlohmann::ordered_json to_json(const LossCovarianceReport& r) {
  nlohmann::ordered_json j;
  j["check"] = "loss-cov";
  j["n_grid"] = r.n_grid;
  j["M"] = r.M;
  j["seed"] = r.seed;
  j["v"] = std::vector<double>(r.v.data(), r.v.data() + r.v.size());
  j["target"] = r.target;
  j["mean_plugin"] = r.mean_plugin;
  j["mean_abs_deviation"] = r.mean_abs_deviation;
  j["deviation_se"] = r.deviation_se;
  j["slope"] = r.slope ? nlohmann::ordered_json(*r.slope) : nlohmann::ordered_json(nullptr);
  j["slope_range"] = {r.slope_lo, r.slope_hi};
  j["pass"] = r.pass;
  return j;
}

}  // namespace uniqtest
