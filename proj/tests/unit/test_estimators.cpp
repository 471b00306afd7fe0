#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <vector>

#include "uniqtest/assignment.hpp"
#include "uniqtest/circle_mean.hpp"
#include "uniqtest/curve_fit.hpp"
#include "uniqtest/nelder_mead.hpp"
#include "uniqtest/sampling.hpp"
#include "uniqtest/sphere_mean.hpp"

using namespace uniqtest;
constexpr double kPi = std::numbers::pi;

// ---- circle ----

TEST(CircleMean, SinglePoint) {
  const auto r = frechet_mean_circle({Angle(0.0)});
  EXPECT_NEAR(circle_distance(r.descriptor, Angle(0.0)), 0.0, 1e-15);
  EXPECT_NEAR(r.loss, 0.0, 1e-15);
}

TEST(CircleMean, SymmetricPair) {
  const auto r = frechet_mean_circle({Angle(-0.3), Angle(0.3)});
  EXPECT_NEAR(circle_distance(r.descriptor, Angle(0.0)), 0.0, 1e-12);
  EXPECT_NEAR(r.loss, 0.09, 1e-12);
}

TEST(CircleMean, AntipodalPairHasTwoMinima) {
  const auto r = frechet_mean_circle({Angle(0.0), Angle(kPi)});
  ASSERT_EQ(r.local_minima.size(), 2u);
  std::vector<double> at;
  for (const auto& m : r.local_minima) {
    EXPECT_NEAR(m.loss, kPi * kPi / 4, 1e-12);
    at.push_back(m.descriptor.value());
  }
  std::sort(at.begin(), at.end());
  EXPECT_NEAR(at[0], kPi / 2, 1e-12);
  EXPECT_NEAR(at[1], 3 * kPi / 2, 1e-12);
}

TEST(CircleMean, EmptyInputIsAnError) { EXPECT_THROW(frechet_mean_circle({}), DataError); }

// Oracle: brute-force evaluation of F_n on a fine grid.
TEST(CircleMean, MatchesGridOracle) {
  RngStream s(1, 0);
  for (int trial = 0; trial < 30; ++trial) {
    const auto xs = sample_circle_mixture(0.3 * s.uniform(), 0.3 + s.uniform(), 25, s);
    const CircleMeanProblem problem(xs);
    const auto w = uniform_weights(xs.size());
    const auto r = problem.fit(w);
    double grid_best = INFINITY;
    for (int k = 0; k < 100000; ++k) grid_best = std::min(grid_best, problem.loss(Angle(k * 2 * kPi / 100000), w));
    EXPECT_LE(r.loss, grid_best + 1e-12);
    EXPECT_NEAR(r.loss, grid_best, 1e-6);
    EXPECT_NEAR(r.loss, problem.loss(r.descriptor, w), 1e-10);
    for (const auto& m : r.local_minima) EXPECT_GE(m.loss + 1e-12, r.loss);
  }
}

TEST(CircleMean, LocalMinimaSeparated) {
  RngStream s(2, 0);
  const auto xs = sample_circle_mixture(0.0, kPi / 50, 100, s);
  const auto r = frechet_mean_circle(xs);
  for (std::size_t a = 0; a < r.local_minima.size(); ++a)
    for (std::size_t b = a + 1; b < r.local_minima.size(); ++b)
      EXPECT_GT(circle_distance(r.local_minima[a].descriptor, r.local_minima[b].descriptor), 1e-3);
}

TEST(CircleMean, LocalFitStaysInBall) {
  const CircleMeanProblem problem({Angle(0.0), Angle(kPi)});
  const auto w = uniform_weights(2);
  const auto m = problem.local_fit(w, Angle(kPi / 2), 0.2);
  EXPECT_NEAR(m.loss, kPi * kPi / 4, 1e-12);
  EXPECT_LE(circle_distance(m.descriptor, Angle(kPi / 2)), 0.2 + 1e-12);
  EXPECT_THROW(problem.local_fit(w, Angle(0), kPi), DataError);
}

TEST(CircleMean, AgreesWithSphereOnEmbeddedCircle) {
  RngStream s(3, 0);
  for (int trial = 0; trial < 10; ++trial) {
    const auto xs = sample_circle_mixture(0.2, 0.4, 40, s);
    std::vector<SpherePoint> pts;
    for (const auto& a : xs) pts.emplace_back(Eigen::Vector2d(std::cos(a.value()), std::sin(a.value())));
    const auto rc = frechet_mean_circle(xs);
    const auto rs = frechet_mean_sphere(pts, 7);
    EXPECT_NEAR(rc.loss, rs.loss, 1e-8);
  }
}

// ---- sphere ----

TEST(SphereMean, ConstantSample) {
  const auto e1 = SpherePoint::basis(3, 0);
  const auto r = frechet_mean_sphere(std::vector<SpherePoint>(5, e1));
  EXPECT_NEAR(sphere_distance(r.descriptor, e1), 0.0, 1e-12);
  EXPECT_NEAR(r.loss, 0.0, 1e-20);
}

TEST(SphereMean, AntipodalMassesGiveEquatorialMean) {
  const auto e1 = SpherePoint::basis(3, 0);
  const auto r = frechet_mean_sphere({e1, SpherePoint(-e1.coords())}, 3);
  EXPECT_NEAR(r.loss, kPi * kPi / 4, 1e-9);
  EXPECT_NEAR(r.descriptor.coords().dot(e1.coords()), 0.0, 1e-6);
}

// Oracle: minimization over a 1-degree grid of S^2.
TEST(SphereMean, MatchesOneDegreeGridOracle) {
  RngStream s(4, 0);
  for (int trial = 0; trial < 3; ++trial) {
    const auto pts = sample_uniform_sphere(2, 5, s);
    const SphereMeanProblem problem(pts);
    const auto w = uniform_weights(pts.size());
    RngStream fit_stream(trial, 0);
    const auto r = problem.fit(w, fit_stream, nullptr);
    double grid_best = INFINITY;
    for (int i = 0; i <= 180; ++i)
      for (int j = 0; j < 360; ++j) {
        const double th = i * kPi / 180, ph = j * kPi / 180;
        const SpherePoint p(Eigen::Vector3d(std::sin(th) * std::cos(ph), std::sin(th) * std::sin(ph), std::cos(th)));
        grid_best = std::min(grid_best, problem.loss(p, w));
      }
    EXPECT_LE(r.loss, grid_best + 1e-12);
    EXPECT_NEAR(r.loss, grid_best, 1e-3);
    EXPECT_NEAR(r.loss, problem.loss(r.descriptor, w), 1e-10);
  }
}

TEST(SphereMean, MoreStartsNeverWorse) {
  RngStream s(5, 0);
  for (int trial = 0; trial < 10; ++trial) {
    const auto pts = sample_uniform_sphere(2, 12, s);
    double previous = INFINITY;
    for (int starts : {1, 2, 5, 10, 20}) {
      SphereMeanConfig cfg;
      cfg.starts = starts;
      const auto r = frechet_mean_sphere(pts, 11 + trial, cfg);
      EXPECT_LE(r.loss, previous + 1e-12);
      previous = r.loss;
    }
  }
}

TEST(SphereMean, LocalFitRespectsRadius) {
  RngStream s(6, 0);
  const auto pts = sample_sphere_pole_null(2, 200, s);
  const SphereMeanProblem problem(pts);
  const auto w = uniform_weights(pts.size());
  const auto north = SpherePoint::basis(3, 0);
  const auto m = problem.local_fit(w, north, kPi / 2);
  EXPECT_LE(sphere_distance(m.descriptor, north), kPi / 2 + 1e-9);
  EXPECT_NEAR(m.loss, problem.loss(m.descriptor, w), 1e-12);
}

TEST(SphereMean, MixedDimensionsRejected) {
  EXPECT_THROW(SphereMeanProblem({SpherePoint::basis(3, 0), SpherePoint::basis(4, 0)}), DataError);
  EXPECT_THROW(SphereMeanProblem({}), DataError);
}

TEST(SphereMean, LossContinuousInDescriptor) {
  RngStream s(7, 0);
  const auto pts = sample_uniform_sphere(3, 30, s);
  const SphereMeanProblem problem(pts);
  const auto w = uniform_weights(pts.size());
  for (int i = 0; i < 20; ++i) {
    const auto p = sample_uniform_sphere(3, 1, s).front();
    Eigen::VectorXd v = Eigen::VectorXd::Zero(4);
    for (int k = 0; k < 4; ++k) v(k) = s.normal();
    v -= v.dot(p.coords()) * p.coords();
    const auto q = exp_map(p, (1e-7 / v.norm()) * v);
    EXPECT_NEAR(problem.loss(p, w), problem.loss(q, w), 1e-5);
  }
}

// ---- curve model ----

TEST(CurveModel, Examples) {
  EXPECT_EQ(curve_model(17.0, {0.3, 5.0, 0.0, 0.0}), 0.0);
  EXPECT_NEAR(curve_model(1e6, {0.0, 10.0, 4.0, 0.0}), 4.0, 1e-12);
  const CurveParams th{0.5, 8.0, 3.0, 0.2};
  EXPECT_NEAR(curve_model(th.theta1 * th.theta2, th), 0.0, 1e-15);
  RngStream s(1, 0);
  for (int i = 0; i < 1000; ++i)
    EXPECT_GE(curve_model(400 * s.uniform(), {10 * s.normal(), 1 + 50 * s.uniform(), s.normal(), s.normal()}), 0.0);
}

TEST(CurveDistance, Examples) {
  const std::vector<double> grid{0, 10, 20, 30, 40};
  const CurveParams a{-60.0, 1.0, 5.0, 0.0};  // onset far before t=0: constant 5
  EXPECT_EQ(curve_distance(a, a, grid), 0.0);
  CurveParams b = a;
  b.theta3 += 0.5;
  EXPECT_NEAR(curve_distance(a, b, grid), 5 * 0.25, 1e-12);
  EXPECT_THROW(curve_distance(a, b, std::vector<double>{}), DataError);
}

TEST(CurveDistance, MatchesIndependentSum) {
  RngStream s(2, 0);
  std::vector<double> grid;
  for (int t = 0; t <= 400; t += 2) grid.push_back(t);
  for (int i = 0; i < 100; ++i) {
    const CurveParams a{s.normal(), 1 + 40 * s.uniform(), 5 * s.uniform(), 0.01 * s.normal()};
    const CurveParams b{s.normal(), 1 + 40 * s.uniform(), 5 * s.uniform(), 0.01 * s.normal()};
    double oracle = 0;
    for (double t : grid) {
      const double fa = std::max(0.0, (a.theta3 + a.theta4 * t) * (1.0 - std::exp(a.theta1 - t / a.theta2)));
      const double fb = std::max(0.0, (b.theta3 + b.theta4 * t) * (1.0 - std::exp(b.theta1 - t / b.theta2)));
      oracle += (fa - fb) * (fa - fb);
    }
    EXPECT_DOUBLE_EQ(curve_distance(a, b, grid), oracle);
    EXPECT_DOUBLE_EQ(curve_distance(a, b, grid), curve_distance(b, a, grid));
  }
}

// ---- curve fit ----

namespace {
std::vector<CurvePoint> exact_curve(const CurveParams& th, double t0, double t1, double step) {
  std::vector<CurvePoint> out;
  for (double t = t0; t <= t1 + 1e-9; t += step) out.push_back({t, curve_model(t, th)});
  return out;
}
}  // namespace

TEST(CurveFit, RecoversNoiselessTruth) {
  const CurveParams truth{0.0, 20.0, 5.0, 0.01};
  const auto data = exact_curve(truth, 0, 400, 2);
  const auto r = curve_fit(data, {}, 1);
  EXPECT_LT(r.loss, 1e-8);
  std::vector<double> grid;
  for (const auto& p : data) grid.push_back(p.t);
  EXPECT_LT(curve_distance(r.descriptor, truth, grid), 1e-6);
}

TEST(CurveFit, AllZeroLengths) {
  std::vector<CurvePoint> data;
  for (int t = 0; t < 20; ++t) data.push_back({static_cast<double>(t), 0.0});
  const auto r = curve_fit(data, {}, 2);
  EXPECT_NEAR(r.loss, 0.0, 1e-12);
}

TEST(CurveFit, TooFewPoints) {
  EXPECT_THROW(CurveFitProblem({{0, 1}, {1, 2}, {2, 3}, {3, 4}}), DataError);
}

// Two exact curves on disjoint time ranges: each curve is a basin.
TEST(CurveFit, BimodalConstructionHasSeveralMinima) {
  auto data = exact_curve({0.0, 10.0, 4.0, 0.0}, 0, 100, 2);
  const auto late = exact_curve({2.0, 40.0, 0.0, 0.02}, 102, 400, 2);
  data.insert(data.end(), late.begin(), late.end());
  CurveFitConfig cfg;
  cfg.starts = 50;
  const auto r = curve_fit(data, cfg, 3);
  EXPECT_GE(r.local_minima.size(), 2u);
  for (std::size_t a = 0; a < r.local_minima.size(); ++a) {
    EXPECT_GE(r.local_minima[a].loss + 1e-12, r.loss);
  }
}

TEST(CurveFit, ConstraintRespected) {
  const auto data = exact_curve({-5.0, 20.0, 5.0, 0.0}, 0, 200, 4);  // onset product -100
  CurveFitConfig cfg;
  cfg.constrain = true;
  const auto r = curve_fit(data, cfg, 4);
  EXPECT_GE(r.descriptor.theta1 * r.descriptor.theta2, kCurveOnsetBound - 1e-9);
  for (const auto& m : r.local_minima) EXPECT_GE(m.descriptor.theta1 * m.descriptor.theta2, kCurveOnsetBound - 1e-9);
}

TEST(CurveFit, LossMatchesDescriptor) {
  RngStream s(5, 0);
  std::vector<double> times;
  for (int t = 0; t <= 200; t += 4) times.push_back(t);
  const auto data = sample_curve_data({0.5, 15.0, 3.0, 0.005}, times, 0.05, s);
  const CurveFitProblem problem(data);
  const auto w = uniform_weights(data.size());
  RngStream fs(1, 0);
  const auto r = problem.fit(w, fs, nullptr);
  EXPECT_NEAR(r.loss, problem.loss(r.descriptor, w), 1e-10);
}

// ---- assignment ----

TEST(Assignment, MatchesBruteForce) {
  RngStream s(6, 0);
  for (int trial = 0; trial < 200; ++trial) {
    const int k = 1 + trial % 6;
    Eigen::MatrixXd cost(k, k);
    for (int i = 0; i < k; ++i)
      for (int j = 0; j < k; ++j) cost(i, j) = trial % 3 == 0 ? std::floor(4 * s.uniform()) : s.uniform();
    const auto sigma = optimal_assignment(cost);
    ASSERT_EQ(static_cast<int>(sigma.size()), k);
    double got = 0;
    std::vector<int> seen(k, 0);
    for (int i = 0; i < k; ++i) {
      got += cost(i, sigma[i]);
      ++seen[sigma[i]];
    }
    for (int c : seen) EXPECT_EQ(c, 1);
    std::vector<int> perm(k);
    std::iota(perm.begin(), perm.end(), 0);
    double best = INFINITY;
    do {
      double c = 0;
      for (int i = 0; i < k; ++i) c += cost(i, perm[i]);
      best = std::min(best, c);
    } while (std::next_permutation(perm.begin(), perm.end()));
    EXPECT_NEAR(got, best, 1e-12);
  }
}

// ---- Nelder-Mead ----

TEST(NelderMead, Rosenbrock) {
  auto f = [](const Eigen::VectorXd& x) { return 100 * std::pow(x(1) - x(0) * x(0), 2) + std::pow(1 - x(0), 2); };
  NelderMeadOptions opt;
  opt.max_evals = 20000;
  const auto r = nelder_mead(f, Eigen::Vector2d(-1.2, 1.0), Eigen::Vector2d(0.1, 0.1), opt);
  EXPECT_LT((r.x - Eigen::Vector2d(1, 1)).norm(), 1e-5);
}

TEST(NelderMead, InfiniteValuesActAsWalls) {
  auto f = [](const Eigen::VectorXd& x) {
    return x(0) < 0.5 ? std::numeric_limits<double>::infinity() : (x(0) - 0.0) * (x(0) - 0.0);
  };
  const auto r = nelder_mead(f, Eigen::VectorXd::Constant(1, 2.0), Eigen::VectorXd::Constant(1, 0.5));
  EXPECT_GE(r.x(0), 0.5);
  EXPECT_NEAR(r.x(0), 0.5, 1e-3);
}
