#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include "uniqtest/curve_fit.hpp"
#include "uniqtest/uniqueness_test.hpp"

using namespace uniqtest;
constexpr double kPi = std::numbers::pi;

namespace {

CalibrationCache& cache() {
  static CalibrationCache c;
  return c;
}

TestOptions quick(std::size_t B = 1000) {
  TestOptions o;
  o.B = B;
  o.cache = &cache();
  return o;
}

std::vector<double> two_clusters(std::size_t near, std::size_t far, std::uint64_t seed) {
  RngStream s(seed, 0);
  std::vector<double> v;
  for (std::size_t i = 0; i < near; ++i) v.push_back(0.1 * s.uniform());
  for (std::size_t i = 0; i < far; ++i) v.push_back(1.0 + 0.1 * s.uniform());
  return v;
}

std::size_t count_above(const std::vector<double>& v, double c) {
  std::size_t k = 0;
  for (double x : v) k += x > c ? 1 : 0;
  return k;
}

}  // namespace

TEST(Summary, SecondClusterCounted) {
  const auto v = two_clusters(1900, 100, 1);
  const auto out = evaluate_summary(v, 0.05, cache().get(v.size()));
  ASSERT_TRUE(out.cutoff.has_value());
  EXPECT_EQ(out.k, count_above(v, *out.cutoff));
  EXPECT_GE(out.k, 95u);
  EXPECT_LE(out.k, 100u);
  EXPECT_DOUBLE_EQ(out.T, 2.0 * static_cast<double>(out.k) / 2000.0);
  EXPECT_DOUBLE_EQ(out.p, std::min(1.0, out.T));
  EXPECT_FALSE(out.reject);
}

TEST(Summary, UnimodalHasNoCutoff) {
  RngStream s(2, 0);
  std::vector<double> v(2000);
  for (auto& x : v) x = std::abs(s.normal());
  const auto out = evaluate_summary(v, 0.05, cache().get(v.size()));
  EXPECT_FALSE(out.cutoff.has_value());
  EXPECT_EQ(out.k, 0u);
  EXPECT_EQ(out.p, 0.0);
  EXPECT_TRUE(out.reject);
}

TEST(Summary, InvariantToInputOrder) {
  auto v = two_clusters(1500, 500, 3);
  const auto a = evaluate_summary(v, 0.05, cache().get(v.size()));
  std::shuffle(v.begin(), v.end(), std::mt19937_64(4));
  const auto b = evaluate_summary(v, 0.05, cache().get(v.size()));
  EXPECT_EQ(a.cutoff, b.cutoff);
  EXPECT_EQ(a.k, b.k);
  EXPECT_EQ(a.p, b.p);
}

TEST(Summary, PValueCappedAtOne) {
  const auto v = two_clusters(1000, 1000, 5);
  const auto out = evaluate_summary(v, 0.05, cache().get(v.size()));
  EXPECT_LE(out.p, 1.0);
  EXPECT_GE(out.p, 0.0);
  if (out.T >= 1.0) {
    EXPECT_EQ(out.p, 1.0);
  }
}

TEST(Summary, RejectIffBelowAlpha) {
  const auto v = two_clusters(1960, 40, 6);
  const auto cal = cache().get(v.size());
  const auto base = evaluate_summary(v, 0.05, cal);
  for (double alpha : {0.0, 0.01, 0.03, 0.05, 0.1, 0.5}) {
    const auto out = evaluate_summary(v, alpha, cal);
    EXPECT_EQ(out.reject, base.p < alpha) << alpha;
  }
}

TEST(Summary, SizeMustMatchCalibration) {
  EXPECT_THROW(evaluate_summary(std::vector<double>(500, 1.0), 0.05, cache().get(1000)), DataError);
}

TEST(RunTest, CircleNullRetainsNonUniqueness) {
  RngStream s(7, 0);
  const CircleMeanProblem problem(sample_circle_mixture(0.0, kPi / 50, 100, s));
  const auto r = run_test(problem, quick(2000));
  ASSERT_TRUE(r.d && r.ell);
  EXPECT_GE(r.d->p, 0.05);
  EXPECT_FALSE(r.reject());
  EXPECT_EQ(r.B_used, 2000u);
}

TEST(RunTest, ClearMajorityRejects) {
  RngStream s(8, 0);
  const CircleMeanProblem problem(sample_circle_mixture(0.1, kPi / 50, 1000, s));
  const auto r = run_test(problem, quick(2000));
  ASSERT_TRUE(r.d.has_value());
  EXPECT_LT(r.d->p, 0.05);
  EXPECT_TRUE(r.reject());
}

TEST(RunTest, EllNeedsLogMap) {
  CurveParams truth{1.0, 0.5, 2.0, 0.2};
  std::vector<double> times;
  for (double t = 0; t <= 10; t += 0.5) times.push_back(t);
  RngStream s(9, 0);
  CurveFitConfig cfg;
  cfg.starts = 3;
  const CurveFitProblem problem(sample_curve_data(truth, times, 0.05, s), cfg);
  EXPECT_THROW(run_test(problem, quick()), DataError);
  auto opt = quick();
  opt.use_ell = false;
  opt.use_d = false;
  EXPECT_THROW(run_test(problem, opt), DataError);
}

TEST(RunTest, AlphaValidated) {
  const CircleMeanProblem problem(std::vector<Angle>(10, Angle(0.0)));
  auto opt = quick(100);
  opt.alpha = 1.0;
  EXPECT_THROW(run_test(problem, opt), DataError);
}

TEST(RunTest, ReportSerializes) {
  RngStream s(10, 0);
  const CircleMeanProblem problem(sample_circle_mixture(0.05, kPi / 50, 50, s));
  auto opt = quick();
  opt.use_ell = false;
  const auto j = to_json(run_test(problem, opt));
  for (const char* key : {"estimator", "n", "B", "B_used", "dropped", "seed", "alpha", "T_d", "p_d", "cutoff_d",
                          "k_d", "reject_d", "p_ell", "reject"})
    EXPECT_TRUE(j.contains(key)) << key;
  EXPECT_TRUE(j["p_ell"].is_null());
  EXPECT_EQ(j["n"], 50);
  const auto again = nlohmann::ordered_json::parse(j.dump());
  EXPECT_EQ(again, j);
}

TEST(Reject, RequiresEveryComputedVariant) {
  TestReport r;
  EXPECT_FALSE(r.reject());
  r.d = SummaryOutcome{};
  r.d->reject = true;
  EXPECT_TRUE(r.reject());
  r.ell = SummaryOutcome{};
  r.ell->reject = false;
  EXPECT_FALSE(r.reject());
}

TEST(Simulate, SizeOutputsSortedPValues) {
  auto opt = quick(200);
  const auto res = simulate_size(CircleNullMixture{0.0, kPi / 50}, 30, 6, opt);
  ASSERT_EQ(res.p_d.size(), 6u);
  ASSERT_EQ(res.p_ell.size(), 6u);
  EXPECT_TRUE(std::is_sorted(res.p_d.begin(), res.p_d.end()));
  EXPECT_NEAR(res.rate_d, static_cast<double>(std::count_if(res.p_d.begin(), res.p_d.end(),
                                                            [](double p) { return p < 0.05; })) / 6.0, 1e-15);
}

TEST(Simulate, DeterministicAcrossThreads) {
  auto opt = quick(200);
  opt.threads = 1;
  const auto a = simulate_size(SpherePoleNull{2, 0.02}, 30, 4, opt);
  opt.threads = 4;
  const auto b = simulate_size(SpherePoleNull{2, 0.02}, 30, 4, opt);
  EXPECT_EQ(a.p_d, b.p_d);
  EXPECT_EQ(a.p_ell, b.p_ell);
}

TEST(Simulate, EmpiricalSupportDraws) {
  auto opt = quick(200);
  const auto res = simulate_size(EmpiricalCircle{{Angle(0.0), Angle(0.1)}}, 20, 3, opt);
  EXPECT_EQ(res.p_d.size(), 3u);
  EXPECT_THROW(simulate_size(EmpiricalCircle{{}}, 20, 1, opt), DataError);
}

TEST(Simulate, PowerGridShape) {
  auto opt = quick(200);
  const std::vector<double> a{0.0, 0.2};
  const std::vector<std::size_t> n{40};
  const auto cells = simulate_power(a, n, 3, opt);
  ASSERT_EQ(cells.size(), 2u);
  EXPECT_EQ(cells[1].a, 0.2);
  for (const auto& c : cells) {
    EXPECT_GE(c.rate_d, 0.0);
    EXPECT_LE(c.rate_d, 1.0);
  }
}
