#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "fixtures.hpp"
#include "uniqtest/multiscale.hpp"
#include "uniqtest/rng.hpp"

using namespace uniqtest;

namespace {

std::vector<double> sorted_uniform(std::size_t n, RngStream& s) {
  std::vector<double> u(n);
  for (auto& v : u) v = s.uniform();
  std::sort(u.begin(), u.end());
  return u;
}

std::vector<double> two_blocks(RngStream& s) {
  std::vector<double> v;
  for (int i = 0; i < 1000; ++i) v.push_back(0.1 * s.uniform());
  for (int i = 0; i < 1000; ++i) v.push_back(0.9 + 0.1 * s.uniform());
  std::sort(v.begin(), v.end());
  return v;
}

const Calibration& cal2000() {
  static const Calibration cal = dw_calibrate(2000);
  return cal;
}

}  // namespace

TEST(Scales, GeometricFromFive) {
  const auto s = slope_scales(100);
  EXPECT_EQ(s, (std::vector<std::size_t>{5, 8, 13, 21, 34, 54, 86}));
  EXPECT_TRUE(slope_scales(5).empty());
}

// Oracle: direct evaluation of the sign statistic without prefix sums.
TEST(Statistic, MatchesDirectSum) {
  RngStream s(1, 0);
  const auto x = sorted_uniform(60, s);
  std::size_t visited = 0;
  detail::for_each_interval(x, [&](std::size_t j, std::size_t k, double z, double penalty) {
    double t = 0;
    for (std::size_t i = j + 1; i < k; ++i) t += 2 * (x[i] - x[j]) / (x[k] - x[j]) - 1;
    const double len = static_cast<double>(k - j);
    EXPECT_NEAR(z, t / std::sqrt((len - 1) / 3), 1e-9);
    EXPECT_NEAR(penalty, std::sqrt(2 * std::log(std::exp(1.0) * 60 / len)), 1e-12);
    ++visited;
  });
  std::size_t expected = 0;
  for (auto len : slope_scales(60)) expected += 60 - len;
  EXPECT_EQ(visited, expected);
}

TEST(Calibrate, FrozenReference) {
  EXPECT_EQ(cal2000().kappa, oracle_value("dw_kappa_n2000_level0.9_reps2000_defaultseed"));
}

TEST(Calibrate, Reproducible) {
  EXPECT_EQ(dw_calibrate(100, 0.9, 1000, 3).kappa, dw_calibrate(100, 0.9, 1000, 3).kappa);
}

TEST(Calibrate, MonotoneInLevel) {
  const double k90 = dw_calibrate(200, 0.9, 1000, 5).kappa;
  const double k99 = dw_calibrate(200, 0.99, 1000, 5).kappa;
  const double k100 = dw_calibrate(200, 1.0, 1000, 5).kappa;
  EXPECT_LT(k90, k99);
  EXPECT_LE(k99, k100);
  // level 1 is the maximum over the Monte Carlo runs
  double mx = -INFINITY;
  for (int r = 0; r < 1000; ++r) {
    RngStream s(5, r);
    mx = std::max(mx, detail::max_excess(sorted_uniform(200, s)));
  }
  EXPECT_EQ(k100, mx);
}

TEST(Calibrate, Preconditions) {
  EXPECT_THROW(dw_calibrate(19), DataError);
  EXPECT_THROW(dw_calibrate(100, 0.9, 999), DataError);
  EXPECT_THROW(dw_calibrate(100, 0.0, 1000), DataError);
}

// Under U(0,1) the detector fires with probability about 1 - level.
TEST(Detect, CalibrationSoundness) {
  const Calibration& cal = cal2000();
  const int trials = 1000;
  int fired = 0;
  for (int t = 0; t < trials; ++t) {
    RngStream s(77, t);  // independent of the calibration seed
    fired += !detect_slopes(sorted_uniform(2000, s), cal).empty();
  }
  const double rate = static_cast<double>(fired) / trials;
  const double tol = 2 * std::sqrt(cal.level * (1 - cal.level) / cal.mc_reps);
  // binomial noise of the check itself at 1000 trials
  const double check_noise = 3 * std::sqrt(0.1 * 0.9 / trials);
  EXPECT_LE(rate, 1 - cal.level + tol + check_noise);
}

TEST(Detect, ArithmeticProgressionIsQuiet) {
  std::vector<double> v(2000);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = 0.5 + 0.001 * i;
  EXPECT_TRUE(detect_slopes(v, cal2000()).empty());
}

TEST(Detect, TwoClustersGiveFallAndRise) {
  RngStream s(2, 0);
  const auto v = two_blocks(s);
  const auto slopes = detect_slopes(v, cal2000());
  bool fall = false, rise = false;
  for (const auto& sl : slopes) {
    EXPECT_LT(sl.lo, sl.hi);
    EXPECT_LT(sl.hi, v.size());
    if (sl.direction == SlopeDirection::falling && sl.lo < 1000 && sl.hi >= 1000) fall = true;
    if (sl.direction == SlopeDirection::rising && sl.lo < 1000 && sl.hi >= 1000) rise = true;
  }
  EXPECT_TRUE(fall);
  EXPECT_TRUE(rise);
  // The rising slope starts on the last points of the first cluster, so the
  // cutoff sits at the left edge of the gap and the count is about 1000.
  const auto cut = find_cutoff(v, slopes);
  ASSERT_TRUE(cut.has_value());
  EXPECT_GE(*cut, 0.09);
  EXPECT_LE(*cut, 0.9);
  const auto beyond = std::count_if(v.begin(), v.end(), [&](double x) { return x > *cut; });
  EXPECT_GE(beyond, 1000);
  EXPECT_LE(beyond, 1010);
}

TEST(Detect, MinimalIntervalsOnly) {
  RngStream s(3, 0);
  const auto slopes = detect_slopes(two_blocks(s), cal2000());
  for (const auto& a : slopes)
    for (const auto& b : slopes)
      if (&a != &b && a.direction == b.direction) {
        EXPECT_FALSE(a.lo <= b.lo && b.hi <= a.hi);
      }
  EXPECT_TRUE(std::is_sorted(slopes.begin(), slopes.end(),
                             [](const auto& a, const auto& b) { return a.lo < b.lo; }));
}

TEST(Detect, AffineEquivariance) {
  RngStream s(4, 0);
  const auto v = two_blocks(s);
  std::vector<double> w(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) w[i] = 4.0 * v[i] + 3.0;
  const auto a = detect_slopes(v, cal2000()), b = detect_slopes(w, cal2000());
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].lo, b[i].lo);
    EXPECT_EQ(a[i].hi, b[i].hi);
    EXPECT_EQ(a[i].direction, b[i].direction);
  }
}

TEST(Detect, TiedIntervalsSkipped) {
  std::vector<double> v(100, 0.0);
  for (std::size_t i = 50; i < 100; ++i) v[i] = 1.0 + 0.01 * i;
  const auto cal = dw_calibrate(100, 0.9, 1000);
  const auto slopes = detect_slopes(v, cal);
  for (const auto& sl : slopes) EXPECT_GT(v[sl.hi], v[sl.lo]);
}

TEST(Detect, Preconditions) {
  const auto cal = dw_calibrate(100, 0.9, 1000);
  EXPECT_THROW(detect_slopes(std::vector<double>(99, 1.0), cal), DataError);
  std::vector<double> unsorted(100, 0.0);
  unsorted[0] = 1.0;
  EXPECT_THROW(detect_slopes(unsorted, cal), DataError);
}

TEST(Cutoff, EmptyAndFallingOnly) {
  const std::vector<double> v{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
  EXPECT_FALSE(find_cutoff(v, std::vector<SlopeInterval>{}).has_value());
  const std::vector<SlopeInterval> fall_only{{0, 6, SlopeDirection::falling, -5.0}};
  EXPECT_FALSE(find_cutoff(v, fall_only).has_value());
}

TEST(Cutoff, FirstRiseAfterFirstFall) {
  const std::vector<double> v{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
  const std::vector<SlopeInterval> slopes{{0, 5, SlopeDirection::rising, 4.0},
                                          {2, 6, SlopeDirection::falling, -4.0},
                                          {4, 9, SlopeDirection::falling, -4.0},
                                          {5, 9, SlopeDirection::rising, 4.0},
                                          {7, 9, SlopeDirection::rising, 4.0}};
  const auto cut = find_cutoff(v, slopes);
  ASSERT_TRUE(cut.has_value());
  EXPECT_EQ(*cut, 5.0);
  EXPECT_GE(*cut, v[2]);
}

TEST(SpreadTies, LeavesDistinctValuesAlone) {
  const std::vector<double> v{0.1, 0.4, 0.7, 2.0};
  EXPECT_EQ(spread_ties(v), v);
  const std::vector<double> single_run(5, 3.0);
  EXPECT_EQ(spread_ties(single_run), single_run);
}

TEST(SpreadTies, SpreadsRunsWithinTheirCell) {
  const std::vector<double> v{0.0, 1.0, 1.0, 1.0, 1.0, 3.0};
  const auto w = spread_ties(v);
  ASSERT_EQ(w.size(), v.size());
  EXPECT_TRUE(std::is_sorted(w.begin(), w.end()));
  EXPECT_EQ(w[0], 0.0);
  EXPECT_EQ(w[5], 3.0);
  // cell [0.5, 2.0], four points at the centres of equal sub-cells
  EXPECT_NEAR(w[1], 0.5 + 1.5 * 0.125, 1e-15);
  EXPECT_NEAR(w[4], 0.5 + 1.5 * 0.875, 1e-15);
  double mean = 0;
  for (int i = 1; i <= 4; ++i) mean += w[i] / 4;
  EXPECT_NEAR(mean, 1.25, 1e-15);
}

TEST(SpreadTies, NearEqualValuesCountAsTies) {
  const std::vector<double> v{0.0, 1.0, 1.0 + 1e-15, 1.0 + 2e-15, 2.0};
  const auto w = spread_ties(v);
  EXPECT_GT(w[2] - w[1], 0.1);
}

TEST(SpreadTies, LatticeSampleBecomesQuiet) {
  // uniform values rounded to a coarse lattice: the raw ties trigger the
  // detector, the spread values look like the uniform sample they are
  RngStream s(9, 0);
  auto u = sorted_uniform(2000, s);
  for (auto& x : u) x = std::round(x * 60) / 60;
  EXPECT_FALSE(detect_slopes(u, cal2000()).empty());
  EXPECT_TRUE(detect_slopes(spread_ties(u), cal2000()).empty());
}

TEST(CalibrationCache, PersistsAcrossInstances) {
  const std::string path = ::testing::TempDir() + "uniqtest_cal_cache.txt";
  std::remove(path.c_str());
  double kappa = 0;
  {
    CalibrationCache cache(path);
    kappa = cache.get(150, 0.9, 1000, 11).kappa;
  }
  CalibrationCache again(path);
  EXPECT_EQ(again.get(150, 0.9, 1000, 11).kappa, kappa);
  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  EXPECT_NE(line.find("n=150"), std::string::npos);
  EXPECT_NE(line.find("kappa="), std::string::npos);
}
