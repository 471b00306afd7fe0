#pragma once

// Multiscale slope detection on sorted one-dimensional data.
//
// For order statistics x_(j) < x_(k) the local sign statistic
//   T_jk = sum_{j<i<k} (2 (x_(i) - x_(j)) / (x_(k) - x_(j)) - 1)
// has mean zero and variance (k-j-1)/3 under a locally flat density.  A
// positive value means the points pile up near x_(k): the density rises.
// Intervals are flagged when the standardized value exceeds a scale penalty
// plus a Monte Carlo calibrated constant kappa.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "uniqtest/errors.hpp"
#include "uniqtest/parallel.hpp"
#include "uniqtest/rng.hpp"

namespace uniqtest {

inline constexpr double kDefaultDetectorLevel = 0.9;
inline constexpr int kDefaultCalibrationReps = 2000;
inline constexpr std::uint64_t kDefaultCalibrationSeed = 0x6d756c7469736361ULL;

enum class SlopeDirection { rising, falling };

struct SlopeInterval {
  std::size_t lo;
  std::size_t hi;
  SlopeDirection direction;
  double standardized_stat;
};

struct Calibration {
  std::size_t n = 0;
  double level = kDefaultDetectorLevel;
  double kappa = 0.0;
  int mc_reps = kDefaultCalibrationReps;
  std::uint64_t seed = kDefaultCalibrationSeed;
};

/// Interval lengths k - j: 5, 8, 13, 21, 34, 54, ... (ratio ~1.6), below n.
inline std::vector<std::size_t> slope_scales(std::size_t n) {
  std::vector<std::size_t> scales;
  for (std::size_t len = 5; len < n; len = static_cast<std::size_t>(std::lround(1.6 * static_cast<double>(len))))
    scales.push_back(len);
  return scales;
}

namespace detail {

/// Visits every admissible interval with (lo, hi, standardized T, penalty).
template <class Visit>
void for_each_interval(std::span<const double> x, Visit&& visit) {
  const std::size_t n = x.size();
  std::vector<long double> prefix(n + 1, 0.0L);
  for (std::size_t i = 0; i < n; ++i) prefix[i + 1] = prefix[i] + x[i];
  const double e_n = std::exp(1.0) * static_cast<double>(n);
  for (std::size_t len : slope_scales(n)) {
    const double inner = static_cast<double>(len - 1);
    const double sd = std::sqrt(inner / 3.0);
    const double penalty = std::sqrt(2.0 * std::log(e_n / static_cast<double>(len)));
    for (std::size_t j = 0; j + len < n; ++j) {
      const std::size_t k = j + len;
      const double span = x[k] - x[j];
      if (!(span > 0.0)) continue;
      const long double sum = prefix[k] - prefix[j + 1] - static_cast<long double>(inner) * x[j];
      const double t = static_cast<double>(2.0L * sum / span) - inner;
      visit(j, k, t / sd, penalty);
    }
  }
}

inline double max_excess(std::span<const double> x) {
  double best = -std::numeric_limits<double>::infinity();
  for_each_interval(x, [&](std::size_t, std::size_t, double z, double penalty) {
    best = std::max(best, std::abs(z) - penalty);
  });
  return best;
}

}  // namespace detail

/// kappa = level-quantile of the maximal penalized statistic over mc_reps
/// sorted U(0,1) samples of size n.
inline Calibration dw_calibrate(std::size_t n, double level = kDefaultDetectorLevel,
                                int mc_reps = kDefaultCalibrationReps,
                                std::uint64_t seed = kDefaultCalibrationSeed) {
  if (n < 20) throw DataError("multiscale calibration needs n >= 20");
  if (!(level > 0.0 && level <= 1.0)) throw DataError("calibration level must lie in (0, 1]");
  if (mc_reps < 1000) throw DataError("calibration needs at least 1000 Monte Carlo replicates");
  std::vector<double> maxima(static_cast<std::size_t>(mc_reps));
  parallel_for(maxima.size(), [&](std::size_t r) {
    RngStream stream(seed, r);
    std::vector<double> u(n);
    for (auto& v : u) v = stream.uniform();
    std::sort(u.begin(), u.end());
    maxima[r] = detail::max_excess(u);
  });
  std::sort(maxima.begin(), maxima.end());
  const auto idx = static_cast<std::size_t>(std::ceil(level * static_cast<double>(mc_reps))) - 1;
  return Calibration{n, level, maxima[std::min(idx, maxima.size() - 1)], mc_reps, seed};
}

/// Flags rising/falling intervals on ascending `values` and keeps the
/// inclusion-minimal ones of each direction, sorted by lo.
inline std::vector<SlopeInterval> detect_slopes(std::span<const double> values, const Calibration& cal) {
  if (values.size() != cal.n) throw DataError("calibration size does not match the number of values");
  if (!std::is_sorted(values.begin(), values.end())) throw DataError("detect_slopes needs ascending values");
  std::vector<SlopeInterval> rising, falling;
  detail::for_each_interval(values, [&](std::size_t j, std::size_t k, double z, double penalty) {
    const double bound = penalty + cal.kappa;
    if (z > bound) rising.push_back({j, k, SlopeDirection::rising, z});
    else if (z < -bound) falling.push_back({j, k, SlopeDirection::falling, z});
  });
  auto minimal = [](std::vector<SlopeInterval>& v) {
    std::sort(v.begin(), v.end(), [](const auto& a, const auto& b) {
      return a.lo != b.lo ? a.lo > b.lo : a.hi < b.hi;
    });
    std::vector<SlopeInterval> kept;
    std::size_t best_hi = std::numeric_limits<std::size_t>::max();
    for (const auto& s : v) {
      if (best_hi > s.hi) kept.push_back(s);
      best_hi = std::min(best_hi, s.hi);
    }
    return kept;
  };
  auto out = minimal(rising);
  auto f = minimal(falling);
  out.insert(out.end(), f.begin(), f.end());
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
    return std::tie(a.lo, a.hi) < std::tie(b.lo, b.hi);
  });
  return out;
}

/// Index (into values) where the first rising slope beyond the first falling
/// slope starts.
inline std::optional<std::size_t> find_cutoff_index(std::span<const double> values,
                                                    std::span<const SlopeInterval> slopes) {
  const SlopeInterval* fall = nullptr;
  for (const auto& s : slopes)
    if (s.direction == SlopeDirection::falling && (!fall || s.lo < fall->lo)) fall = &s;
  if (!fall) return std::nullopt;
  const double floor_value = values[fall->lo];
  const SlopeInterval* rise = nullptr;
  for (const auto& s : slopes)
    if (s.direction == SlopeDirection::rising && values[s.lo] > floor_value && (!rise || s.lo < rise->lo)) rise = &s;
  if (!rise) return std::nullopt;
  return rise->lo;
}

inline std::optional<double> find_cutoff(std::span<const double> values, std::span<const SlopeInterval> slopes) {
  if (auto idx = find_cutoff_index(values, slopes)) return values[*idx];
  return std::nullopt;
}

/// Replaces each run of t >= 2 (numerically) equal values by t points evenly spaced over
/// the run's cell (halfway to the neighbouring distinct values).  Order is
/// preserved; distinct values are untouched.  Summaries of discretized data
/// (e.g. angles recorded in whole degrees) sit on a lattice, and the sign
/// statistic reads the tie pattern as strong local slopes; spreading restores
/// the continuous picture the statistic is calibrated for.  A sample that is a
/// single run is returned unchanged.  Values within rel_tol * max|value| of
/// a run's first value count as equal, since the same summary computed along
/// different arithmetic paths differs in the last bits.
inline std::vector<double> spread_ties(std::span<const double> sorted, double rel_tol = 1e-9) {
  std::vector<double> out(sorted.begin(), sorted.end());
  const std::size_t n = sorted.size();
  if (n == 0) return out;
  const double tol = rel_tol * std::max(std::abs(sorted.front()), std::abs(sorted.back()));
  std::size_t start = 0;
  while (start < n) {
    std::size_t end = start + 1;
    while (end < n && sorted[end] - sorted[start] <= tol) ++end;
    const std::size_t t = end - start;
    if (t >= 2 && !(start == 0 && end == n)) {
      const double v = 0.5 * (sorted[start] + sorted[end - 1]);
      double lo = start > 0 ? 0.5 * (v - sorted[start - 1]) : -1.0;
      double hi = end < n ? 0.5 * (sorted[end] - v) : -1.0;
      if (lo < 0.0) lo = hi;
      if (hi < 0.0) hi = lo;
      const double width = lo + hi;
      for (std::size_t i = 0; i < t; ++i)
        out[start + i] = v - lo + width * (static_cast<double>(i) + 0.5) / static_cast<double>(t);
    }
    start = end;
  }
  return out;
}

/// Calibrations memoized in process and optionally in a key=value text file,
/// one calibration per line.
class CalibrationCache {
 public:
  explicit CalibrationCache(std::string path = {}) : path_(std::move(path)) {
    if (!path_.empty()) load();
  }

  Calibration get(std::size_t n, double level = kDefaultDetectorLevel, int mc_reps = kDefaultCalibrationReps,
                  std::uint64_t seed = kDefaultCalibrationSeed) {
    const Key key{n, level, mc_reps, seed};
    {
      std::lock_guard lock(mutex_);
      if (auto it = entries_.find(key); it != entries_.end()) return it->second;
    }
    Calibration cal = dw_calibrate(n, level, mc_reps, seed);
    std::lock_guard lock(mutex_);
    entries_.emplace(key, cal);
    if (!path_.empty()) append(cal);
    return cal;
  }

  const std::string& path() const { return path_; }

  static CalibrationCache& shared() {
    static CalibrationCache cache;
    return cache;
  }

 private:
  using Key = std::tuple<std::size_t, double, int, std::uint64_t>;

  void load() {
    std::ifstream in(path_);
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty() || line[0] == '#') continue;
      std::istringstream fields(line);
      std::string token;
      Calibration cal;
      int seen = 0;
      while (fields >> token) {
        const auto eq = token.find('=');
        if (eq == std::string::npos) continue;
        const std::string name = token.substr(0, eq);
        const std::string value = token.substr(eq + 1);
        try {
          if (name == "n") cal.n = std::stoull(value), ++seen;
          else if (name == "level") cal.level = std::stod(value), ++seen;
          else if (name == "mc_reps") cal.mc_reps = std::stoi(value), ++seen;
          else if (name == "seed") cal.seed = std::stoull(value), ++seen;
          else if (name == "kappa") cal.kappa = std::stod(value), ++seen;
        } catch (const std::exception&) {
          seen = -100;
        }
      }
      if (seen == 5) entries_.emplace(Key{cal.n, cal.level, cal.mc_reps, cal.seed}, cal);
    }
  }

  void append(const Calibration& cal) const {
    std::ofstream out(path_, std::ios::app);
    char buf[256];
    std::snprintf(buf, sizeof buf, "n=%zu level=%.17g mc_reps=%d seed=%llu kappa=%.17g\n", cal.n, cal.level,
                  cal.mc_reps, static_cast<unsigned long long>(cal.seed), cal.kappa);
    out << buf;
  }

  std::string path_;
  std::mutex mutex_;
  std::map<Key, Calibration> entries_;
};

}  // namespace uniqtest
