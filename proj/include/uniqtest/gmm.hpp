#pragma once

// Gaussian mixture fit by EM, as an m-estimator with
// rho(x, params) = -log sum_c w_c phi(x; m_c, S_c).

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "uniqtest/assignment.hpp"
#include "uniqtest/errors.hpp"
#include "uniqtest/problem.hpp"
#include "uniqtest/rng.hpp"

namespace uniqtest {

struct GmmParams {
  Eigen::VectorXd weights;                 ///< on the simplex
  std::vector<Eigen::VectorXd> means;      ///< k vectors in R^q
  std::vector<Eigen::MatrixXd> covariances;  ///< k SPD q x q matrices

  int k() const { return static_cast<int>(weights.size()); }
  Eigen::Index q() const { return means.empty() ? 0 : means.front().size(); }

  /// Components ordered lexicographically by mean, a fixed labelling.
  void canonicalize() {
    std::vector<int> idx(k());
    for (int c = 0; c < k(); ++c) idx[c] = c;
    std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) {
      return std::lexicographical_compare(means[a].data(), means[a].data() + q(), means[b].data(),
                                          means[b].data() + q());
    });
    GmmParams sorted;
    sorted.weights.resize(k());
    for (int c = 0; c < k(); ++c) {
      sorted.weights(c) = weights(idx[c]);
      sorted.means.push_back(means[idx[c]]);
      sorted.covariances.push_back(covariances[idx[c]]);
    }
    *this = std::move(sorted);
  }
};

namespace detail {
inline void require_compatible(const GmmParams& a, const GmmParams& b) {
  if (a.k() != b.k() || a.q() != b.q()) throw DataError("mixture parameters of different shape");
}

inline Eigen::MatrixXd gmm_cost_matrix(const GmmParams& a, const GmmParams& b) {
  const int k = a.k();
  Eigen::MatrixXd cost(k, k);
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < k; ++j) {
      const double dw = a.weights(i) - b.weights(j);
      cost(i, j) = (a.means[i] - b.means[j]).squaredNorm() + dw * dw +
                   (a.covariances[i] - b.covariances[j]).squaredNorm();
    }
  return cost;
}
}  // namespace detail

/// Permutation-matched parameter distance, the square root of
///   min_sigma sum_c ||m_c - m'_s(c)||^2 + (w_c - w'_s(c))^2 + ||S_c - S'_s(c)||_F^2,
/// i.e. the Euclidean distance between parameter vectors modulo relabelling.
inline double gmm_distance(const GmmParams& a, const GmmParams& b) {
  detail::require_compatible(a, b);
  const Eigen::MatrixXd cost = detail::gmm_cost_matrix(a, b);
  const auto match = optimal_assignment(cost);
  double d = 0.0;
  for (int i = 0; i < a.k(); ++i) d += cost(i, match[i]);
  return std::sqrt(d);
}

/// Parameter difference b - a after matching b's labels to a's.  Its norm
/// equals gmm_distance(a, b).
inline Eigen::VectorXd gmm_log(const GmmParams& base, const GmmParams& other) {
  detail::require_compatible(base, other);
  const auto match = optimal_assignment(detail::gmm_cost_matrix(base, other));
  const Eigen::Index q = base.q();
  const Eigen::Index block = 1 + q + q * q;
  Eigen::VectorXd v(base.k() * block);
  for (int c = 0; c < base.k(); ++c) {
    const int o = match[c];
    auto seg = v.segment(c * block, block);
    seg(0) = other.weights(o) - base.weights(c);
    seg.segment(1, q) = other.means[o] - base.means[c];
    const Eigen::MatrixXd dcov = other.covariances[o] - base.covariances[c];
    seg.tail(q * q) = Eigen::Map<const Eigen::VectorXd>(dcov.data(), q * q);
  }
  return v;
}

struct GmmConfig {
  int starts = 20;
  double tol = 1e-9;  ///< stop when the mean NLL improves by less than this
  int max_iter = 1000;     ///< EM map evaluations per start
  bool accelerate = true;  ///< squared extrapolation between EM steps
  double merge_radius = 1e-4;  ///< in gmm_distance
  /// Covariance eigenvalue floor; negative means 1e-6 * trace(sample cov) / q.
  double cov_floor = -1.0;
};

class GmmProblem {
 public:
  using Descriptor = GmmParams;

  /// points: one row per observation.
  GmmProblem(const Eigen::MatrixXd& points, int k, GmmConfig config = {})
      : data_(points.transpose()), k_(k), config_(config) {
    const auto n = data_.cols();
    if (k_ < 1) throw DataError("mixture needs k >= 1");
    if (data_.rows() < 1) throw DataError("mixture data needs at least one feature column");
    if (n <= k_) throw DataError("mixture fit needs more points than components (k >= n)");
    if (!data_.allFinite()) throw DataError("non-finite mixture data");
    if (config_.starts < 1) throw DataError("need at least one start");
    const Eigen::VectorXd mean = data_.rowwise().mean();
    const Eigen::MatrixXd centered = data_.colwise() - mean;
    const double trace = centered.squaredNorm() / static_cast<double>(n);
    floor_ = config_.cov_floor >= 0.0 ? config_.cov_floor : 1e-6 * trace / static_cast<double>(q());
    if (!(floor_ > 0.0)) floor_ = 1e-12;
  }

  std::size_t size() const { return static_cast<std::size_t>(data_.cols()); }
  Eigen::Index q() const { return data_.rows(); }
  int k() const { return k_; }
  double cov_floor() const { return floor_; }
  std::string id() const { return "gmm-k" + std::to_string(k_); }

  double loss(const GmmParams& params, std::span<const double> weights) const {
    check_weights(weights);
    return e_step(params, weights, nullptr);
  }

  double distance(const GmmParams& a, const GmmParams& b) const { return gmm_distance(a, b); }
  Eigen::VectorXd log(const GmmParams& base, const GmmParams& other) const { return gmm_log(base, other); }

  FitResult<GmmParams> fit(std::span<const double> weights, RngStream& stream, const GmmParams* warm_start) const {
    check_weights(weights);
    std::vector<LocalMinimum<GmmParams>> candidates;
    int used = 0;
    if (warm_start) {
      ++used;
      if (auto r = run_em(*warm_start, weights)) candidates.push_back(std::move(*r));
    }
    for (int s = 0; s < config_.starts; ++s) {
      ++used;
      RngStream seed_stream = stream.substream(static_cast<std::uint64_t>(s));
      if (auto r = run_em(seed_params(weights, seed_stream), weights)) candidates.push_back(std::move(*r));
    }
    if (candidates.empty()) throw NumericError("mixture fit: every EM start collapsed");
    auto minima = merge_minima(std::move(candidates), config_.merge_radius,
                               [](const GmmParams& a, const GmmParams& b) { return gmm_distance(a, b); });
    FitResult<GmmParams> out{minima.front().descriptor, minima.front().loss, std::move(minima), used};
    return out;
  }

 private:
  void check_weights(std::span<const double> weights) const {
    if (weights.size() != size()) throw DataError("weight vector length does not match sample size");
  }

  Eigen::MatrixXd floored(const Eigen::MatrixXd& cov) const {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
    Eigen::VectorXd ev = eig.eigenvalues();
    if (ev.minCoeff() >= floor_) return 0.5 * (cov + cov.transpose());
    ev = ev.cwiseMax(floor_);
    return eig.eigenvectors() * ev.asDiagonal() * eig.eigenvectors().transpose();
  }

  /// Weighted mean NLL of `params`; fills responsibilities (k x n) if asked.
  double e_step(const GmmParams& params, std::span<const double> weights, Eigen::MatrixXd* resp) const {
    if (params.k() != k_ || params.q() != q()) throw DataError("mixture parameters do not match the problem");
    const Eigen::Index n = data_.cols();
    const Eigen::Index dim = q();
    const double log_2pi = std::log(2.0 * std::numbers::pi);
    Eigen::ArrayXXd lp(k_, n);
    Eigen::MatrixXd z(dim, n);
    for (int c = 0; c < k_; ++c) {
      Eigen::LLT<Eigen::MatrixXd> llt(params.covariances[c]);
      if (llt.info() != Eigen::Success || !(params.weights(c) > 0.0))
        return std::numeric_limits<double>::infinity();
      z = data_.colwise() - params.means[c];
      llt.matrixL().solveInPlace(z);
      const double log_det = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
      const double log_const = std::log(params.weights(c)) - 0.5 * (static_cast<double>(dim) * log_2pi + log_det);
      lp.row(c) = log_const - 0.5 * z.colwise().squaredNorm().array();
    }
    const Eigen::Map<const Eigen::ArrayXd> w(weights.data(), n);
    const Eigen::Array<double, 1, Eigen::Dynamic> top = lp.colwise().maxCoeff();
    lp.rowwise() -= top;
    lp = lp.max(-700.0).exp();
    const Eigen::Array<double, 1, Eigen::Dynamic> sum = lp.colwise().sum();
    const double total = -((top + sum.log()) * w.transpose()).sum();
    if (resp) *resp = (lp.rowwise() / sum).matrix();
    return total;
  }

  std::optional<GmmParams> m_step(const Eigen::MatrixXd& resp, std::span<const double> weights) const {
    const Eigen::Index n = data_.cols();
    const Eigen::Map<const Eigen::VectorXd> w(weights.data(), n);
    GmmParams next;
    next.weights.resize(k_);
    Eigen::VectorXd rw(n);
    Eigen::MatrixXd centered(q(), n);
    for (int c = 0; c < k_; ++c) {
      rw = resp.row(c).transpose().cwiseProduct(w);
      const double mass = rw.sum();
      if (!(mass > 1e-10)) return std::nullopt;
      Eigen::VectorXd mean = data_ * rw / mass;
      centered = data_.colwise() - mean;
      const Eigen::MatrixXd cov = (centered * rw.asDiagonal()) * centered.transpose() / mass;
      next.weights(c) = mass;
      next.means.push_back(std::move(mean));
      next.covariances.push_back(floored(cov));
    }
    next.weights /= next.weights.sum();
    return next;
  }

  Eigen::VectorXd pack(const GmmParams& p) const {
    const Eigen::Index dim = q();
    Eigen::VectorXd v(k_ * (1 + dim + dim * dim));
    Eigen::Index at = 0;
    for (int c = 0; c < k_; ++c) {
      v(at++) = p.weights(c);
      v.segment(at, dim) = p.means[c];
      at += dim;
      v.segment(at, dim * dim) = Eigen::Map<const Eigen::VectorXd>(p.covariances[c].data(), dim * dim);
      at += dim * dim;
    }
    return v;
  }

  /// Inverse of pack; nullopt when the point leaves the parameter space.
  std::optional<GmmParams> unpack(const Eigen::VectorXd& v) const {
    const Eigen::Index dim = q();
    GmmParams p;
    p.weights.resize(k_);
    Eigen::Index at = 0;
    for (int c = 0; c < k_; ++c) {
      p.weights(c) = v(at++);
      if (!(p.weights(c) > 0.0)) return std::nullopt;
      p.means.push_back(v.segment(at, dim));
      at += dim;
      Eigen::MatrixXd cov = Eigen::Map<const Eigen::MatrixXd>(v.data() + at, dim, dim);
      at += dim * dim;
      cov = 0.5 * (cov + cov.transpose());
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov, Eigen::EigenvaluesOnly);
      if (!(eig.eigenvalues().minCoeff() >= floor_)) return std::nullopt;
      p.covariances.push_back(std::move(cov));
    }
    p.weights /= p.weights.sum();
    return p;
  }

  // EM with squared extrapolation (SQUAREM): two EM steps define a secant
  // direction; the extrapolated point is stabilized by one more EM step and
  // accepted only if it does not increase the loss, so the sequence stays
  // monotone and its fixed points are those of plain EM.
  std::optional<LocalMinimum<GmmParams>> run_em(GmmParams params, std::span<const double> weights) const {
    Eigen::MatrixXd resp;
    double current = e_step(params, weights, &resp);
    if (!std::isfinite(current)) return std::nullopt;
    int steps = 0;
    auto em_step = [&](const Eigen::MatrixXd& r, GmmParams& out, double& loss, Eigen::MatrixXd& out_resp) {
      ++steps;
      auto next = m_step(r, weights);
      if (!next) return false;
      out = std::move(*next);
      loss = e_step(out, weights, &out_resp);
      return std::isfinite(loss);
    };
    GmmParams p1, p2, p3;
    double l1 = 0.0, l2 = 0.0, l3 = 0.0;
    Eigen::MatrixXd r1, r2, r3;
    while (steps < config_.max_iter) {
      if (!em_step(resp, p1, l1, r1)) return std::nullopt;
      if (!config_.accelerate) {
        const bool done = current - l1 < config_.tol;
        params = std::move(p1);
        current = l1;
        resp = std::move(r1);
        if (done) break;
        continue;
      }
      if (current - l1 < config_.tol) {
        params = std::move(p1);
        current = l1;
        break;
      }
      if (!em_step(r1, p2, l2, r2)) return std::nullopt;
      const Eigen::VectorXd t0 = pack(params);
      const Eigen::VectorXd r = pack(p1) - t0;
      const Eigen::VectorXd v = pack(p2) - t0 - 2.0 * r;
      const double rn = r.norm();
      const double vn = v.norm();
      bool accepted = false;
      if (vn > 0.0) {
        const double alpha = std::min(-1.0, -rn / vn);
        if (alpha < -1.0) {
          if (auto extrapolated = unpack(t0 - 2.0 * alpha * r + alpha * alpha * v)) {
            Eigen::MatrixXd re;
            const double le = e_step(*extrapolated, weights, &re);
            if (std::isfinite(le) && em_step(re, p3, l3, r3) && l3 <= l2) accepted = true;
          }
        }
      }
      const double previous = current;
      if (accepted) {
        params = std::move(p3);
        current = l3;
        resp = std::move(r3);
      } else {
        params = std::move(p2);
        current = l2;
        resp = std::move(r2);
      }
      if (previous - current < config_.tol) break;
    }
    params.canonicalize();
    return LocalMinimum<GmmParams>{std::move(params), current};
  }

  /// k-means++ style seeding over the weighted sample.
  GmmParams seed_params(std::span<const double> weights, RngStream& stream) const {
    const Eigen::Index n = data_.cols();
    auto draw = [&](const Eigen::VectorXd& mass) {
      const double total = mass.sum();
      double u = stream.uniform() * total;
      Eigen::Index last_positive = 0;
      for (Eigen::Index i = 0; i < n; ++i) {
        if (mass(i) <= 0.0) continue;
        last_positive = i;
        if (u < mass(i)) return i;
        u -= mass(i);
      }
      return last_positive;
    };
    const Eigen::Map<const Eigen::VectorXd> w(weights.data(), n);
    std::vector<Eigen::VectorXd> centers{data_.col(draw(w))};
    Eigen::VectorXd nearest = Eigen::VectorXd::Constant(n, std::numeric_limits<double>::infinity());
    while (static_cast<int>(centers.size()) < k_) {
      for (Eigen::Index i = 0; i < n; ++i)
        nearest(i) = std::min(nearest(i), (data_.col(i) - centers.back()).squaredNorm());
      const Eigen::VectorXd mass = w.cwiseProduct(nearest);
      centers.push_back(data_.col(mass.sum() > 0.0 ? draw(mass) : draw(w)));
    }
    const Eigen::VectorXd mean = data_ * w;
    const Eigen::MatrixXd centered = data_.colwise() - mean;
    const Eigen::MatrixXd total_cov = floored(centered * w.asDiagonal() * centered.transpose());
    GmmParams p;
    p.weights = Eigen::VectorXd::Constant(k_, 1.0 / k_);
    p.means = std::move(centers);
    p.covariances.assign(k_, total_cov);
    return p;
  }

  Eigen::MatrixXd data_;  // q x n
  int k_;
  GmmConfig config_;
  double floor_ = 0.0;
};

inline FitResult<GmmParams> gmm_fit(const Eigen::MatrixXd& points, int k, std::uint64_t seed,
                                    GmmConfig config = {}) {
  GmmProblem problem(points, k, config);
  RngStream stream(seed, 0);
  return problem.fit(uniform_weights(problem.size()), stream, nullptr);
}

}  // namespace uniqtest
