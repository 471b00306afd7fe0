#pragma once

// Differential geometry on S^1 and on S^p embedded in R^(p+1).

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numbers>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "uniqtest/errors.hpp"

namespace uniqtest {

inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

/// Angle on the circle, kept in [0, 2*pi).
class Angle {
 public:
  Angle() = default;
  explicit Angle(double radians) : value_(wrap(radians)) {}

  double value() const { return value_; }

  static double wrap(double radians) {
    double w = std::fmod(radians, kTwoPi);
    if (w < 0.0) w += kTwoPi;
    // fmod of a tiny negative number can round up to exactly 2*pi
    if (w >= kTwoPi) w = 0.0;
    return w;
  }

  friend bool operator==(const Angle&, const Angle&) = default;

 private:
  double value_ = 0.0;
};

/// Geodesic distance on S^1, in [0, pi].
inline double circle_distance(Angle a, Angle b) {
  const double diff = std::fmod(std::abs(a.value() - b.value()), kTwoPi);
  return std::min(diff, kTwoPi - diff);
}

/// Signed shortest rotation taking `base` to `target`, in [-pi, pi).
/// This is the log map of S^1 written in the angular coordinate.
inline double circle_log(Angle base, Angle target) {
  double d = target.value() - base.value();
  if (d >= std::numbers::pi) d -= kTwoPi;
  if (d < -std::numbers::pi) d += kTwoPi;
  return d;
}

/// Unit vector in R^(p+1), p >= 1.  Normalized on construction.
class SpherePoint {
 public:
  explicit SpherePoint(Eigen::VectorXd coords) : coords_(std::move(coords)) {
    if (coords_.size() < 2) throw DataError("SpherePoint needs at least 2 coordinates (p >= 1)");
    const double norm = coords_.norm();
    if (!(norm > 0.0) || !std::isfinite(norm)) throw DataError("SpherePoint from zero or non-finite vector");
    coords_ /= norm;
  }

  /// Canonical basis vector e_axis of R^(dim).
  static SpherePoint basis(Eigen::Index dim, Eigen::Index axis) {
    return SpherePoint(Eigen::VectorXd::Unit(dim, axis));
  }

  const Eigen::VectorXd& coords() const { return coords_; }
  Eigen::Index ambient_dim() const { return coords_.size(); }
  /// Intrinsic dimension p of S^p.
  Eigen::Index dim() const { return coords_.size() - 1; }

 private:
  Eigen::VectorXd coords_;
};

/// Tangent vector at a point of S^p, stored in ambient coordinates.
class TangentVector {
 public:
  TangentVector(SpherePoint base, Eigen::VectorXd vec) : base_(std::move(base)), vec_(std::move(vec)) {
    if (vec_.size() != base_.ambient_dim()) throw DataError("tangent vector dimension mismatch");
    const double normal = base_.coords().dot(vec_);
    if (std::abs(normal) > 1e-8 * std::max(1.0, vec_.norm()))
      throw DataError("vector is not tangent at its base point");
    vec_ -= normal * base_.coords();
  }

  static TangentVector zero(const SpherePoint& base) {
    return TangentVector(base, Eigen::VectorXd::Zero(base.ambient_dim()));
  }

  const SpherePoint& base() const { return base_; }
  const Eigen::VectorXd& vec() const { return vec_; }
  double norm() const { return vec_.norm(); }

 private:
  SpherePoint base_;
  Eigen::VectorXd vec_;
};

namespace detail {
inline void require_same_dim(const SpherePoint& x, const SpherePoint& y) {
  if (x.ambient_dim() != y.ambient_dim())
    throw DataError("sphere points of different dimension: " + std::to_string(x.dim()) + " vs " +
                    std::to_string(y.dim()));
}
}  // namespace detail

/// Great-circle distance, in [0, pi].
inline double sphere_distance(const SpherePoint& x, const SpherePoint& y) {
  detail::require_same_dim(x, y);
  return std::acos(std::clamp(x.coords().dot(y.coords()), -1.0, 1.0));
}

inline SpherePoint exp_map(const SpherePoint& base, const Eigen::VectorXd& v) {
  const double t = v.norm();
  if (t < 1e-14) return base;
  return SpherePoint(std::cos(t) * base.coords() + (std::sin(t) / t) * v);
}

inline SpherePoint exp_map(const SpherePoint& base, const TangentVector& v) {
  detail::require_same_dim(base, v.base());
  return exp_map(base, v.vec());
}

/// Ambient-coordinate log map.  Throws CutLocusError when q is (numerically)
/// antipodal to base.
inline Eigen::VectorXd log_map_vec(const SpherePoint& base, const SpherePoint& q) {
  detail::require_same_dim(base, q);
  const Eigen::VectorXd& b = base.coords();
  const double c = std::clamp(b.dot(q.coords()), -1.0, 1.0);
  Eigen::VectorXd w = q.coords() - c * b;
  const double s = w.norm();
  // atan2 keeps full precision both near 0 and near pi
  const double theta = std::atan2(s, c);
  if (theta > std::numbers::pi - 1e-9) throw CutLocusError("log map at antipodal point (cut locus)");
  if (s < 1e-300) return Eigen::VectorXd::Zero(b.size());
  return (theta / s) * w;
}

inline TangentVector log_map(const SpherePoint& base, const SpherePoint& q) {
  return TangentVector(base, log_map_vec(base, q));
}

/// Leading principal direction of a cloud of vectors, PCA about the origin.
struct PrincipalAxis {
  Eigen::VectorXd direction;  ///< unit norm
  std::vector<double> scores;  ///< <v_j, direction>
};

/// Uncentered PCA: top eigenvector of (1/B) sum v_j v_j^T.
inline PrincipalAxis first_principal_axis(std::span<const Eigen::VectorXd> vectors) {
  if (vectors.size() < 2) throw DataError("principal axis needs at least 2 vectors");
  const Eigen::Index dim = vectors.front().size();
  Eigen::MatrixXd second_moment = Eigen::MatrixXd::Zero(dim, dim);
  for (const auto& v : vectors) {
    if (v.size() != dim) throw DataError("principal axis: vectors of different dimension");
    second_moment.selfadjointView<Eigen::Lower>().rankUpdate(v);
  }
  second_moment = second_moment.selfadjointView<Eigen::Lower>();
  second_moment /= static_cast<double>(vectors.size());
  if (second_moment.trace() <= 0.0) throw NumericError("degenerate bootstrap cloud");

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(second_moment);
  Eigen::VectorXd dir = eig.eigenvectors().col(dim - 1);
  // fix the sign so results are reproducible: largest |component| positive
  Eigen::Index arg = 0;
  dir.cwiseAbs().maxCoeff(&arg);
  if (dir(arg) < 0.0) dir = -dir;

  PrincipalAxis out{dir, {}};
  out.scores.reserve(vectors.size());
  for (const auto& v : vectors) out.scores.push_back(v.dot(dir));
  return out;
}

struct TangentPca {
  TangentVector direction;
  std::vector<double> scores;
};

/// First principal component of tangent vectors sharing one base point.
inline TangentPca tangent_pca_first(std::span<const TangentVector> vectors) {
  if (vectors.size() < 2) throw DataError("tangent PCA needs at least 2 vectors");
  const SpherePoint& base = vectors.front().base();
  std::vector<Eigen::VectorXd> raw;
  raw.reserve(vectors.size());
  for (const auto& v : vectors) {
    if (v.base().ambient_dim() != base.ambient_dim() ||
        (v.base().coords() - base.coords()).norm() > 1e-12)
      throw DataError("tangent PCA: vectors attached to different base points");
    raw.push_back(v.vec());
  }
  auto axis = first_principal_axis(raw);
  return {TangentVector(base, std::move(axis.direction)), std::move(axis.scores)};
}

}  // namespace uniqtest
