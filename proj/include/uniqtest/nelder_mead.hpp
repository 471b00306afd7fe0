#pragma once

// Derivative-free simplex minimization (Nelder-Mead with the standard
// coefficients 1, 2, 1/2, 1/2).  Non-finite objective values act as walls.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <vector>

namespace uniqtest {

struct NelderMeadOptions {
  int max_evals = 4000;
  double ftol_rel = 1e-13;
  double ftol_abs = 1e-22;
  double xtol_rel = 1e-11;       ///< stop when the simplex is this small (relative)
  double xtol_flat_rel = 1e-6;   ///< ... or this small while values agree to ftol
};

struct NelderMeadResult {
  Eigen::VectorXd x;
  double value = std::numeric_limits<double>::infinity();
  int evals = 0;
  bool converged = false;
};

template <class Objective>
NelderMeadResult nelder_mead(Objective&& f, const Eigen::VectorXd& x0, const Eigen::VectorXd& step,
                             const NelderMeadOptions& opt = {}) {
  const Eigen::Index dim = x0.size();
  std::vector<Eigen::VectorXd> simplex(dim + 1, x0);
  std::vector<double> value(dim + 1);
  NelderMeadResult res;
  auto eval = [&](const Eigen::VectorXd& x) {
    ++res.evals;
    const double v = f(x);
    return std::isfinite(v) ? v : std::numeric_limits<double>::infinity();
  };
  for (Eigen::Index i = 0; i < dim; ++i) simplex[i + 1](i) += step(i);
  for (Eigen::Index i = 0; i <= dim; ++i) value[i] = eval(simplex[i]);

  std::vector<Eigen::Index> order(dim + 1);
  while (true) {
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return value[a] < value[b]; });
    const auto best = order.front();
    const auto worst = order.back();
    const auto second_worst = order[dim - 1];

    double spread = 0.0;
    for (Eigen::Index i = 0; i <= dim; ++i)
      spread = std::max(spread, (simplex[i] - simplex[best]).cwiseAbs().maxCoeff());
    const double scale = std::max(1.0, simplex[best].cwiseAbs().maxCoeff());
    const bool flat = std::isfinite(value[worst]) &&
                      value[worst] - value[best] <= opt.ftol_abs + opt.ftol_rel * std::abs(value[best]);
    if ((flat && spread <= opt.xtol_flat_rel * scale) || spread <= opt.xtol_rel * scale) {
      res.converged = true;
      break;
    }
    if (res.evals >= opt.max_evals) break;

    Eigen::VectorXd centroid = Eigen::VectorXd::Zero(dim);
    for (Eigen::Index i = 0; i <= dim; ++i)
      if (i != worst) centroid += simplex[i];
    centroid /= static_cast<double>(dim);

    const Eigen::VectorXd reflected = centroid + (centroid - simplex[worst]);
    const double fr = eval(reflected);
    if (fr < value[best]) {
      const Eigen::VectorXd expanded = centroid + 2.0 * (centroid - simplex[worst]);
      const double fe = eval(expanded);
      if (fe < fr) {
        simplex[worst] = expanded;
        value[worst] = fe;
      } else {
        simplex[worst] = reflected;
        value[worst] = fr;
      }
      continue;
    }
    if (fr < value[second_worst]) {
      simplex[worst] = reflected;
      value[worst] = fr;
      continue;
    }
    const bool outside = fr < value[worst];
    const Eigen::VectorXd contracted =
        outside ? Eigen::VectorXd(centroid + 0.5 * (reflected - centroid))
                : Eigen::VectorXd(centroid + 0.5 * (simplex[worst] - centroid));
    const double fc = eval(contracted);
    if (fc < (outside ? fr : value[worst])) {
      simplex[worst] = contracted;
      value[worst] = fc;
      continue;
    }
    for (Eigen::Index i = 0; i <= dim; ++i) {
      if (i == best) continue;
      simplex[i] = simplex[best] + 0.5 * (simplex[i] - simplex[best]);
      value[i] = eval(simplex[i]);
    }
  }
  const auto best = static_cast<std::size_t>(std::min_element(value.begin(), value.end()) - value.begin());
  res.x = simplex[best];
  res.value = value[best];
  return res;
}

}  // namespace uniqtest
