#pragma once

#include <Eigen/Core>
#include <cmath>
#include <functional>

#include "colt/nn.hpp"
#include "colt/rng.hpp"

namespace colt::testing {

inline Eigen::MatrixXd random_matrix(int rows, int cols, Rng& rng, double scale = 1.0) {
  Eigen::MatrixXd m(rows, cols);
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) m(i, j) = scale * rng.normal();
  }
  return m;
}

struct GradCheckResult {
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  int checked = 0;
};

/// Central finite differences against an analytic gradient. `loss` must
/// re-evaluate the scalar from scratch at the supplied parameter vector.
inline GradCheckResult finite_difference_check(
    const std::function<double(const Eigen::VectorXd&)>& loss, Eigen::VectorXd params,
    const Eigen::VectorXd& analytic_grad, double h = 1e-5) {
  GradCheckResult res;
  for (Eigen::Index i = 0; i < params.size(); ++i) {
    const double saved = params[i];
    params[i] = saved + h;
    const double up = loss(params);
    params[i] = saved - h;
    const double down = loss(params);
    params[i] = saved;
    const double fd = (up - down) / (2.0 * h);
    const double g = analytic_grad[i];
    const double abs_err = std::abs(fd - g);
    res.max_abs_error = std::max(res.max_abs_error, abs_err);
    const double denom = std::max(std::abs(fd), std::abs(g));
    if (denom > 1e-5) {
      res.max_rel_error = std::max(res.max_rel_error, abs_err / denom);
    } else {
      // both effectively zero: require agreement in absolute terms
      res.max_rel_error = std::max(res.max_rel_error, abs_err > 1e-7 ? 1.0 : 0.0);
    }
    ++res.checked;
  }
  return res;
}

}  // namespace colt::testing
