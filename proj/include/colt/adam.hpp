#pragma once

#include <Eigen/Core>
#include <cmath>
#include <string>

#include "colt/errors.hpp"
#include "colt/nn.hpp"

namespace colt {

struct AdamState {
  Eigen::VectorXd first_moment;
  Eigen::VectorXd second_moment;
  long step = 0;
  double learning_rate;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  AdamState(Eigen::Index n, double lr)
      : first_moment(Eigen::VectorXd::Zero(n)),
        second_moment(Eigen::VectorXd::Zero(n)),
        learning_rate(lr) {}
};

/// Bias-corrected Adam update, in place.
inline void adam_step(AdamState& state, NetworkParams& params, const Eigen::VectorXd& grad) {
  if (grad.size() != params.weights.size() || grad.size() != state.first_moment.size()) {
    throw ShapeError("adam_step: gradient length mismatch");
  }
  if (!grad.allFinite()) {
    Eigen::Index bad = 0;
    for (; bad < grad.size(); ++bad) {
      if (!std::isfinite(grad[bad])) break;
    }
    throw TrainingDivergedError("adam_step: non-finite gradient at index " +
                                std::to_string(bad) + " (step " +
                                std::to_string(state.step + 1) + ")");
  }
  state.step += 1;
  state.first_moment = state.beta1 * state.first_moment + (1.0 - state.beta1) * grad;
  state.second_moment = state.beta2 * state.second_moment.array().matrix() +
                        (1.0 - state.beta2) * grad.cwiseProduct(grad);
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  params.weights.array() -=
      state.learning_rate * (state.first_moment.array() / c1) /
      ((state.second_moment.array() / c2).sqrt() + state.epsilon);
}

}  // namespace colt
