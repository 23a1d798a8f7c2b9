#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <vector>

#include "colt/colt.hpp"
#include "colt/nn.hpp"
#include "colt/stats.hpp"

namespace colt {

struct C2stConfig {
  int epochs = 1000;
  double learning_rate = 1e-5;
  double train_fraction = 0.5;
  std::uint64_t seed = 0;
  std::vector<int> hidden_dims = {256, 256, 256};

  void validate() const;
};

/// Per-dimension rank uniformity with Bonferroni correction across
/// dimensions. Necessary but not sufficient; blind to x-dependence.
TestReport sbc_test(const SampleBatch& batch);

/// Rank test against random reference points built by independently
/// permuting each coordinate of the anchor thetas.
TestReport tarp_test(const SampleBatch& batch, std::uint64_t seed);

/// Classifier two-sample test, self-contained: splits the batch by anchor,
/// trains a real-vs-synthetic classifier on one half and converts held-out
/// accuracy on the other half to a one-sided normal p-value.
TestReport c2st_test(const SampleBatch& batch, const C2stConfig& config);

/// Train-once form used by the sweep harness: fit the classifier on a full
/// training batch, then score accuracy on fresh evaluation batches.
struct C2stModel {
  NetworkParams classifier;
  Eigen::VectorXd feature_mean;
  Eigen::VectorXd feature_scale;
  C2stConfig config;
};

C2stModel c2st_train(const SampleBatch& batch, const C2stConfig& config);
TestReport c2st_evaluate(const C2stModel& model, const SampleBatch& batch);

}  // namespace colt
