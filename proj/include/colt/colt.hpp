#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "colt/nn.hpp"
#include "colt/stats.hpp"

namespace colt {

/// N anchor pairs from the true joint plus N*K synthetic draws from the
/// candidate posterior. Synthetic row i*k + j is draw j for anchor i.
struct SampleBatch {
  Eigen::MatrixXd xs;      // n x m
  Eigen::MatrixXd thetas;  // n x d
  Eigen::MatrixXd synth;   // (n*k) x d

  int n() const { return static_cast<int>(xs.rows()); }
  int k() const { return n() == 0 ? 0 : static_cast<int>(synth.rows()) / n(); }
  int x_dim() const { return static_cast<int>(xs.cols()); }
  int theta_dim() const { return static_cast<int>(thetas.cols()); }

  void validate() const;
};

enum class ColtVariant { full, id };

std::string variant_name(ColtVariant v);
ColtVariant variant_from_name(const std::string& name);

struct TrainConfig {
  int epochs = 1000;
  double learning_rate = 1e-5;
  double ste_temperature = 0.1;
  double sinkhorn_epsilon = 0.01;
  int sinkhorn_iterations = 100;
  std::uint64_t seed = 0;
  std::vector<int> hidden_dims = {256, 256, 256};
  int embed_dim = 0;  // 0 -> same as theta dim

  void validate() const;
};

/// Trained localization network plus (for the full variant) the metric
/// embedding network.
struct ColtModel {
  ColtVariant variant = ColtVariant::id;
  NetworkParams localization;            // x dim -> theta dim
  std::optional<NetworkParams> embedding;  // theta dim -> embed dim
  TrainConfig config;

  void validate() const;
};

/// Fraction of draws strictly closer to the localization point than the
/// anchor is, distances taken after the optional embedding. `hard` selects
/// the plain indicator; the soft flag only matters when the call is being
/// differentiated, which the training loop does internally.
double ball_rank(const Eigen::VectorXd& theta_star, const Eigen::MatrixXd& q_draws,
                 const Eigen::VectorXd& theta_l, const NetworkParams* embedding,
                 bool hard = true, double temperature = 0.1);

/// Adversarial training of the localization / embedding networks against
/// the rank-uniformity null, by ascent on the Sinkhorn divergence.
ColtModel colt_train(const SampleBatch& batch, const TrainConfig& config,
                     ColtVariant variant);

/// Hard-indicator ranks with the trained networks, then a one-sample KS
/// test against Uniform[0,1].
TestReport colt_test(const SampleBatch& batch, const ColtModel& model);

/// The KS statistic doubles as the plug-in estimate of the averaged
/// conditionally localized distance.
double acld_distance(const TestReport& report);

/// Untrained model with a freshly initialized localization net and identity
/// embedding; useful as a fixed-localization reference test.
ColtModel colt_untrained(int x_dim, int theta_dim, const TrainConfig& config);

std::string colt_model_to_json(const ColtModel& model);
ColtModel colt_model_from_json(const std::string& text);

}  // namespace colt
