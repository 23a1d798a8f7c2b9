#pragma once

#include <Eigen/Core>
#include <functional>
#include <memory>
#include <vector>

#include "colt/nn.hpp"

namespace colt {

struct TapeTensor {
  int id = -1;
};

struct ParamSlot {
  int id = -1;
};

/// Reverse-mode tape over matrix-valued nodes. Build the graph once, then
/// alternate forward() / backward() as parameters change in place; node
/// buffers are reused across runs. Heavy ops (network application) process
/// row chunks across a fixed worker set so results do not depend on timing.
class GradientTape {
 public:
  GradientTape();
  ~GradientTape();
  GradientTape(const GradientTape&) = delete;
  GradientTape& operator=(const GradientTape&) = delete;

  /// Registers a trainable network; the tape reads its weights on every
  /// forward(), so in-place optimizer updates are picked up.
  ParamSlot track(NetworkParams& net);

  TapeTensor constant(Eigen::MatrixXd value);
  /// Differentiable leaf; its adjoint is available after backward().
  TapeTensor variable(Eigen::MatrixXd value);

  TapeTensor apply_net(ParamSlot slot, TapeTensor input);

  /// Per-row Euclidean distance between two (n x d) tensors -> (n x 1).
  TapeTensor rowwise_distance(TapeTensor a, TapeTensor b);

  /// Distance from row i*group+j of `points` to row i of `centers`
  /// -> (n*group x 1).
  TapeTensor grouped_distance(TapeTensor points, TapeTensor centers, int group);

  /// Elementwise hard indicator 1[a < b] with sigmoid((b-a)/temperature)
  /// surrogate on the backward pass.
  TapeTensor ste_indicator(TapeTensor a, TapeTensor b, double temperature);

  /// Rank statistic per group: mean over j of 1[point_dist[i*group+j] <
  /// anchor_dist[i]], with the STE surrogate carrying gradients -> (n x 1).
  TapeTensor ste_rank(TapeTensor point_dist, TapeTensor anchor_dist, int group,
                      double temperature);

  /// Debiased Sinkhorn divergence between the rank sample and the fixed
  /// midpoint grid -> scalar.
  TapeTensor sinkhorn_uniform(TapeTensor ranks, double epsilon, int iterations);

  /// Mean binary cross-entropy with logits -> scalar.
  TapeTensor logistic_loss(TapeTensor logits, Eigen::VectorXd labels);

  TapeTensor add(TapeTensor a, TapeTensor b);
  TapeTensor sub(TapeTensor a, TapeTensor b);
  TapeTensor mul(TapeTensor a, TapeTensor b);
  TapeTensor scale(TapeTensor a, double factor);
  TapeTensor sum(TapeTensor a);
  TapeTensor sum_squares(TapeTensor a);

  /// Recomputes every non-leaf node in creation order.
  void forward();

  /// Overwrites a leaf's value (shape must match).
  void set_value(TapeTensor leaf, const Eigen::MatrixXd& value);

  const Eigen::MatrixXd& value(TapeTensor t) const;
  double scalar_value(TapeTensor t) const;

  /// Reverse pass from a scalar loss node. Gradients of registered
  /// parameters accumulate into the per-slot vectors; slots the loss does
  /// not depend on end up with exactly zero gradients.
  void backward(TapeTensor loss, double loss_adjoint = 1.0);

  const Eigen::VectorXd& grad(ParamSlot slot) const;
  const Eigen::MatrixXd& grad(TapeTensor leaf) const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace colt
