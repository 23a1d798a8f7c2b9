#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "colt/colt.hpp"
#include "colt/rng.hpp"

namespace colt {

enum class TaskFamily { gaussian, manifold, tree };

enum class PerturbKind {
  none,
  mean_shift,
  cov_scale,
  anisotropic,
  t_tail,
  extra_modes,
  mode_collapse,
  blind_prior
};

std::string family_name(TaskFamily f);
TaskFamily family_from_name(const std::string& name);
std::string perturb_name(PerturbKind k);
PerturbKind perturb_from_name(const std::string& name);

struct PerturbationSpec {
  PerturbKind kind = PerturbKind::none;
  double alpha = 0.0;
  double epsilon_t = 1e-3;  // t-tail guard: dof = 1/(alpha + epsilon_t)

  void validate() const;
};

/// Two-class Gaussian-mixture tree in the plane.
struct TreeGmm {
  Eigen::MatrixXd means;                      // components x 2
  std::vector<Eigen::Matrix2d> covariances;   // without the sigma^2 I noise term
  Eigen::VectorXd weights;                    // sums to 1

  int component_count() const { return static_cast<int>(weights.size()); }
};

/// Geometry of the recursive branching process. The branch constants are
/// reproduction parameters, not pinned values.
struct TreeGeometry {
  int depth = 7;
  int components_per_branch = 8;
  double root_length = 1.0;
  double length_decay = 0.8;
  double thickness = 0.3;
  double angle_base = 0.62831853071795864769;   // pi/5
  double angle_jitter = 0.15707963267948966192; // pi/20
};

/// Frozen generator state for one benchmark problem. The same state serves
/// every perturbation level; alpha never changes the truth.
struct BenchmarkTask {
  TaskFamily family = TaskFamily::gaussian;
  int m = 0;  // x dim
  int s = 0;  // latent dim
  int d = 0;  // ambient theta dim
  std::uint64_t seed = 0;
  double rho = 0.9;

  Eigen::MatrixXd w1;          // s x m
  Eigen::VectorXd w2;          // s
  Eigen::MatrixXd sigma;       // s x s Toeplitz correlation
  Eigen::MatrixXd sigma_chol;  // lower Cholesky factor of sigma

  // manifold transform theta = a_mat * sin(b_mat * latent)
  Eigen::MatrixXd b_mat;  // hidden x s
  Eigen::MatrixXd a_mat;  // d x hidden

  // tree task
  double tree_sigma = 0.0;
  TreeGeometry tree_geometry;
  TreeGmm tree_class_a;  // selected when x >= 0
  TreeGmm tree_class_b;
};

BenchmarkTask make_gaussian_task(int m, int s, std::uint64_t seed);
BenchmarkTask make_manifold_task(int m, int s, int d, std::uint64_t seed,
                                 int hidden = 128);
BenchmarkTask make_tree_task(double sigma, std::uint64_t seed,
                             const TreeGeometry& geometry = {});

/// Conditional sampler; bind() fixes the conditioning input and returns a
/// cheap per-draw closure (mean and factorizations are computed once).
class ConditionalSampler {
 public:
  using Bound = std::function<Eigen::VectorXd(Rng&)>;
  using Binder = std::function<Bound(const Eigen::VectorXd&)>;

  ConditionalSampler() = default;
  explicit ConditionalSampler(Binder binder) : binder_(std::move(binder)) {}

  Bound bind(const Eigen::VectorXd& x) const { return binder_(x); }
  Eigen::VectorXd draw(const Eigen::VectorXd& x, Rng& rng) const { return binder_(x)(rng); }

 private:
  Binder binder_;
};

/// q(theta | x; alpha) implementing the perturbation table row.
ConditionalSampler perturbed_sampler(const BenchmarkTask& task,
                                     const PerturbationSpec& spec);

/// The true conditional for anchors. For mode_collapse the truth is the
/// alpha-mixture and q the single Gaussian, so p depends on the spec there.
ConditionalSampler anchor_sampler(const BenchmarkTask& task,
                                  const PerturbationSpec& spec);

Eigen::VectorXd sample_x(const BenchmarkTask& task, Rng& rng);

/// Anchors from the task's true joint, synthetic draws from q.
SampleBatch sample_joint(const BenchmarkTask& task, const ConditionalSampler& q, int n,
                         int k, std::uint64_t seed);

/// Full batch for one perturbation level; handles the mode_collapse anchor
/// swap.
SampleBatch sample_batch(const BenchmarkTask& task, const PerturbationSpec& spec, int n,
                         int k, std::uint64_t seed);

std::string task_to_json(const BenchmarkTask& task);
BenchmarkTask task_from_json(const std::string& text);

}  // namespace colt
