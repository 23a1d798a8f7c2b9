#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Eigenvalues>
#include <cmath>

#include "colt/benchmarks.hpp"
#include "colt/errors.hpp"
#include "colt/rng.hpp"

using namespace colt;

TEST_CASE("toeplitz correlation for s=2") {
  const BenchmarkTask task = make_gaussian_task(2, 2, 0);
  CHECK(task.sigma(0, 0) == doctest::Approx(1.0));
  CHECK(task.sigma(0, 1) == doctest::Approx(0.9));
  CHECK(task.sigma(1, 0) == doctest::Approx(0.9));
  CHECK(task.sigma(1, 1) == doctest::Approx(1.0));
}

TEST_CASE("gaussian task is frozen by seed") {
  const BenchmarkTask a = make_gaussian_task(4, 3, 11);
  const BenchmarkTask b = make_gaussian_task(4, 3, 11);
  const BenchmarkTask c = make_gaussian_task(4, 3, 12);
  CHECK(a.w1 == b.w1);
  CHECK(a.w2 == b.w2);
  CHECK(a.w1 != c.w1);
}

TEST_CASE("toeplitz matrix stays positive definite up to s=100") {
  for (int s : {3, 10, 100}) {
    const BenchmarkTask task = make_gaussian_task(2, s, 1);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(task.sigma);
    CHECK(eig.eigenvalues().minCoeff() > 0.0);
  }
}

TEST_CASE("task construction rejects bad arguments") {
  CHECK_THROWS_AS(make_gaussian_task(0, 3, 0), ConfigError);
  CHECK_THROWS_AS(make_manifold_task(2, 0, 2, 0), ConfigError);
  CHECK_THROWS_AS(make_tree_task(0.0, 0), ConfigError);
  CHECK_THROWS_AS(make_tree_task(-1.0, 0), ConfigError);
}

TEST_CASE("mean_shift at alpha zero reproduces the base sampler bitwise") {
  const BenchmarkTask task = make_gaussian_task(3, 3, 2);
  PerturbationSpec none;
  PerturbationSpec shift;
  shift.kind = PerturbKind::mean_shift;
  shift.alpha = 0.0;
  const SampleBatch a = sample_batch(task, none, 20, 10, 5);
  const SampleBatch b = sample_batch(task, shift, 20, 10, 5);
  CHECK(a.thetas == b.thetas);
  CHECK(a.synth == b.synth);
}

TEST_CASE("covariance scaling doubles the variance at alpha=1") {
  const BenchmarkTask task = make_gaussian_task(1, 1, 3);
  PerturbationSpec base_spec;
  PerturbationSpec scale;
  scale.kind = PerturbKind::cov_scale;
  scale.alpha = 1.0;
  Eigen::VectorXd x(1);
  x << 1.3;
  const auto q0 = perturbed_sampler(task, base_spec).bind(x);
  const auto q1 = perturbed_sampler(task, scale).bind(x);
  Rng r0(100), r1(100);
  const int reps = 100000;
  double var0 = 0.0, var1 = 0.0, mean0 = 0.0, mean1 = 0.0;
  std::vector<double> d0(reps), d1(reps);
  for (int i = 0; i < reps; ++i) {
    d0[i] = q0(r0)[0];
    d1[i] = q1(r1)[0];
    mean0 += d0[i];
    mean1 += d1[i];
  }
  mean0 /= reps;
  mean1 /= reps;
  for (int i = 0; i < reps; ++i) {
    var0 += (d0[i] - mean0) * (d0[i] - mean0);
    var1 += (d1[i] - mean1) * (d1[i] - mean1);
  }
  var0 /= reps;
  var1 /= reps;
  CHECK(var1 / var0 == doctest::Approx(2.0).epsilon(0.03));
}

TEST_CASE("extra modes shift the mean to (1-2a) mu") {
  const BenchmarkTask task = make_gaussian_task(2, 2, 4);
  PerturbationSpec spec;
  spec.kind = PerturbKind::extra_modes;
  spec.alpha = 0.4;
  Eigen::VectorXd x(2);
  x << 1.0, 0.5;
  const Eigen::VectorXd mu = task.w1 * x;
  auto bound = perturbed_sampler(task, spec).bind(x);
  Rng rng(7);
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(2);
  const int reps = 100000;
  for (int i = 0; i < reps; ++i) mean += bound(rng);
  mean /= reps;
  const Eigen::VectorXd expected = (1.0 - 2.0 * spec.alpha) * mu;
  CHECK((mean - expected).norm() < 0.02 * std::max(1.0, expected.norm()) + 0.02);
}

TEST_CASE("anisotropic perturbation inflates only the least-variance direction") {
  const BenchmarkTask task = make_gaussian_task(2, 2, 5);
  PerturbationSpec spec;
  spec.kind = PerturbKind::anisotropic;
  spec.alpha = 3.0;
  Eigen::VectorXd x(2);
  x << 1.0, 1.0;
  const double scale = std::abs(task.w2.dot(x));
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(scale * task.sigma);
  const Eigen::VectorXd v_min = eig.eigenvectors().col(0);
  const Eigen::VectorXd v_max = eig.eigenvectors().col(1);
  auto bound = perturbed_sampler(task, spec).bind(x);
  Rng rng(8);
  const Eigen::VectorXd mu = task.w1 * x;
  double var_min = 0.0, var_max = 0.0;
  const int reps = 60000;
  for (int i = 0; i < reps; ++i) {
    const Eigen::VectorXd delta = bound(rng) - mu;
    var_min += std::pow(v_min.dot(delta), 2);
    var_max += std::pow(v_max.dot(delta), 2);
  }
  var_min /= reps;
  var_max /= reps;
  CHECK(var_min == doctest::Approx(eig.eigenvalues()[0] + spec.alpha).epsilon(0.05));
  CHECK(var_max == doctest::Approx(eig.eigenvalues()[1]).epsilon(0.05));
}

TEST_CASE("t-tail draws have the right scale and heavier tails") {
  const BenchmarkTask task = make_gaussian_task(1, 1, 6);
  PerturbationSpec spec;
  spec.kind = PerturbKind::t_tail;
  spec.alpha = 0.3;  // dof ~ 3.32
  Eigen::VectorXd x(1);
  x << 2.0;
  auto bound = perturbed_sampler(task, spec).bind(x);
  Rng rng(9);
  const double mu = (task.w1 * x)[0];
  int outliers = 0;
  const int reps = 60000;
  const double sigma = std::sqrt(std::abs(task.w2.dot(x)));
  for (int i = 0; i < reps; ++i) {
    if (std::abs(bound(rng)[0] - mu) > 4.0 * sigma) ++outliers;
  }
  // a 4-sigma event is ~6e-5 for a Gaussian; dof~3.3 gives two orders more
  CHECK(static_cast<double>(outliers) / reps > 0.004);
}

TEST_CASE("blind prior ignores the conditioning input") {
  const BenchmarkTask task = make_gaussian_task(3, 2, 7);
  PerturbationSpec spec;
  spec.kind = PerturbKind::blind_prior;
  spec.alpha = 1.0;
  Eigen::VectorXd xa(3), xb(3);
  xa << 5.0, 5.0, 5.0;
  xb << -5.0, -5.0, -5.0;
  Rng ra(10), rb(10);
  const Eigen::VectorXd da = perturbed_sampler(task, spec).bind(xa)(ra);
  const Eigen::VectorXd db = perturbed_sampler(task, spec).bind(xb)(rb);
  CHECK(da == db);  // same stream, same marginal draw
}

TEST_CASE("mode collapse swaps the mixture onto the anchor side") {
  const BenchmarkTask task = make_gaussian_task(2, 2, 8);
  PerturbationSpec spec;
  spec.kind = PerturbKind::mode_collapse;
  spec.alpha = 0.5;
  Eigen::VectorXd x(2);
  x << 1.0, 1.0;
  const Eigen::VectorXd mu = task.w1 * x;
  Rng rng(11);
  auto anchors = anchor_sampler(task, spec).bind(x);
  int flipped = 0;
  const int reps = 40000;
  for (int i = 0; i < reps; ++i) {
    if (anchors(rng).dot(mu) < 0.0) ++flipped;
  }
  // mirror symmetry puts exactly half the alpha=1/2 mixture mass across
  // the separating hyperplane
  const double anchor_rate = static_cast<double>(flipped) / reps;
  CHECK(anchor_rate == doctest::Approx(0.5).epsilon(0.05));
  // while q keeps the single mode's smaller crossing probability
  auto q = perturbed_sampler(task, spec).bind(x);
  int qflipped = 0;
  for (int i = 0; i < reps; ++i) {
    if (q(rng).dot(mu) < 0.0) ++qflipped;
  }
  const double q_rate = static_cast<double>(qflipped) / reps;
  CHECK(q_rate < 0.45);
  CHECK(anchor_rate > q_rate + 0.05);
}

TEST_CASE("tree component count follows the branching recursion") {
  const BenchmarkTask task = make_tree_task(0.01, 3);
  // 8 components per branch, binary tree of depth 7
  CHECK(task.tree_class_a.component_count() == 8 * (128 - 1));
  CHECK(task.tree_class_b.component_count() == 1016);
  CHECK(task.tree_class_a.weights.sum() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(task.tree_class_b.weights.sum() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("tree sampler at alpha zero matches the anchor law bitwise") {
  const BenchmarkTask task = make_tree_task(0.01, 4);
  PerturbationSpec spec;
  spec.kind = PerturbKind::cov_scale;
  spec.alpha = 0.0;
  Eigen::VectorXd x(1);
  x << 0.7;
  Rng r1(20), r2(20);
  const Eigen::VectorXd a = anchor_sampler(task, spec).bind(x)(r1);
  const Eigen::VectorXd b = perturbed_sampler(task, spec).bind(x)(r2);
  CHECK(a == b);
}

TEST_CASE("tree classes separate by the sign of x") {
  const BenchmarkTask task = make_tree_task(0.01, 5);
  Eigen::VectorXd xpos(1), xneg(1);
  xpos << 0.4;
  xneg << -0.4;
  Rng rng(21);
  auto pa = anchor_sampler(task, PerturbationSpec{}).bind(xpos);
  auto pb = anchor_sampler(task, PerturbationSpec{}).bind(xneg);
  // class A points toward pi/4, class B toward 5 pi/4
  Eigen::Vector2d mean_a = Eigen::Vector2d::Zero(), mean_b = Eigen::Vector2d::Zero();
  for (int i = 0; i < 2000; ++i) {
    mean_a += pa(rng);
    mean_b += pb(rng);
  }
  CHECK(mean_a.sum() > 0.0);
  CHECK(mean_b.sum() < 0.0);
}

TEST_CASE("tree rejects incompatible perturbation kinds") {
  const BenchmarkTask task = make_tree_task(0.01, 6);
  PerturbationSpec spec;
  spec.kind = PerturbKind::mean_shift;
  spec.alpha = 0.5;
  CHECK_THROWS_AS(perturbed_sampler(task, spec), ConfigError);
}

TEST_CASE("manifold perturbation commutes with the transform") {
  const BenchmarkTask manifold = make_manifold_task(2, 2, 3, 9);
  // the latent recipe shares the gaussian task's stream layout, so the
  // same seed yields the same latent draws
  BenchmarkTask latent = make_gaussian_task(2, 2, 9);
  PerturbationSpec spec;
  spec.kind = PerturbKind::cov_scale;
  spec.alpha = 0.8;
  Eigen::VectorXd x(2);
  x << 1.2, 0.3;
  Rng r1(30), r2(30);
  const Eigen::VectorXd direct = perturbed_sampler(manifold, spec).bind(x)(r1);
  const Eigen::VectorXd via_latent = perturbed_sampler(latent, spec).bind(x)(r2);
  const Eigen::VectorXd transformed =
      manifold.a_mat * (manifold.b_mat * via_latent).array().sin().matrix();
  CHECK((direct - transformed).norm() == doctest::Approx(0.0).epsilon(1e-14));
}

TEST_CASE("manifold transform is frozen across calls") {
  const BenchmarkTask task = make_manifold_task(2, 2, 4, 10);
  Eigen::VectorXd x(2);
  x << 1.0, -0.5;
  Rng r1(31), r2(31);
  const Eigen::VectorXd a = perturbed_sampler(task, PerturbationSpec{}).bind(x)(r1);
  const Eigen::VectorXd b = perturbed_sampler(task, PerturbationSpec{}).bind(x)(r2);
  CHECK(a == b);
}

TEST_CASE("sample_joint produces the documented shapes deterministically") {
  const BenchmarkTask task = make_gaussian_task(3, 3, 12);
  const ConditionalSampler q = perturbed_sampler(task, PerturbationSpec{});
  const SampleBatch batch = sample_joint(task, q, 100, 500, 77);
  CHECK(batch.n() == 100);
  CHECK(batch.k() == 500);
  CHECK(batch.xs.rows() == 100);
  CHECK(batch.synth.rows() == 100 * 500);
  const SampleBatch again = sample_joint(task, q, 100, 500, 77);
  CHECK(batch.xs == again.xs);
  CHECK(batch.thetas == again.thetas);
  CHECK(batch.synth == again.synth);
  const SampleBatch other = sample_joint(task, q, 100, 500, 78);
  CHECK(batch.xs != other.xs);
}

TEST_CASE("anchor conditional mean matches w1 x") {
  const BenchmarkTask task = make_gaussian_task(2, 3, 13);
  Eigen::VectorXd x(2);
  x << 0.7, 1.4;
  const Eigen::VectorXd expected = task.w1 * x;
  auto bound = anchor_sampler(task, PerturbationSpec{}).bind(x);
  Rng rng(40);
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(3);
  const int reps = 100000;
  for (int i = 0; i < reps; ++i) mean += bound(rng);
  mean /= reps;
  CHECK((mean - expected).norm() < 0.02 * expected.norm() + 0.02);
}

TEST_CASE("scale guard keeps the conditional covariance positive") {
  const BenchmarkTask task = make_gaussian_task(2, 2, 14);
  // x orthogonal to w2 collapses |w2' x| to zero; the guard floors it
  Eigen::VectorXd x(2);
  x << task.w2[1], -task.w2[0];
  auto bound = anchor_sampler(task, PerturbationSpec{}).bind(x);
  Rng rng(41);
  const Eigen::VectorXd draw = bound(rng);
  CHECK(draw.allFinite());
}

TEST_CASE("task json round-trip reproduces samples exactly") {
  for (const BenchmarkTask& task :
       {make_gaussian_task(3, 2, 15), make_manifold_task(2, 2, 3, 16),
        make_tree_task(0.01, 17)}) {
    const BenchmarkTask back = task_from_json(task_to_json(task));
    const SampleBatch a = sample_batch(task, PerturbationSpec{}, 8, 4, 3);
    const SampleBatch b = sample_batch(back, PerturbationSpec{}, 8, 4, 3);
    CHECK(a.xs == b.xs);
    CHECK(a.thetas == b.thetas);
    CHECK(a.synth == b.synth);
  }
}
