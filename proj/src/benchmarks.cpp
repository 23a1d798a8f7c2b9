#include "colt/benchmarks.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <cmath>
#include <memory>
#include <nlohmann/json.hpp>

#include "colt/errors.hpp"

namespace colt {

using json = nlohmann::json;

std::string family_name(TaskFamily f) {
  switch (f) {
    case TaskFamily::gaussian: return "gaussian";
    case TaskFamily::manifold: return "manifold";
    case TaskFamily::tree: return "tree";
  }
  return "gaussian";
}

TaskFamily family_from_name(const std::string& name) {
  if (name == "gaussian") return TaskFamily::gaussian;
  if (name == "manifold") return TaskFamily::manifold;
  if (name == "tree") return TaskFamily::tree;
  throw ConfigError("unknown task family: " + name);
}

std::string perturb_name(PerturbKind k) {
  switch (k) {
    case PerturbKind::none: return "none";
    case PerturbKind::mean_shift: return "mean_shift";
    case PerturbKind::cov_scale: return "cov_scale";
    case PerturbKind::anisotropic: return "anisotropic";
    case PerturbKind::t_tail: return "t_tail";
    case PerturbKind::extra_modes: return "extra_modes";
    case PerturbKind::mode_collapse: return "mode_collapse";
    case PerturbKind::blind_prior: return "blind_prior";
  }
  return "none";
}

PerturbKind perturb_from_name(const std::string& name) {
  if (name == "none") return PerturbKind::none;
  if (name == "mean_shift") return PerturbKind::mean_shift;
  if (name == "cov_scale") return PerturbKind::cov_scale;
  if (name == "anisotropic") return PerturbKind::anisotropic;
  if (name == "t_tail") return PerturbKind::t_tail;
  if (name == "extra_modes") return PerturbKind::extra_modes;
  if (name == "mode_collapse") return PerturbKind::mode_collapse;
  if (name == "blind_prior") return PerturbKind::blind_prior;
  throw ConfigError("unknown perturbation kind: " + name);
}

void PerturbationSpec::validate() const {
  if (alpha < 0.0) throw ConfigError("perturbation alpha must be nonnegative");
  if (epsilon_t <= 0.0) throw ConfigError("t-tail epsilon must be positive");
}

namespace {

constexpr double kScaleFloor = 1e-8;

Eigen::MatrixXd toeplitz_correlation(int s, double rho) {
  Eigen::MatrixXd sigma(s, s);
  for (int i = 0; i < s; ++i) {
    for (int j = 0; j < s; ++j) sigma(i, j) = std::pow(rho, std::abs(i - j));
  }
  return sigma;
}

Eigen::MatrixXd lower_cholesky(const Eigen::MatrixXd& a) {
  Eigen::LLT<Eigen::MatrixXd> llt(a);
  if (llt.info() != Eigen::Success) {
    throw ContractError("covariance is not positive definite");
  }
  return llt.matrixL();
}

Eigen::VectorXd standard_normal_vector(int n, Rng& rng) {
  Eigen::VectorXd z(n);
  for (int i = 0; i < n; ++i) z[i] = rng.normal();
  return z;
}

void fill_standard_normal(Eigen::MatrixXd& m, Rng& rng) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = rng.normal();
  }
}

void fill_he_uniform(Eigen::MatrixXd& m, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(m.cols()));
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = rng.uniform(-bound, bound);
  }
}

}  // namespace

BenchmarkTask make_gaussian_task(int m, int s, std::uint64_t seed) {
  if (m < 1 || s < 1) throw ConfigError("gaussian task needs m, s >= 1");
  BenchmarkTask task;
  task.family = TaskFamily::gaussian;
  task.m = m;
  task.s = s;
  task.d = s;
  task.seed = seed;
  Rng rng(mix_seed(seed, 0x6a55u));
  task.w1.resize(s, m);
  fill_standard_normal(task.w1, rng);
  task.w2 = standard_normal_vector(s, rng);
  task.sigma = toeplitz_correlation(s, task.rho);
  task.sigma_chol = lower_cholesky(task.sigma);
  return task;
}

BenchmarkTask make_manifold_task(int m, int s, int d, std::uint64_t seed, int hidden) {
  if (m < 1 || s < 1 || d < 1 || hidden < 1) {
    throw ConfigError("manifold task needs positive dims");
  }
  BenchmarkTask task = make_gaussian_task(m, s, seed);
  task.family = TaskFamily::manifold;
  task.d = d;
  Rng rng(mix_seed(seed, 0x3fa7u));
  task.b_mat.resize(hidden, s);
  fill_he_uniform(task.b_mat, rng);
  task.a_mat.resize(d, hidden);
  fill_he_uniform(task.a_mat, rng);
  return task;
}

namespace {

struct TreeBuilder {
  const TreeGeometry& geo;
  Rng& rng;
  std::vector<Eigen::Vector2d> means;
  std::vector<Eigen::Matrix2d> covs;
  std::vector<double> weights;

  void branch(Eigen::Vector2d pos, double angle, int depth) {
    if (depth >= geo.depth) return;
    const double length = geo.root_length * std::pow(geo.length_decay, depth);
    const Eigen::Vector2d dir(std::cos(angle), std::sin(angle));
    const double size = length / geo.components_per_branch;
    const Eigen::Matrix2d outer = dir * dir.transpose();
    const Eigen::Matrix2d cov =
        (outer + (Eigen::Matrix2d::Identity() - outer) * geo.thickness * geo.thickness) *
        size * size;
    for (int c = 1; c <= geo.components_per_branch; ++c) {
      means.push_back(pos + dir * (length * c / geo.components_per_branch));
      covs.push_back(cov);
      weights.push_back(length);
    }
    const Eigen::Vector2d tip = pos + dir * length;
    const double left = geo.angle_base + rng.uniform(-geo.angle_jitter, geo.angle_jitter);
    const double right = geo.angle_base + rng.uniform(-geo.angle_jitter, geo.angle_jitter);
    branch(tip, angle + left, depth + 1);
    branch(tip, angle - right, depth + 1);
  }

  TreeGmm finish() {
    TreeGmm gmm;
    const int c = static_cast<int>(means.size());
    gmm.means.resize(c, 2);
    gmm.covariances.resize(c);
    gmm.weights.resize(c);
    double total = 0.0;
    for (double w : weights) total += w;
    for (int i = 0; i < c; ++i) {
      gmm.means.row(i) = means[i].transpose();
      gmm.covariances[i] = covs[i];
      gmm.weights[i] = weights[i] / total;
    }
    return gmm;
  }
};

TreeGmm build_tree_class(double initial_angle, const TreeGeometry& geo, Rng& rng) {
  TreeBuilder b{geo, rng, {}, {}, {}};
  b.branch(Eigen::Vector2d::Zero(), initial_angle, 0);
  return b.finish();
}

}  // namespace

BenchmarkTask make_tree_task(double sigma, std::uint64_t seed, const TreeGeometry& geometry) {
  if (sigma <= 0.0) throw ConfigError("tree task needs sigma > 0");
  BenchmarkTask task;
  task.family = TaskFamily::tree;
  task.m = 1;
  task.s = 2;
  task.d = 2;
  task.seed = seed;
  task.tree_sigma = sigma;
  task.tree_geometry = geometry;
  Rng rng(mix_seed(seed, 0x7ee1u));
  const double pi = 3.14159265358979323846;
  task.tree_class_a = build_tree_class(pi / 4.0, geometry, rng);
  task.tree_class_b = build_tree_class(5.0 * pi / 4.0, geometry, rng);
  return task;
}

Eigen::VectorXd sample_x(const BenchmarkTask& task, Rng& rng) {
  Eigen::VectorXd x = standard_normal_vector(task.m, rng);
  if (task.family != TaskFamily::tree) {
    x.array() += 1.0;  // x ~ N(1, I)
  }
  return x;
}

namespace {

struct GaussianCondition {
  Eigen::VectorXd mu;
  double scale = 1.0;  // Sigma_x = scale * Sigma
};

GaussianCondition condition_on(const BenchmarkTask& task, const Eigen::VectorXd& x) {
  if (x.size() != task.m) throw ShapeError("conditioning input has wrong dimension");
  GaussianCondition c;
  c.mu = task.w1 * x;
  c.scale = std::max(std::abs(task.w2.dot(x)), kScaleFloor);
  return c;
}

Eigen::VectorXd manifold_transform(const BenchmarkTask& task, const Eigen::VectorXd& latent) {
  return task.a_mat * (task.b_mat * latent).array().sin().matrix();
}

using TaskPtr = std::shared_ptr<const BenchmarkTask>;

/// Latent-space draw for one Table row; the closures share ownership of the
/// frozen task state.
ConditionalSampler::Bound bind_latent(const TaskPtr& task, const PerturbationSpec& spec,
                                      const Eigen::VectorXd& x) {
  const GaussianCondition c = condition_on(*task, x);
  const double sq = std::sqrt(c.scale);
  switch (spec.kind) {
    case PerturbKind::none:
    case PerturbKind::mode_collapse: {  // q side of the reversal: plain Gaussian
      return [task, c, sq](Rng& rng) -> Eigen::VectorXd {
        return c.mu + sq * (task->sigma_chol * standard_normal_vector(task->s, rng));
      };
    }
    case PerturbKind::mean_shift: {
      const Eigen::VectorXd mu = (1.0 + spec.alpha) * c.mu;
      return [task, mu, sq](Rng& rng) -> Eigen::VectorXd {
        return mu + sq * (task->sigma_chol * standard_normal_vector(task->s, rng));
      };
    }
    case PerturbKind::cov_scale: {
      const double sq_scaled = std::sqrt((1.0 + spec.alpha) * c.scale);
      return [task, c, sq_scaled](Rng& rng) -> Eigen::VectorXd {
        return c.mu + sq_scaled * (task->sigma_chol * standard_normal_vector(task->s, rng));
      };
    }
    case PerturbKind::anisotropic: {
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(c.scale * task->sigma);
      const Eigen::VectorXd v = eig.eigenvectors().col(0);  // least-variance direction
      const Eigen::MatrixXd cov =
          c.scale * task->sigma + spec.alpha * (v * v.transpose());
      const Eigen::MatrixXd chol = lower_cholesky(cov);
      return [task, c, chol](Rng& rng) -> Eigen::VectorXd {
        return c.mu + chol * standard_normal_vector(task->s, rng);
      };
    }
    case PerturbKind::t_tail: {
      const double dof = 1.0 / (spec.alpha + spec.epsilon_t);
      return [task, c, sq, dof](Rng& rng) -> Eigen::VectorXd {
        const Eigen::VectorXd z = standard_normal_vector(task->s, rng);
        const double g = rng.chi_squared(dof);
        return c.mu + sq * std::sqrt(dof / g) * (task->sigma_chol * z);
      };
    }
    case PerturbKind::extra_modes: {
      const double alpha = spec.alpha;
      return [task, c, sq, alpha](Rng& rng) -> Eigen::VectorXd {
        const double flip = rng.uniform() < alpha ? -1.0 : 1.0;
        return flip * c.mu + sq * (task->sigma_chol * standard_normal_vector(task->s, rng));
      };
    }
    case PerturbKind::blind_prior: {
      // q(theta|x) = p(theta): resample the conditioning input
      return [task](Rng& rng) -> Eigen::VectorXd {
        const Eigen::VectorXd xp = sample_x(*task, rng);
        const GaussianCondition cp = condition_on(*task, xp);
        return cp.mu + std::sqrt(cp.scale) *
                           (task->sigma_chol * standard_normal_vector(task->s, rng));
      };
    }
  }
  throw ConfigError("unhandled perturbation kind");
}

/// Mixture (1-alpha) N(mu, S) + alpha N(-mu, S); the anchor law under
/// mode_collapse.
ConditionalSampler::Bound bind_latent_mixture(const TaskPtr& task, double alpha,
                                              const Eigen::VectorXd& x) {
  const GaussianCondition c = condition_on(*task, x);
  const double sq = std::sqrt(c.scale);
  return [task, c, sq, alpha](Rng& rng) -> Eigen::VectorXd {
    const double flip = rng.uniform() < alpha ? -1.0 : 1.0;
    return flip * c.mu + sq * (task->sigma_chol * standard_normal_vector(task->s, rng));
  };
}

ConditionalSampler::Bound bind_tree(const TaskPtr& task, double noise_sigma,
                                    const Eigen::VectorXd& x) {
  if (x.size() != 1) throw ShapeError("tree task conditions on a scalar");
  const TreeGmm& gmm = x[0] >= 0.0 ? task->tree_class_a : task->tree_class_b;
  const double var = noise_sigma * noise_sigma;
  return [task, &gmm, var](Rng& rng) -> Eigen::VectorXd {
    double u = rng.uniform();
    int comp = 0;
    const int count = gmm.component_count();
    for (; comp + 1 < count; ++comp) {
      u -= gmm.weights[comp];
      if (u < 0.0) break;
    }
    Eigen::Matrix2d cov = gmm.covariances[comp];
    cov(0, 0) += var;
    cov(1, 1) += var;
    // closed-form 2x2 lower Cholesky
    const double l00 = std::sqrt(cov(0, 0));
    const double l10 = cov(1, 0) / l00;
    const double l11 = std::sqrt(cov(1, 1) - l10 * l10);
    const double z0 = rng.normal();
    const double z1 = rng.normal();
    Eigen::Vector2d theta = gmm.means.row(comp).transpose();
    theta[0] += l00 * z0;
    theta[1] += l10 * z0 + l11 * z1;
    return theta;
  };
}

void check_compatible(const BenchmarkTask& task, const PerturbationSpec& spec) {
  spec.validate();
  if (task.family == TaskFamily::tree && spec.kind != PerturbKind::none &&
      spec.kind != PerturbKind::cov_scale) {
    throw ConfigError("tree task only supports its noise inflation (cov_scale)");
  }
}

}  // namespace

ConditionalSampler perturbed_sampler(const BenchmarkTask& task, const PerturbationSpec& spec) {
  check_compatible(task, spec);
  auto tp = std::make_shared<const BenchmarkTask>(task);
  if (tp->family == TaskFamily::tree) {
    const double sigma_q = (1.0 + spec.alpha) * tp->tree_sigma;
    return ConditionalSampler([tp, sigma_q](const Eigen::VectorXd& x) {
      return bind_tree(tp, sigma_q, x);
    });
  }
  if (tp->family == TaskFamily::manifold) {
    return ConditionalSampler([tp, spec](const Eigen::VectorXd& x) {
      auto latent = bind_latent(tp, spec, x);
      return [tp, latent](Rng& rng) { return manifold_transform(*tp, latent(rng)); };
    });
  }
  return ConditionalSampler(
      [tp, spec](const Eigen::VectorXd& x) { return bind_latent(tp, spec, x); });
}

ConditionalSampler anchor_sampler(const BenchmarkTask& task, const PerturbationSpec& spec) {
  check_compatible(task, spec);
  auto tp = std::make_shared<const BenchmarkTask>(task);
  if (tp->family == TaskFamily::tree) {
    return ConditionalSampler([tp](const Eigen::VectorXd& x) {
      return bind_tree(tp, tp->tree_sigma, x);
    });
  }
  const bool mixture = spec.kind == PerturbKind::mode_collapse;
  const double alpha = spec.alpha;
  if (tp->family == TaskFamily::manifold) {
    return ConditionalSampler([tp, mixture, alpha](const Eigen::VectorXd& x) {
      auto latent = mixture ? bind_latent_mixture(tp, alpha, x)
                            : bind_latent(tp, PerturbationSpec{}, x);
      return [tp, latent](Rng& rng) { return manifold_transform(*tp, latent(rng)); };
    });
  }
  return ConditionalSampler([tp, mixture, alpha](const Eigen::VectorXd& x) {
    return mixture ? bind_latent_mixture(tp, alpha, x)
                   : bind_latent(tp, PerturbationSpec{}, x);
  });
}

namespace {

SampleBatch sample_core(const BenchmarkTask& task, const ConditionalSampler& p,
                        const ConditionalSampler& q, int n, int k, std::uint64_t seed) {
  if (n < 1 || k < 1) throw ConfigError("sample batch needs n, k >= 1");
  SampleBatch batch;
  batch.xs.resize(n, task.m);
  batch.thetas.resize(n, task.d);
  batch.synth.resize(static_cast<Eigen::Index>(n) * k, task.d);
  Rng anchor_rng(mix_seed(seed, 0xa17cu));
  for (int i = 0; i < n; ++i) {
    const Eigen::VectorXd x = sample_x(task, anchor_rng);
    batch.xs.row(i) = x.transpose();
    batch.thetas.row(i) = p.bind(x)(anchor_rng).transpose();
  }
  Rng synth_rng(mix_seed(seed, 0x5d21u));
  for (int i = 0; i < n; ++i) {
    auto bound = q.bind(batch.xs.row(i).transpose());
    for (int j = 0; j < k; ++j) {
      batch.synth.row(static_cast<Eigen::Index>(i) * k + j) = bound(synth_rng).transpose();
    }
  }
  return batch;
}

}  // namespace

SampleBatch sample_joint(const BenchmarkTask& task, const ConditionalSampler& q, int n,
                         int k, std::uint64_t seed) {
  return sample_core(task, anchor_sampler(task, PerturbationSpec{}), q, n, k, seed);
}

SampleBatch sample_batch(const BenchmarkTask& task, const PerturbationSpec& spec, int n,
                         int k, std::uint64_t seed) {
  return sample_core(task, anchor_sampler(task, spec), perturbed_sampler(task, spec), n, k,
                     seed);
}

namespace {

json matrix_to_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

Eigen::MatrixXd matrix_from_json(const json& j) {
  const auto rows = j.get<std::vector<std::vector<double>>>();
  if (rows.empty()) return {};
  Eigen::MatrixXd m(rows.size(), rows[0].size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t c = 0; c < rows[i].size(); ++c) m(i, c) = rows[i][c];
  }
  return m;
}

json vector_to_json(const Eigen::VectorXd& v) {
  return json(std::vector<double>(v.data(), v.data() + v.size()));
}

Eigen::VectorXd vector_from_json(const json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

json tree_to_json(const TreeGmm& gmm) {
  json covs = json::array();
  for (const Eigen::Matrix2d& c : gmm.covariances) covs.push_back(matrix_to_json(c));
  return json{{"means", matrix_to_json(gmm.means)},
              {"covariances", std::move(covs)},
              {"weights", vector_to_json(gmm.weights)}};
}

TreeGmm tree_from_json(const json& j) {
  TreeGmm gmm;
  gmm.means = matrix_from_json(j.at("means"));
  for (const json& c : j.at("covariances")) {
    gmm.covariances.push_back(matrix_from_json(c));
  }
  gmm.weights = vector_from_json(j.at("weights"));
  return gmm;
}

}  // namespace

std::string task_to_json(const BenchmarkTask& task) {
  json j;
  j["family"] = family_name(task.family);
  j["m"] = task.m;
  j["s"] = task.s;
  j["d"] = task.d;
  j["seed"] = task.seed;
  j["rho"] = task.rho;
  if (task.family != TaskFamily::tree) {
    j["w1"] = matrix_to_json(task.w1);
    j["w2"] = vector_to_json(task.w2);
  }
  if (task.family == TaskFamily::manifold) {
    j["b_mat"] = matrix_to_json(task.b_mat);
    j["a_mat"] = matrix_to_json(task.a_mat);
  }
  if (task.family == TaskFamily::tree) {
    j["tree_sigma"] = task.tree_sigma;
    j["tree_class_a"] = tree_to_json(task.tree_class_a);
    j["tree_class_b"] = tree_to_json(task.tree_class_b);
    const TreeGeometry& g = task.tree_geometry;
    j["tree_geometry"] = json{{"depth", g.depth},
                              {"components_per_branch", g.components_per_branch},
                              {"root_length", g.root_length},
                              {"length_decay", g.length_decay},
                              {"thickness", g.thickness},
                              {"angle_base", g.angle_base},
                              {"angle_jitter", g.angle_jitter}};
  }
  return j.dump();
}

BenchmarkTask task_from_json(const std::string& text) {
  json j = json::parse(text);
  BenchmarkTask task;
  task.family = family_from_name(j.at("family").get<std::string>());
  task.m = j.at("m").get<int>();
  task.s = j.at("s").get<int>();
  task.d = j.at("d").get<int>();
  task.seed = j.at("seed").get<std::uint64_t>();
  task.rho = j.at("rho").get<double>();
  if (task.family != TaskFamily::tree) {
    task.w1 = matrix_from_json(j.at("w1"));
    task.w2 = vector_from_json(j.at("w2"));
    task.sigma = toeplitz_correlation(task.s, task.rho);
    task.sigma_chol = lower_cholesky(task.sigma);
  }
  if (task.family == TaskFamily::manifold) {
    task.b_mat = matrix_from_json(j.at("b_mat"));
    task.a_mat = matrix_from_json(j.at("a_mat"));
  }
  if (task.family == TaskFamily::tree) {
    task.tree_sigma = j.at("tree_sigma").get<double>();
    task.tree_class_a = tree_from_json(j.at("tree_class_a"));
    task.tree_class_b = tree_from_json(j.at("tree_class_b"));
    const json& g = j.at("tree_geometry");
    task.tree_geometry.depth = g.at("depth").get<int>();
    task.tree_geometry.components_per_branch = g.at("components_per_branch").get<int>();
    task.tree_geometry.root_length = g.at("root_length").get<double>();
    task.tree_geometry.length_decay = g.at("length_decay").get<double>();
    task.tree_geometry.thickness = g.at("thickness").get<double>();
    task.tree_geometry.angle_base = g.at("angle_base").get<double>();
    task.tree_geometry.angle_jitter = g.at("angle_jitter").get<double>();
  }
  return task;
}

}  // namespace colt
