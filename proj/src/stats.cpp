#include "colt/stats.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <tuple>
#include <vector>

#include "colt/errors.hpp"

namespace colt {

void RankVector::validate() const {
  if (values.size() < 1) throw ContractError("rank vector must be nonempty");
  for (Eigen::Index i = 0; i < values.size(); ++i) {
    const double u = values[i];
    if (!(u >= 0.0 && u <= 1.0)) {
      throw ContractError("rank outside [0,1]: " + std::to_string(u));
    }
  }
}

std::string method_name(Method m) {
  switch (m) {
    case Method::colt_full: return "colt_full";
    case Method::colt_id: return "colt_id";
    case Method::sbc: return "sbc";
    case Method::tarp: return "tarp";
    case Method::c2st: return "c2st";
  }
  return "colt_full";
}

Method method_from_name(const std::string& name) {
  if (name == "colt_full") return Method::colt_full;
  if (name == "colt_id") return Method::colt_id;
  if (name == "sbc") return Method::sbc;
  if (name == "tarp") return Method::tarp;
  if (name == "c2st") return Method::c2st;
  throw ConfigError("unknown method: " + name);
}

TestReport make_report(Method method, double statistic, double p_value) {
  if (!std::isfinite(statistic) || statistic < 0.0) {
    throw ContractError("test statistic must be finite and nonnegative");
  }
  TestReport r;
  r.method = method;
  r.statistic = statistic;
  r.p_value = std::clamp(p_value, 0.0, 1.0);
  r.reject_at_05 = r.p_value < 0.05;
  return r;
}

double ks_statistic(const RankVector& ranks) {
  ranks.validate();
  std::vector<double> u(ranks.values.data(), ranks.values.data() + ranks.values.size());
  std::sort(u.begin(), u.end());
  const double n = static_cast<double>(u.size());
  double d = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    d = std::max(d, (i + 1) / n - u[i]);
    d = std::max(d, u[i] - i / n);
  }
  return d;
}

double ks_pvalue(double d, int n) {
  if (n < 1) throw ContractError("ks_pvalue: n must be >= 1");
  if (d <= 0.0) return 1.0;
  const double sqn = std::sqrt(static_cast<double>(n));
  const double lambda = (sqn + 0.12 + 0.11 / sqn) * d;
  if (lambda <= 0.0) return 1.0;
  double sum = 0.0;
  double sign = 1.0;
  for (int k = 1; k < 100000; ++k) {
    const double term = std::exp(-2.0 * k * k * lambda * lambda);
    sum += sign * term;
    if (term < 1e-12) break;
    sign = -sign;
  }
  return std::clamp(2.0 * sum, 0.0, 1.0);
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

double c2st_pvalue(double accuracy, int n_test) {
  if (n_test < 1) throw ContractError("c2st_pvalue: n_test must be >= 1");
  const double z = (accuracy - 0.5) * std::sqrt(4.0 * n_test);
  return 1.0 - normal_cdf(z);
}

namespace detail {

namespace {

struct OtResult {
  double value = 0.0;
  // d(value)/d(source position) and d/d(target position); filled on request
  Eigen::VectorXd grad_x;
  Eigen::VectorXd grad_y;
  bool finite = true;
};

Eigen::MatrixXd cost_matrix(const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
  return (x.replicate(1, y.size()).rowwise() - y.transpose()).array().square().matrix();
}

/// Plain scaling iterations. Safe for the eps used in training; underflows
/// for very small eps, which the caller detects and retries in log domain.
OtResult ot_scaling(const Eigen::VectorXd& x, const Eigen::VectorXd& y, double eps,
                    int iterations, bool want_grad) {
  const Eigen::Index n = x.size(), m = y.size();
  const double a = 1.0 / static_cast<double>(n);
  const double b = 1.0 / static_cast<double>(m);
  const Eigen::MatrixXd kern = (-cost_matrix(x, y) / eps).array().exp().matrix();
  Eigen::VectorXd q = Eigen::VectorXd::Ones(m);
  Eigen::VectorXd p(n);
  for (int it = 0; it < iterations; ++it) {
    p = a * (kern * q).cwiseInverse();
    q = b * (kern.transpose() * p).cwiseInverse();
  }
  p = a * (kern * q).cwiseInverse();  // exact row marginals

  OtResult res;
  res.value = eps * (a * (p.array() * static_cast<double>(n)).log().sum() +
                     b * (q.array() * static_cast<double>(m)).log().sum());
  res.finite = std::isfinite(res.value);
  if (want_grad && res.finite) {
    const Eigen::VectorXd col_marginal = q.cwiseProduct(kern.transpose() * p);
    const Eigen::VectorXd kqy = kern * q.cwiseProduct(y);
    res.grad_x = 2.0 * (a * x - p.cwiseProduct(kqy));
    const Eigen::VectorXd ktpx = kern.transpose() * p.cwiseProduct(x);
    res.grad_y = 2.0 * (col_marginal.cwiseProduct(y) - q.cwiseProduct(ktpx));
    res.finite = res.grad_x.allFinite() && res.grad_y.allFinite();
  }
  return res;
}

double logsumexp_row(const Eigen::VectorXd& v) {
  const double mx = v.maxCoeff();
  if (!std::isfinite(mx)) return mx;
  return mx + std::log((v.array() - mx).exp().sum());
}

/// Log-domain iterations; slower but stable for tiny eps.
OtResult ot_log_domain(const Eigen::VectorXd& x, const Eigen::VectorXd& y, double eps,
                       int iterations, bool want_grad) {
  const Eigen::Index n = x.size(), m = y.size();
  const double log_a = -std::log(static_cast<double>(n));
  const double log_b = -std::log(static_cast<double>(m));
  const Eigen::MatrixXd cost = cost_matrix(x, y);
  Eigen::VectorXd f = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd g = Eigen::VectorXd::Zero(m);
  for (int it = 0; it <= iterations; ++it) {
    for (Eigen::Index i = 0; i < n; ++i) {
      f[i] = -eps * logsumexp_row((g - cost.row(i).transpose()) / eps +
                                  Eigen::VectorXd::Constant(m, log_b));
    }
    if (it == iterations) break;  // final f-update gives exact row marginals
    for (Eigen::Index j = 0; j < m; ++j) {
      g[j] = -eps * logsumexp_row((f - cost.col(j)) / eps +
                                  Eigen::VectorXd::Constant(n, log_a));
    }
  }
  OtResult res;
  res.value = f.mean() + g.mean();
  if (want_grad) {
    res.grad_x = Eigen::VectorXd::Zero(n);
    res.grad_y = Eigen::VectorXd::Zero(m);
    for (Eigen::Index i = 0; i < n; ++i) {
      const Eigen::ArrayXd pi_row =
          ((f[i] + g.array() - cost.row(i).transpose().array()) / eps + log_a + log_b)
              .exp();
      res.grad_x[i] = 2.0 * (pi_row * (x[i] - y.array())).sum();
      res.grad_y.array() -= 2.0 * pi_row * (x[i] - y.array());
    }
  }
  res.finite = std::isfinite(res.value);
  return res;
}

OtResult ot_entropic(const Eigen::VectorXd& x, const Eigen::VectorXd& y, double eps,
                     int iterations, bool want_grad) {
  if (eps >= 5e-3) {
    OtResult res = ot_scaling(x, y, eps, iterations, want_grad);
    if (res.finite) return res;
  }
  return ot_log_domain(x, y, eps, iterations, want_grad);
}

Eigen::VectorXd midpoint_grid(Eigen::Index n) {
  Eigen::VectorXd g(n);
  for (Eigen::Index j = 0; j < n; ++j) g[j] = (j + 0.5) / static_cast<double>(n);
  return g;
}

double grid_self_transport(Eigen::Index n, double eps, int iterations) {
  static std::map<std::tuple<Eigen::Index, double, int>, double> cache;
  static std::mutex mutex;
  const auto key = std::make_tuple(n, eps, iterations);
  {
    std::lock_guard<std::mutex> lock(mutex);
    auto it = cache.find(key);
    if (it != cache.end()) return it->second;
  }
  const Eigen::VectorXd g = midpoint_grid(n);
  const double v = ot_entropic(g, g, eps, iterations, false).value;
  std::lock_guard<std::mutex> lock(mutex);
  cache[key] = v;
  return v;
}

}  // namespace

SinkhornResult sinkhorn_uniform_impl(const Eigen::VectorXd& ranks, double epsilon,
                                     int iterations, bool want_grad) {
  if (epsilon <= 0.0) throw ConfigError("sinkhorn: epsilon must be positive");
  if (iterations < 1) throw ConfigError("sinkhorn: iterations must be >= 1");
  if (ranks.size() < 1) throw ContractError("sinkhorn: empty rank vector");
  const Eigen::VectorXd grid = midpoint_grid(ranks.size());
  const OtResult cross = ot_entropic(ranks, grid, epsilon, iterations, want_grad);
  const OtResult self = ot_entropic(ranks, ranks, epsilon, iterations, want_grad);
  const double grid_term = grid_self_transport(ranks.size(), epsilon, iterations);
  SinkhornResult out;
  out.value = cross.value - 0.5 * self.value - 0.5 * grid_term;
  if (!std::isfinite(out.value)) {
    throw TrainingDivergedError("sinkhorn divergence is not finite");
  }
  if (want_grad) {
    // the self term sees each rank as both source and target
    out.grad = cross.grad_x - 0.5 * (self.grad_x + self.grad_y);
    if (!out.grad.allFinite()) {
      throw TrainingDivergedError("sinkhorn gradient is not finite");
    }
  }
  return out;
}

}  // namespace detail

double sinkhorn_uniform_divergence(const RankVector& ranks, double epsilon,
                                   int iterations) {
  ranks.validate();
  return detail::sinkhorn_uniform_impl(ranks.values, epsilon, iterations, false).value;
}

}  // namespace colt
