#pragma once

#include <Eigen/Core>
#include <array>
#include <string>

namespace colt {

/// Empirical ball-probability ranks, each in [0, 1].
struct RankVector {
  Eigen::VectorXd values;

  int n() const { return static_cast<int>(values.size()); }
  void validate() const;
};

enum class Method { colt_full, colt_id, sbc, tarp, c2st };

std::string method_name(Method m);
Method method_from_name(const std::string& name);

struct TestReport {
  Method method = Method::colt_full;
  double statistic = 0.0;
  double p_value = 1.0;
  bool reject_at_05 = false;
};

TestReport make_report(Method method, double statistic, double p_value);

/// One-sample Kolmogorov-Smirnov statistic against Uniform[0,1]:
/// D_n = sup_u |F_n(u) - u|, evaluated exactly at the sorted sample.
double ks_statistic(const RankVector& ranks);

/// Asymptotic Kolmogorov survival function with the Stephens small-sample
/// correction lambda = (sqrt(n) + 0.12 + 0.11/sqrt(n)) * d.
double ks_pvalue(double d, int n);

/// One-sided p-value for a classifier two-sample test from held-out
/// accuracy: z = (acc - 1/2) * sqrt(4 n_test), p = 1 - Phi(z).
double c2st_pvalue(double accuracy, int n_test);

double normal_cdf(double z);

/// Debiased Sinkhorn divergence S_eps between the empirical measure on the
/// ranks and the fixed midpoint grid {(j - 1/2)/n}, squared-distance cost,
/// fixed iteration budget.
double sinkhorn_uniform_divergence(const RankVector& ranks, double epsilon,
                                   int iterations);

namespace detail {

struct SinkhornResult {
  double value = 0.0;
  Eigen::VectorXd grad;  // d(value)/d(rank_i); empty unless requested
};

/// Shared implementation; gradients use the optimal-plan envelope form.
SinkhornResult sinkhorn_uniform_impl(const Eigen::VectorXd& ranks, double epsilon,
                                     int iterations, bool want_grad);

}  // namespace detail

}  // namespace colt
