#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "colt/baselines.hpp"
#include "colt/benchmarks.hpp"
#include "colt/colt.hpp"

namespace colt {

/// One sweep: (method x alpha x seed) cells on a frozen task. Defaults
/// follow the standard sampling budget (100 anchors, 500 draws, 200
/// evaluation batches, three seeds).
struct ExperimentConfig {
  TaskFamily family = TaskFamily::gaussian;
  int m = 3;
  int s = 3;
  int d = 3;
  std::uint64_t task_seed = 0;
  double tree_sigma = 0.01;
  TreeGeometry tree_geometry;

  PerturbKind kind = PerturbKind::none;
  double epsilon_t = 1e-3;
  std::vector<double> alphas;
  std::vector<Method> methods;

  int n = 100;
  int k = 500;
  int eval_batches = 200;
  std::vector<std::uint64_t> seeds = {0, 1, 2};

  TrainConfig colt;
  C2stConfig c2st;
  std::string output_dir = ".";

  void validate() const;
  BenchmarkTask build_task() const;
};

/// Named hyperparameter presets, one per perturbation type.
ExperimentConfig config_preset(const std::string& name);
std::vector<std::string> preset_names();

ExperimentConfig config_from_json(const std::string& text);

/// Shrinks the sampling budget for CI runs (k=100, 50 eval batches).
void apply_fast_profile(ExperimentConfig& config);

struct ResultRow {
  Method method = Method::colt_full;
  TaskFamily family = TaskFamily::gaussian;
  PerturbKind kind = PerturbKind::none;
  int m = 0, s = 0, d = 0;
  double alpha = 0.0;
  std::uint64_t seed = 0;
  double power = 0.0;
  double mean_statistic = 0.0;
  double mean_pvalue = 0.0;
  double wall_time_seconds = 0.0;
  bool failed = false;
  std::string failure;
};

/// Runs every cell: train once on a fresh training batch, then measure the
/// rejection fraction over eval_batches fresh batches. A diverged cell is
/// marked failed and the sweep continues.
std::vector<ResultRow> run_experiment(const ExperimentConfig& config);

std::string rows_to_csv(const std::vector<ResultRow>& rows);
void emit_csv(const std::vector<ResultRow>& rows, const std::string& path);
std::vector<ResultRow> rows_from_csv(const std::string& text);

std::string rows_to_svg(const std::vector<ResultRow>& rows);
void emit_power_svg(const std::vector<ResultRow>& rows, const std::string& path);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& text);

}  // namespace colt
