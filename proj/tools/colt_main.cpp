#include <cstdlib>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "colt/harness.hpp"
#include "colt/rng.hpp"

namespace {

using namespace colt;

std::string resolve_output_dir(const std::string& configured, const std::string& flag) {
  if (!flag.empty()) return flag;
  if (const char* env = std::getenv("COLT_OUTPUT_DIR")) return env;
  return configured;
}

int cmd_run(const std::string& config_path, bool fast, const std::string& out_flag) {
  ExperimentConfig config = config_from_json(read_text_file(config_path));
  if (fast) apply_fast_profile(config);
  const std::string out_dir = resolve_output_dir(config.output_dir, out_flag);
  const std::vector<ResultRow> rows = run_experiment(config);
  std::string failures;
  for (const ResultRow& r : rows) {
    if (r.failed) {
      failures += method_name(r.method) + " alpha=" + std::to_string(r.alpha) +
                  " seed=" + std::to_string(r.seed) + ": " + r.failure + "\n";
    }
  }
  const std::string csv_path = out_dir + "/results.csv";
  emit_csv(rows, csv_path);
  std::cout << "wrote " << csv_path << "\n";
  if (!failures.empty()) {
    write_text_file(out_dir + "/failures.log", failures);
    std::cerr << "some cells failed; see " << out_dir << "/failures.log\n";
  }
  return 0;
}

int cmd_plot(const std::string& csv_path, const std::string& svg_path) {
  const std::vector<ResultRow> rows = rows_from_csv(read_text_file(csv_path));
  emit_power_svg(rows, svg_path);
  std::cout << "wrote " << svg_path << "\n";
  return 0;
}

int cmd_train(const std::string& config_path, const std::string& model_path,
              const std::string& method, double alpha_flag, long seed_flag) {
  ExperimentConfig config = config_from_json(read_text_file(config_path));
  const BenchmarkTask task = config.build_task();
  PerturbationSpec spec;
  spec.kind = config.kind;
  spec.alpha = alpha_flag >= 0.0 ? alpha_flag : config.alphas.front();
  spec.epsilon_t = config.epsilon_t;
  const std::uint64_t seed =
      seed_flag >= 0 ? static_cast<std::uint64_t>(seed_flag) : config.seeds.front();
  const SampleBatch batch =
      sample_batch(task, spec, config.n, config.k, mix_seed(config.task_seed, seed, 0));
  TrainConfig tc = config.colt;
  tc.seed = mix_seed(config.task_seed, seed, 0x0c17u);
  const ColtModel model = colt_train(batch, tc, variant_from_name(method) == ColtVariant::full
                                                    ? ColtVariant::full
                                                    : ColtVariant::id);
  write_text_file(model_path, colt_model_to_json(model));
  std::cout << "wrote " << model_path << "\n";
  return 0;
}

int cmd_test(const std::string& model_path, const std::string& config_path) {
  ExperimentConfig config = config_from_json(read_text_file(config_path));
  const ColtModel model = colt_model_from_json(read_text_file(model_path));
  const BenchmarkTask task = config.build_task();
  PerturbationSpec spec;
  spec.kind = config.kind;
  spec.alpha = config.alphas.front();
  spec.epsilon_t = config.epsilon_t;
  const SampleBatch batch = sample_batch(task, spec, config.n, config.k,
                                         mix_seed(config.task_seed, config.seeds.front(), 1));
  const TestReport report = colt_test(batch, model);
  nlohmann::json j{{"method", method_name(report.method)},
                   {"statistic", report.statistic},
                   {"p_value", report.p_value},
                   {"reject_at_05", report.reject_at_05}};
  std::cout << j.dump(2) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"conditional localization test harness"};
  app.require_subcommand(1);

  std::string config_path, csv_path, svg_path, model_path;
  std::string method = "colt_full";
  std::string out_flag;
  bool fast = false;
  double alpha_flag = -1.0;
  long seed_flag = -1;

  CLI::App* run = app.add_subcommand("run", "run a power/type-I sweep from a config file");
  run->add_option("config", config_path, "experiment config JSON")->required();
  run->add_flag("--fast", fast, "shrink the sampling budget for quick runs");
  run->add_option("--out", out_flag, "output directory (overrides config and env)");

  CLI::App* plot = app.add_subcommand("plot", "render power curves from a results CSV");
  plot->add_option("csv", csv_path, "results CSV")->required();
  plot->add_option("svg", svg_path, "output SVG")->required();

  CLI::App* train = app.add_subcommand("train", "train a localization model and save it");
  train->add_option("config", config_path, "experiment config JSON")->required();
  train->add_option("--save", model_path, "output model JSON")->required();
  train->add_option("--method", method, "colt_full or colt_id");
  train->add_option("--alpha", alpha_flag, "perturbation level (default: first in config)");
  train->add_option("--seed", seed_flag, "seed (default: first in config)");

  CLI::App* test = app.add_subcommand("test", "test a saved model on a fresh batch");
  test->add_option("--model", model_path, "model JSON")->required();
  test->add_option("config", config_path, "experiment config JSON")->required();

  try {
    app.parse(argc, argv);
    if (run->parsed()) return cmd_run(config_path, fast, out_flag);
    if (plot->parsed()) return cmd_plot(csv_path, svg_path);
    if (train->parsed()) return cmd_train(config_path, model_path, method, alpha_flag, seed_flag);
    if (test->parsed()) return cmd_test(model_path, config_path);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  } catch (const colt::ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
