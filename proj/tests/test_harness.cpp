#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <sstream>

#include "colt/errors.hpp"
#include "colt/harness.hpp"

using namespace colt;

namespace {

ExperimentConfig tiny_sweep() {
  ExperimentConfig c;
  c.family = TaskFamily::gaussian;
  c.m = 2;
  c.s = 2;
  c.d = 2;
  c.kind = PerturbKind::mean_shift;
  c.alphas = {0.0, 2.0};
  c.methods = {Method::sbc, Method::tarp};
  c.n = 40;
  c.k = 30;
  c.eval_batches = 10;
  c.seeds = {0, 1};
  c.colt.epochs = 2;
  c.colt.hidden_dims = {8};
  c.c2st.epochs = 5;
  c.c2st.hidden_dims = {8};
  return c;
}

std::string strip_wall_time(const std::string& csv) {
  std::istringstream in(csv);
  std::string line, out;
  while (std::getline(in, line)) {
    const auto pos = line.rfind(',');
    out += line.substr(0, pos) + "\n";
  }
  return out;
}

}  // namespace

TEST_CASE("config validation catches the documented errors") {
  ExperimentConfig c = tiny_sweep();
  c.alphas = {};
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = tiny_sweep();
  c.alphas = {0.3, 0.1};
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = tiny_sweep();
  c.methods = {};
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = tiny_sweep();
  c.eval_batches = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("config json parsing applies presets and overrides") {
  const std::string text = R"({
    "preset": "mean_shift",
    "task": {"family": "gaussian", "m": 3, "s": 3, "seed": 4},
    "methods": ["colt_id", "sbc"],
    "eval_batches": 25,
    "colt": {"epochs": 10}
  })";
  const ExperimentConfig c = config_from_json(text);
  CHECK(c.kind == PerturbKind::mean_shift);
  CHECK(c.alphas.size() == 7);
  CHECK(c.colt.epochs == 10);             // override wins
  CHECK(c.colt.learning_rate == 1e-5);    // preset value kept
  CHECK(c.eval_batches == 25);
  CHECK(c.methods.size() == 2);
  CHECK(c.task_seed == 4);
}

TEST_CASE("config json rejects unknown names and bad json") {
  CHECK_THROWS_AS(config_from_json("{nope"), ConfigError);
  CHECK_THROWS_AS(config_from_json(R"({"preset": "bogus"})"), ConfigError);
  CHECK_THROWS_AS(config_from_json(R"({"methods": ["wat"], "preset": "tree"})"), ConfigError);
  CHECK_THROWS_AS(config_from_json(R"({"perturbation": {"kind": "wat"}, "preset": "tree"})"),
                  ConfigError);
}

TEST_CASE("every preset builds a valid config") {
  for (const std::string& name : preset_names()) {
    const ExperimentConfig c = config_preset(name);
    CHECK_NOTHROW(c.validate());
  }
  // tree preset carries the published budget
  const ExperimentConfig tree = config_preset("tree");
  CHECK(tree.n == 1000);
  CHECK(tree.k == 100);
  CHECK(tree.colt.epochs == 5000);
}

TEST_CASE("run_experiment emits one row per cell in stable order") {
  const ExperimentConfig c = tiny_sweep();
  const std::vector<ResultRow> rows = run_experiment(c);
  REQUIRE(rows.size() == 2 * 2 * 2);  // methods x alphas x seeds
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto key = [](const ResultRow& r) {
      return std::make_tuple(method_name(r.method), r.alpha, r.seed);
    };
    CHECK(key(rows[i - 1]) < key(rows[i]));
  }
  for (const ResultRow& r : rows) {
    CHECK_FALSE(r.failed);
    CHECK(r.power >= 0.0);
    CHECK(r.power <= 1.0);
    // power * eval_batches is a rejection count
    const double count = r.power * c.eval_batches;
    CHECK(count == doctest::Approx(std::round(count)).epsilon(1e-9));
  }
}

TEST_CASE("strong mean shift separates power from the null rows") {
  const ExperimentConfig c = tiny_sweep();
  const std::vector<ResultRow> rows = run_experiment(c);
  double null_power = 0.0, alt_power = 0.0;
  int nulls = 0, alts = 0;
  for (const ResultRow& r : rows) {
    if (r.method != Method::sbc) continue;
    if (r.alpha == 0.0) {
      null_power += r.power;
      ++nulls;
    } else {
      alt_power += r.power;
      ++alts;
    }
  }
  CHECK(null_power / nulls < 0.3);
  CHECK(alt_power / alts > 0.7);
}

TEST_CASE("csv has the pinned column order and round-trips") {
  const std::vector<ResultRow> rows = run_experiment(tiny_sweep());
  const std::string csv = rows_to_csv(rows);
  std::istringstream in(csv);
  std::string header;
  std::getline(in, header);
  CHECK(header ==
        "method,family,kind,m,s,d,alpha,seed,power,mean_statistic,mean_pvalue,"
        "wall_time_seconds");
  int lines = 0;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) ++lines;
  }
  CHECK(lines == static_cast<int>(rows.size()));

  const std::vector<ResultRow> parsed = rows_from_csv(csv);
  REQUIRE(parsed.size() == rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    CHECK(parsed[i].method == rows[i].method);
    CHECK(parsed[i].alpha == doctest::Approx(rows[i].alpha));
    CHECK(parsed[i].power == doctest::Approx(rows[i].power).epsilon(1e-5));
  }
}

TEST_CASE("csv emit writes a file and rejects empty input") {
  const std::string path = "test_harness_out/results.csv";
  std::filesystem::remove_all("test_harness_out");
  ResultRow row;
  row.method = Method::sbc;
  emit_csv({row}, path);
  CHECK(std::filesystem::exists(path));
  CHECK_THROWS_AS(rows_to_csv({}), ConfigError);
  std::filesystem::remove_all("test_harness_out");
}

TEST_CASE("replay determinism: identical config gives identical csv") {
  const ExperimentConfig c = tiny_sweep();
  const std::string a = strip_wall_time(rows_to_csv(run_experiment(c)));
  const std::string b = strip_wall_time(rows_to_csv(run_experiment(c)));
  CHECK(a == b);
}

TEST_CASE("seed isolation: adding a seed leaves existing cells unchanged") {
  ExperimentConfig c = tiny_sweep();
  const std::vector<ResultRow> base = run_experiment(c);
  c.seeds = {0, 1, 2};
  const std::vector<ResultRow> extended = run_experiment(c);
  for (const ResultRow& r : base) {
    bool found = false;
    for (const ResultRow& e : extended) {
      if (e.method == r.method && e.alpha == r.alpha && e.seed == r.seed) {
        CHECK(e.power == r.power);
        CHECK(e.mean_statistic == r.mean_statistic);
        found = true;
      }
    }
    CHECK(found);
  }
}

TEST_CASE("svg has one polyline per method plus the reference line") {
  const std::vector<ResultRow> rows = run_experiment(tiny_sweep());
  const std::string svg = rows_to_svg(rows);
  std::size_t polylines = 0, pos = 0;
  while ((pos = svg.find("<polyline", pos)) != std::string::npos) {
    ++polylines;
    pos += 9;
  }
  CHECK(polylines == 2);
  CHECK(svg.find("<line") != std::string::npos);
  CHECK(svg.find("<?xml") == 0);
  CHECK(svg.rfind("</svg>") != std::string::npos);
}

TEST_CASE("svg requires at least two alpha levels") {
  ExperimentConfig c = tiny_sweep();
  c.alphas = {0.5};
  const std::vector<ResultRow> rows = run_experiment(c);
  CHECK_THROWS_WITH_AS(rows_to_svg(rows),
                       doctest::Contains("CSV"), ConfigError);
}

TEST_CASE("fast profile shrinks the budget") {
  ExperimentConfig c = config_preset("cov_scale");
  apply_fast_profile(c);
  CHECK(c.k == 100);
  CHECK(c.eval_batches == 50);
}
