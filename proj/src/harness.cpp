#include "colt/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "colt/errors.hpp"
#include "colt/rng.hpp"

namespace colt {

using json = nlohmann::json;

void ExperimentConfig::validate() const {
  if (alphas.empty()) throw ConfigError("alpha list must be nonempty");
  for (double a : alphas) {
    if (a < 0.0) throw ConfigError("alphas must be nonnegative");
  }
  if (!std::is_sorted(alphas.begin(), alphas.end())) {
    throw ConfigError("alphas must be sorted ascending");
  }
  if (methods.empty()) throw ConfigError("method list must be nonempty");
  if (n < 1 || k < 1) throw ConfigError("n and k must be >= 1");
  if (eval_batches < 1) throw ConfigError("eval_batches must be >= 1");
  if (seeds.empty()) throw ConfigError("seed list must be nonempty");
  colt.validate();
  c2st.validate();
}

BenchmarkTask ExperimentConfig::build_task() const {
  switch (family) {
    case TaskFamily::gaussian: return make_gaussian_task(m, s, task_seed);
    case TaskFamily::manifold: return make_manifold_task(m, s, d, task_seed);
    case TaskFamily::tree: return make_tree_task(tree_sigma, task_seed, tree_geometry);
  }
  throw ConfigError("unknown task family");
}

namespace {

ExperimentConfig base_preset() {
  ExperimentConfig c;
  c.methods = {Method::colt_full, Method::colt_id, Method::sbc, Method::tarp, Method::c2st};
  c.n = 100;
  c.k = 500;
  c.eval_batches = 200;
  c.colt.epochs = 1000;
  c.colt.learning_rate = 1e-5;
  c.c2st.epochs = 1000;
  c.c2st.learning_rate = 1e-5;
  return c;
}

}  // namespace

std::vector<std::string> preset_names() {
  return {"mean_shift", "cov_scale",     "anisotropic", "t_tail",
          "extra_modes", "mode_collapse", "blind_prior", "tree"};
}

ExperimentConfig config_preset(const std::string& name) {
  ExperimentConfig c = base_preset();
  if (name == "mean_shift") {
    c.kind = PerturbKind::mean_shift;
    c.alphas = {0.0, 0.05, 0.1, 0.15, 0.2, 0.25, 0.3};
    c.colt.epochs = 25;
  } else if (name == "cov_scale") {
    c.kind = PerturbKind::cov_scale;
    c.alphas = {0.0, 0.2, 0.4, 0.6, 0.8, 1.0, 1.2, 1.4};
  } else if (name == "anisotropic") {
    c.kind = PerturbKind::anisotropic;
    c.alphas = {0.0, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0};
  } else if (name == "t_tail") {
    c.kind = PerturbKind::t_tail;
    c.alphas = {0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6};
  } else if (name == "extra_modes") {
    c.kind = PerturbKind::extra_modes;
    c.alphas = {0.0, 0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.35, 0.4};
    c.colt.learning_rate = 5e-5;
    c.c2st.learning_rate = 5e-5;
  } else if (name == "mode_collapse") {
    c.kind = PerturbKind::mode_collapse;
    c.alphas = {0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6};
  } else if (name == "blind_prior") {
    c.kind = PerturbKind::blind_prior;
    c.alphas = {0.0, 1.0};  // any alpha > 0 enables the blind sampler
    c.colt.learning_rate = 1e-3;
  } else if (name == "tree") {
    c.family = TaskFamily::tree;
    c.m = 1;
    c.s = 2;
    c.d = 2;
    c.kind = PerturbKind::cov_scale;
    c.alphas = {0.0, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0};
    c.n = 1000;
    c.k = 100;
    c.colt.epochs = 5000;
    c.c2st.epochs = 5000;
  } else {
    throw ConfigError("unknown preset: " + name);
  }
  return c;
}

void apply_fast_profile(ExperimentConfig& config) {
  config.k = std::min(config.k, 100);
  config.eval_batches = std::min(config.eval_batches, 50);
}

ExperimentConfig config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  ExperimentConfig c = j.contains("preset")
                           ? config_preset(j.at("preset").get<std::string>())
                           : base_preset();
  if (j.contains("task")) {
    const json& t = j.at("task");
    if (t.contains("family")) c.family = family_from_name(t.at("family").get<std::string>());
    if (t.contains("m")) c.m = t.at("m").get<int>();
    if (t.contains("s")) c.s = t.at("s").get<int>();
    if (t.contains("d")) c.d = t.at("d").get<int>();
    if (t.contains("seed")) c.task_seed = t.at("seed").get<std::uint64_t>();
    if (t.contains("tree_sigma")) c.tree_sigma = t.at("tree_sigma").get<double>();
  }
  if (j.contains("perturbation")) {
    const json& p = j.at("perturbation");
    if (p.contains("kind")) c.kind = perturb_from_name(p.at("kind").get<std::string>());
    if (p.contains("alphas")) c.alphas = p.at("alphas").get<std::vector<double>>();
    if (p.contains("epsilon_t")) c.epsilon_t = p.at("epsilon_t").get<double>();
  }
  if (j.contains("methods")) {
    c.methods.clear();
    for (const json& mj : j.at("methods")) {
      c.methods.push_back(method_from_name(mj.get<std::string>()));
    }
  }
  if (j.contains("n")) c.n = j.at("n").get<int>();
  if (j.contains("k")) c.k = j.at("k").get<int>();
  if (j.contains("eval_batches")) c.eval_batches = j.at("eval_batches").get<int>();
  if (j.contains("seeds")) c.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
  if (j.contains("colt")) {
    const json& t = j.at("colt");
    if (t.contains("epochs")) c.colt.epochs = t.at("epochs").get<int>();
    if (t.contains("learning_rate")) c.colt.learning_rate = t.at("learning_rate").get<double>();
    if (t.contains("ste_temperature")) {
      c.colt.ste_temperature = t.at("ste_temperature").get<double>();
    }
    if (t.contains("sinkhorn_epsilon")) {
      c.colt.sinkhorn_epsilon = t.at("sinkhorn_epsilon").get<double>();
    }
    if (t.contains("sinkhorn_iterations")) {
      c.colt.sinkhorn_iterations = t.at("sinkhorn_iterations").get<int>();
    }
    if (t.contains("hidden_dims")) c.colt.hidden_dims = t.at("hidden_dims").get<std::vector<int>>();
    if (t.contains("embed_dim")) c.colt.embed_dim = t.at("embed_dim").get<int>();
  }
  if (j.contains("c2st")) {
    const json& t = j.at("c2st");
    if (t.contains("epochs")) c.c2st.epochs = t.at("epochs").get<int>();
    if (t.contains("learning_rate")) c.c2st.learning_rate = t.at("learning_rate").get<double>();
    if (t.contains("train_fraction")) c.c2st.train_fraction = t.at("train_fraction").get<double>();
    if (t.contains("hidden_dims")) c.c2st.hidden_dims = t.at("hidden_dims").get<std::vector<int>>();
  }
  if (j.contains("output_dir")) c.output_dir = j.at("output_dir").get<std::string>();
  if (j.contains("fast") && j.at("fast").get<bool>()) apply_fast_profile(c);
  c.validate();
  return c;
}

namespace {

struct CellResult {
  double power = 0.0;
  double mean_statistic = 0.0;
  double mean_pvalue = 0.0;
};

CellResult evaluate_cell(const BenchmarkTask& task, const ExperimentConfig& config,
                         Method method, const PerturbationSpec& spec, int alpha_index,
                         std::uint64_t seed) {
  // data streams are shared across methods: batch seeds never involve the
  // method, so every method sees identical data where the protocol allows
  const std::uint64_t cell_root = mix_seed(config.task_seed, seed, alpha_index);
  const SampleBatch train_batch =
      sample_batch(task, spec, config.n, config.k, mix_seed(cell_root, 0));

  ColtModel colt_model;
  C2stModel c2st_model;
  if (method == Method::colt_full || method == Method::colt_id) {
    TrainConfig tc = config.colt;
    tc.seed = mix_seed(cell_root, 0x0c17u);
    colt_model = colt_train(
        train_batch, tc,
        method == Method::colt_full ? ColtVariant::full : ColtVariant::id);
  } else if (method == Method::c2st) {
    C2stConfig cc = config.c2st;
    cc.seed = mix_seed(cell_root, 0xc25fu);
    c2st_model = c2st_train(train_batch, cc);
  }

  std::vector<TestReport> reports(config.eval_batches);
  detail::parallel_row_chunks(config.eval_batches, 1, [&](int lo, int hi) {
    for (int b = lo; b < hi; ++b) {
      const SampleBatch eval_batch =
          sample_batch(task, spec, config.n, config.k, mix_seed(cell_root, 1 + b));
      switch (method) {
        case Method::colt_full:
        case Method::colt_id:
          reports[b] = colt_test(eval_batch, colt_model);
          break;
        case Method::sbc:
          reports[b] = sbc_test(eval_batch);
          break;
        case Method::tarp:
          reports[b] = tarp_test(eval_batch, mix_seed(cell_root, 0x7a59u, b));
          break;
        case Method::c2st:
          reports[b] = c2st_evaluate(c2st_model, eval_batch);
          break;
      }
    }
  });

  CellResult out;
  for (const TestReport& r : reports) {
    out.power += r.reject_at_05 ? 1.0 : 0.0;
    out.mean_statistic += r.statistic;
    out.mean_pvalue += r.p_value;
  }
  out.power /= config.eval_batches;
  out.mean_statistic /= config.eval_batches;
  out.mean_pvalue /= config.eval_batches;
  return out;
}

}  // namespace

std::vector<ResultRow> run_experiment(const ExperimentConfig& config) {
  config.validate();
  const BenchmarkTask task = config.build_task();
  std::vector<ResultRow> rows;
  for (Method method : config.methods) {
    for (std::size_t ai = 0; ai < config.alphas.size(); ++ai) {
      PerturbationSpec spec;
      spec.kind = config.kind;
      spec.alpha = config.alphas[ai];
      spec.epsilon_t = config.epsilon_t;
      for (std::uint64_t seed : config.seeds) {
        ResultRow row;
        row.method = method;
        row.family = task.family;
        row.kind = config.kind;
        row.m = task.m;
        row.s = task.s;
        row.d = task.d;
        row.alpha = spec.alpha;
        row.seed = seed;
        const auto start = std::chrono::steady_clock::now();
        try {
          const CellResult cell = evaluate_cell(task, config, method, spec,
                                                static_cast<int>(ai), seed);
          row.power = cell.power;
          row.mean_statistic = cell.mean_statistic;
          row.mean_pvalue = cell.mean_pvalue;
        } catch (const TrainingDivergedError& e) {
          row.failed = true;
          row.failure = e.what();
        }
        row.wall_time_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        rows.push_back(std::move(row));
      }
    }
  }
  std::sort(rows.begin(), rows.end(), [](const ResultRow& a, const ResultRow& b) {
    const std::string ma = method_name(a.method), mb = method_name(b.method);
    if (ma != mb) return ma < mb;
    if (a.alpha != b.alpha) return a.alpha < b.alpha;
    return a.seed < b.seed;
  });
  return rows;
}

namespace {

std::string format_number(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

}  // namespace

std::string rows_to_csv(const std::vector<ResultRow>& rows) {
  if (rows.empty()) throw ConfigError("no result rows to write");
  std::ostringstream out;
  out << "method,family,kind,m,s,d,alpha,seed,power,mean_statistic,mean_pvalue,"
         "wall_time_seconds\n";
  for (const ResultRow& r : rows) {
    if (r.failed) continue;  // failed cells are reported separately
    out << method_name(r.method) << ',' << family_name(r.family) << ','
        << perturb_name(r.kind) << ',' << r.m << ',' << r.s << ',' << r.d << ','
        << format_number(r.alpha) << ',' << r.seed << ',' << format_number(r.power) << ','
        << format_number(r.mean_statistic) << ',' << format_number(r.mean_pvalue) << ','
        << format_number(r.wall_time_seconds) << '\n';
  }
  return out.str();
}

void emit_csv(const std::vector<ResultRow>& rows, const std::string& path) {
  write_text_file(path, rows_to_csv(rows));
}

std::vector<ResultRow> rows_from_csv(const std::string& text) {
  std::vector<ResultRow> rows;
  std::istringstream in(text);
  std::string line;
  bool header = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (header) {
      header = false;
      continue;
    }
    std::istringstream ls(line);
    std::string field;
    std::vector<std::string> fields;
    while (std::getline(ls, field, ',')) fields.push_back(field);
    if (fields.size() != 12) throw IoError("malformed CSV row: " + line);
    ResultRow r;
    r.method = method_from_name(fields[0]);
    r.family = family_from_name(fields[1]);
    r.kind = perturb_from_name(fields[2]);
    r.m = std::stoi(fields[3]);
    r.s = std::stoi(fields[4]);
    r.d = std::stoi(fields[5]);
    r.alpha = std::stod(fields[6]);
    r.seed = std::stoull(fields[7]);
    r.power = std::stod(fields[8]);
    r.mean_statistic = std::stod(fields[9]);
    r.mean_pvalue = std::stod(fields[10]);
    r.wall_time_seconds = std::stod(fields[11]);
    rows.push_back(std::move(r));
  }
  return rows;
}

namespace {

struct Curve {
  std::string label;
  std::vector<std::pair<double, double>> points;  // (alpha, mean power)
};

std::vector<Curve> power_curves(const std::vector<ResultRow>& rows) {
  std::vector<Curve> curves;
  for (const ResultRow& r : rows) {
    if (r.failed) continue;
    const std::string label = method_name(r.method);
    auto it = std::find_if(curves.begin(), curves.end(),
                           [&](const Curve& c) { return c.label == label; });
    if (it == curves.end()) {
      curves.push_back(Curve{label, {}});
      it = curves.end() - 1;
    }
    auto pt = std::find_if(it->points.begin(), it->points.end(),
                           [&](const auto& p) { return p.first == r.alpha; });
    if (pt == it->points.end()) {
      it->points.emplace_back(r.alpha, r.power);
    } else {
      pt->second += r.power;  // averaged below by per-alpha counts
    }
  }
  // recompute means properly: count seeds per (method, alpha)
  for (Curve& c : curves) {
    for (auto& p : c.points) {
      int count = 0;
      double total = 0.0;
      for (const ResultRow& r : rows) {
        if (!r.failed && method_name(r.method) == c.label && r.alpha == p.first) {
          ++count;
          total += r.power;
        }
      }
      p.second = total / count;
    }
    std::sort(c.points.begin(), c.points.end());
  }
  return curves;
}

}  // namespace

std::string rows_to_svg(const std::vector<ResultRow>& rows) {
  std::vector<Curve> curves = power_curves(rows);
  if (curves.empty()) throw ConfigError("no rows to plot");
  double amin = 1e300, amax = -1e300;
  for (const Curve& c : curves) {
    for (const auto& p : c.points) {
      amin = std::min(amin, p.first);
      amax = std::max(amax, p.first);
    }
  }
  std::size_t max_points = 0;
  for (const Curve& c : curves) max_points = std::max(max_points, c.points.size());
  if (max_points < 2) {
    throw ConfigError("need at least two alpha levels to draw power curves; "
                      "use the CSV output for single-alpha sweeps");
  }
  const double w = 640, h = 480, ml = 60, mr = 150, mt = 30, mb = 50;
  const double pw = w - ml - mr, ph = h - mt - mb;
  auto xpix = [&](double a) { return ml + (a - amin) / (amax - amin) * pw; };
  auto ypix = [&](double p) { return mt + (1.0 - p) * ph; };

  static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"};
  std::ostringstream svg;
  svg << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
      << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h
      << "\" viewBox=\"0 0 " << w << " " << h << "\">\n";
  svg << "  <rect x=\"" << ml << "\" y=\"" << mt << "\" width=\"" << pw << "\" height=\""
      << ph << "\" fill=\"none\" stroke=\"#333\"/>\n";
  // nominal level reference
  svg << "  <line x1=\"" << ml << "\" y1=\"" << ypix(0.05) << "\" x2=\"" << ml + pw
      << "\" y2=\"" << ypix(0.05)
      << "\" stroke=\"#999\" stroke-dasharray=\"6 4\"/>\n";
  for (int tick = 0; tick <= 5; ++tick) {
    const double p = tick / 5.0;
    svg << "  <text x=\"" << ml - 8 << "\" y=\"" << ypix(p) + 4
        << "\" text-anchor=\"end\" font-size=\"12\">" << format_number(p) << "</text>\n";
  }
  for (std::size_t i = 0; i < curves[0].points.size(); ++i) {
    const double a = curves[0].points[i].first;
    svg << "  <text x=\"" << xpix(a) << "\" y=\"" << mt + ph + 20
        << "\" text-anchor=\"middle\" font-size=\"12\">" << format_number(a) << "</text>\n";
  }
  svg << "  <text x=\"" << ml + pw / 2 << "\" y=\"" << h - 10
      << "\" text-anchor=\"middle\" font-size=\"13\">alpha</text>\n";
  svg << "  <text x=\"15\" y=\"" << mt + ph / 2
      << "\" text-anchor=\"middle\" font-size=\"13\" transform=\"rotate(-90 15 "
      << mt + ph / 2 << ")\">power</text>\n";
  int color = 0;
  for (const Curve& c : curves) {
    const char* stroke = palette[color % 5];
    svg << "  <polyline fill=\"none\" stroke=\"" << stroke << "\" stroke-width=\"2\" points=\"";
    for (const auto& p : c.points) {
      svg << format_number(xpix(p.first)) << ',' << format_number(ypix(p.second)) << ' ';
    }
    svg << "\"/>\n";
    svg << "  <text x=\"" << ml + pw + 12 << "\" y=\"" << mt + 16 + 18 * color
        << "\" font-size=\"12\" fill=\"" << stroke << "\">" << c.label << "</text>\n";
    ++color;
  }
  svg << "</svg>\n";
  return svg.str();
}

void emit_power_svg(const std::vector<ResultRow>& rows, const std::string& path) {
  write_text_file(path, rows_to_svg(rows));
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::string& path, const std::string& text) {
  const std::filesystem::path p(path);
  if (p.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(p.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << text;
  if (!out) throw IoError("write failed for " + path);
}

}  // namespace colt
