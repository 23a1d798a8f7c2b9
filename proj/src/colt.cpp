#include "colt/colt.hpp"

#include <cmath>
#include <nlohmann/json.hpp>

#include "colt/adam.hpp"
#include "colt/errors.hpp"
#include "colt/rng.hpp"
#include "colt/tape.hpp"

namespace colt {

using json = nlohmann::json;

void SampleBatch::validate() const {
  if (xs.rows() < 1) throw ContractError("batch needs at least one anchor");
  if (thetas.rows() != xs.rows()) throw ShapeError("anchor theta/x count mismatch");
  if (synth.cols() != thetas.cols()) throw ShapeError("synthetic draw dim mismatch");
  if (synth.rows() < xs.rows() || synth.rows() % xs.rows() != 0) {
    throw ShapeError("synthetic rows must be a positive multiple of anchor count");
  }
}

std::string variant_name(ColtVariant v) {
  return v == ColtVariant::full ? "full" : "id";
}

ColtVariant variant_from_name(const std::string& name) {
  if (name == "full") return ColtVariant::full;
  if (name == "id") return ColtVariant::id;
  throw ConfigError("unknown colt variant: " + name);
}

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("colt training requires at least one epoch");
  if (learning_rate <= 0.0) throw ConfigError("learning rate must be positive");
  if (ste_temperature <= 0.0) throw ConfigError("ste temperature must be positive");
  if (sinkhorn_epsilon <= 0.0) throw ConfigError("sinkhorn epsilon must be positive");
  if (sinkhorn_iterations < 1) throw ConfigError("sinkhorn iterations must be >= 1");
  for (int h : hidden_dims) {
    if (h <= 0) throw ConfigError("hidden dims must be positive");
  }
  if (embed_dim < 0) throw ConfigError("embed dim must be nonnegative");
}

void ColtModel::validate() const {
  localization.validate();
  if (variant == ColtVariant::full) {
    if (!embedding) throw ContractError("full variant requires an embedding net");
    embedding->validate();
    if (embedding->input_dim() != localization.output_dim()) {
      throw ShapeError("embedding input dim must match localization output dim");
    }
  } else if (embedding) {
    throw ContractError("id variant must use the identity embedding");
  }
}

double ball_rank(const Eigen::VectorXd& theta_star, const Eigen::MatrixXd& q_draws,
                 const Eigen::VectorXd& theta_l, const NetworkParams* embedding,
                 bool /*hard*/, double temperature) {
  if (temperature <= 0.0) throw ConfigError("ball_rank: temperature must be positive");
  if (q_draws.rows() < 1) throw ContractError("ball_rank: need at least one draw");
  if (theta_star.size() != theta_l.size() || q_draws.cols() != theta_star.size()) {
    throw ShapeError("ball_rank: dimension mismatch");
  }
  double anchor_dist;
  Eigen::VectorXd draw_dist;
  if (embedding != nullptr) {
    if (embedding->input_dim() != theta_star.size()) {
      throw ShapeError("ball_rank: embedding input dim mismatch");
    }
    const Eigen::VectorXd e_l = net_forward(*embedding, theta_l);
    const Eigen::VectorXd e_star = net_forward(*embedding, theta_star);
    const Eigen::MatrixXd e_draws = net_forward_batch(*embedding, q_draws);
    anchor_dist = (e_star - e_l).norm();
    draw_dist = (e_draws.rowwise() - e_l.transpose()).rowwise().norm();
  } else {
    anchor_dist = (theta_star - theta_l).norm();
    draw_dist = (q_draws.rowwise() - theta_l.transpose()).rowwise().norm();
  }
  const double closer = (draw_dist.array() < anchor_dist).cast<double>().sum();
  return closer / static_cast<double>(q_draws.rows());
}

namespace {

std::vector<int> net_dims(int in, const std::vector<int>& hidden, int out) {
  std::vector<int> dims;
  dims.reserve(hidden.size() + 2);
  dims.push_back(in);
  dims.insert(dims.end(), hidden.begin(), hidden.end());
  dims.push_back(out);
  return dims;
}

Eigen::VectorXd hard_ranks(const SampleBatch& batch, const ColtModel& model) {
  const int n = batch.n();
  const int k = batch.k();
  const Eigen::MatrixXd locs = net_forward_batch(model.localization, batch.xs);
  Eigen::MatrixXd e_loc, e_star, e_synth;
  if (model.variant == ColtVariant::full) {
    e_loc = net_forward_batch(*model.embedding, locs);
    e_star = net_forward_batch(*model.embedding, batch.thetas);
    e_synth = net_forward_batch(*model.embedding, batch.synth);
  } else {
    e_loc = locs;
    e_star = batch.thetas;
    e_synth = batch.synth;
  }
  Eigen::VectorXd ranks(n);
  const Eigen::VectorXd anchor_dist = (e_star - e_loc).rowwise().norm();
  detail::parallel_row_chunks(n, 64, [&](int lo, int hi) {
    for (int i = lo; i < hi; ++i) {
      const auto draws = e_synth.middleRows(static_cast<Eigen::Index>(i) * k, k);
      const double closer = ((draws.rowwise() - e_loc.row(i)).rowwise().norm().array() <
                             anchor_dist[i])
                                .cast<double>()
                                .sum();
      ranks[i] = closer / static_cast<double>(k);
    }
  });
  return ranks;
}

}  // namespace

ColtModel colt_train(const SampleBatch& batch, const TrainConfig& config,
                     ColtVariant variant) {
  batch.validate();
  config.validate();
  const int m = batch.x_dim();
  const int d = batch.theta_dim();
  const int k = batch.k();
  const int embed_dim = config.embed_dim > 0 ? config.embed_dim : d;

  ColtModel model;
  model.variant = variant;
  model.config = config;
  model.localization =
      net_init(net_dims(m, config.hidden_dims, d), Activation::relu, mix_seed(config.seed, 1));
  if (variant == ColtVariant::full) {
    model.embedding = net_init(net_dims(d, config.hidden_dims, embed_dim), Activation::relu,
                               mix_seed(config.seed, 2));
  }

  GradientTape tape;
  ParamSlot loc_slot = tape.track(model.localization);
  ParamSlot emb_slot{};
  TapeTensor xs = tape.constant(batch.xs);
  TapeTensor anchors = tape.constant(batch.thetas);
  TapeTensor synth = tape.constant(batch.synth);

  TapeTensor locs = tape.apply_net(loc_slot, xs);
  TapeTensor e_loc = locs, e_star = anchors, e_synth = synth;
  if (variant == ColtVariant::full) {
    emb_slot = tape.track(*model.embedding);
    e_loc = tape.apply_net(emb_slot, locs);
    e_star = tape.apply_net(emb_slot, anchors);
    e_synth = tape.apply_net(emb_slot, synth);
  }
  TapeTensor anchor_dist = tape.rowwise_distance(e_star, e_loc);
  TapeTensor synth_dist = tape.grouped_distance(e_synth, e_loc, k);
  TapeTensor ranks = tape.ste_rank(synth_dist, anchor_dist, k, config.ste_temperature);
  TapeTensor divergence =
      tape.sinkhorn_uniform(ranks, config.sinkhorn_epsilon, config.sinkhorn_iterations);
  // loss = -divergence; ascent on the divergence itself
  TapeTensor loss = tape.scale(divergence, -1.0);

  AdamState loc_adam(model.localization.weights.size(), config.learning_rate);
  std::optional<AdamState> emb_adam;
  if (variant == ColtVariant::full) {
    emb_adam.emplace(model.embedding->weights.size(), config.learning_rate);
  }

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    if (epoch > 0) tape.forward();
    const double loss_value = tape.scalar_value(loss);
    if (!std::isfinite(loss_value)) {
      throw TrainingDivergedError("colt training diverged at epoch " + std::to_string(epoch));
    }
    tape.backward(loss);
    try {
      adam_step(loc_adam, model.localization, tape.grad(loc_slot));
      if (variant == ColtVariant::full) {
        adam_step(*emb_adam, *model.embedding, tape.grad(emb_slot));
      }
    } catch (const TrainingDivergedError& e) {
      throw TrainingDivergedError(std::string(e.what()) + " (epoch " +
                                  std::to_string(epoch) + ")");
    }
  }
  return model;
}

TestReport colt_test(const SampleBatch& batch, const ColtModel& model) {
  batch.validate();
  model.validate();
  if (model.localization.input_dim() != batch.x_dim() ||
      model.localization.output_dim() != batch.theta_dim()) {
    throw ShapeError("colt_test: model and batch dimensions do not match");
  }
  RankVector ranks{hard_ranks(batch, model)};
  const double d = ks_statistic(ranks);
  const double p = ks_pvalue(d, batch.n());
  return make_report(
      model.variant == ColtVariant::full ? Method::colt_full : Method::colt_id, d, p);
}

double acld_distance(const TestReport& report) { return report.statistic; }

ColtModel colt_untrained(int x_dim, int theta_dim, const TrainConfig& config) {
  config.validate();
  ColtModel model;
  model.variant = ColtVariant::id;
  model.config = config;
  model.localization = net_init(net_dims(x_dim, config.hidden_dims, theta_dim),
                                Activation::relu, mix_seed(config.seed, 1));
  return model;
}

namespace {

json train_config_to_json(const TrainConfig& c) {
  return json{{"epochs", c.epochs},
              {"learning_rate", c.learning_rate},
              {"ste_temperature", c.ste_temperature},
              {"sinkhorn_epsilon", c.sinkhorn_epsilon},
              {"sinkhorn_iterations", c.sinkhorn_iterations},
              {"seed", c.seed},
              {"hidden_dims", c.hidden_dims},
              {"embed_dim", c.embed_dim}};
}

TrainConfig train_config_from_json(const json& j) {
  TrainConfig c;
  c.epochs = j.at("epochs").get<int>();
  c.learning_rate = j.at("learning_rate").get<double>();
  c.ste_temperature = j.at("ste_temperature").get<double>();
  c.sinkhorn_epsilon = j.at("sinkhorn_epsilon").get<double>();
  c.sinkhorn_iterations = j.at("sinkhorn_iterations").get<int>();
  c.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("hidden_dims")) c.hidden_dims = j.at("hidden_dims").get<std::vector<int>>();
  if (j.contains("embed_dim")) c.embed_dim = j.at("embed_dim").get<int>();
  return c;
}

}  // namespace

std::string colt_model_to_json(const ColtModel& model) {
  model.validate();
  json j;
  j["variant"] = variant_name(model.variant);
  j["localization"] = json::parse(net_to_json(model.localization));
  if (model.embedding) {
    j["embedding"] = json::parse(net_to_json(*model.embedding));
  }
  j["train_config"] = train_config_to_json(model.config);
  return j.dump();
}

ColtModel colt_model_from_json(const std::string& text) {
  json j = json::parse(text);
  ColtModel model;
  model.variant = variant_from_name(j.at("variant").get<std::string>());
  model.localization = net_from_json(j.at("localization").dump());
  if (j.contains("embedding")) {
    model.embedding = net_from_json(j.at("embedding").dump());
  }
  model.config = train_config_from_json(j.at("train_config"));
  model.validate();
  return model;
}

}  // namespace colt
