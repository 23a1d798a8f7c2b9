#include "colt/baselines.hpp"

#include <algorithm>
#include <numeric>

#include "colt/adam.hpp"
#include "colt/errors.hpp"
#include "colt/rng.hpp"
#include "colt/tape.hpp"

namespace colt {

void C2stConfig::validate() const {
  if (epochs < 1) throw ConfigError("c2st requires at least one epoch");
  if (learning_rate <= 0.0) throw ConfigError("c2st learning rate must be positive");
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw ConfigError("c2st train fraction must be in (0,1)");
  }
  for (int h : hidden_dims) {
    if (h <= 0) throw ConfigError("c2st hidden dims must be positive");
  }
}

TestReport sbc_test(const SampleBatch& batch) {
  batch.validate();
  const int n = batch.n();
  const int k = batch.k();
  const int d = batch.theta_dim();
  if (k < 2) throw ContractError("sbc_test: needs at least two draws per anchor");
  double max_stat = 0.0;
  double min_p = 1.0;
  Eigen::VectorXd ranks(n);
  for (int dim = 0; dim < d; ++dim) {
    for (int i = 0; i < n; ++i) {
      const auto col = batch.synth.col(dim).segment(static_cast<Eigen::Index>(i) * k, k);
      ranks[i] = (col.array() < batch.thetas(i, dim)).cast<double>().sum() / k;
    }
    const double stat = ks_statistic(RankVector{ranks});
    max_stat = std::max(max_stat, stat);
    min_p = std::min(min_p, ks_pvalue(stat, n));
  }
  const double p = std::min(1.0, min_p * d);
  return make_report(Method::sbc, max_stat, p);
}

TestReport tarp_test(const SampleBatch& batch, std::uint64_t seed) {
  batch.validate();
  const int n = batch.n();
  const int k = batch.k();
  const int d = batch.theta_dim();
  // reference points: per-coordinate permutation of the anchors, which
  // keeps every marginal on the data's scale
  Eigen::MatrixXd refs(n, d);
  Rng rng(mix_seed(seed, 0x7a52u));
  std::vector<int> idx(n);
  for (int dim = 0; dim < d; ++dim) {
    std::iota(idx.begin(), idx.end(), 0);
    rng.shuffle(idx);
    for (int i = 0; i < n; ++i) refs(i, dim) = batch.thetas(idx[i], dim);
  }
  Eigen::VectorXd ranks(n);
  detail::parallel_row_chunks(n, 64, [&](int lo, int hi) {
    for (int i = lo; i < hi; ++i) {
      const double anchor_dist = (batch.thetas.row(i) - refs.row(i)).norm();
      const auto draws = batch.synth.middleRows(static_cast<Eigen::Index>(i) * k, k);
      const double closer =
          ((draws.rowwise() - refs.row(i)).rowwise().norm().array() < anchor_dist)
              .cast<double>()
              .sum();
      ranks[i] = closer / static_cast<double>(k);
    }
  });
  const double stat = ks_statistic(RankVector{ranks});
  return make_report(Method::tarp, stat, ks_pvalue(stat, n));
}

namespace {

/// Stacks (x_i, theta_i) label-1 rows over (x_i, synth_i0) label-0 rows for
/// the given anchor subset.
void build_examples(const SampleBatch& batch, const std::vector<int>& anchors,
                    Eigen::MatrixXd& features, Eigen::VectorXd& labels) {
  const int m = batch.x_dim();
  const int d = batch.theta_dim();
  const int k = batch.k();
  const int rows = 2 * static_cast<int>(anchors.size());
  features.resize(rows, m + d);
  labels.resize(rows);
  for (std::size_t a = 0; a < anchors.size(); ++a) {
    const int i = anchors[a];
    const Eigen::Index r1 = static_cast<Eigen::Index>(2 * a);
    features.row(r1) << batch.xs.row(i), batch.thetas.row(i);
    labels[r1] = 1.0;
    features.row(r1 + 1) << batch.xs.row(i),
        batch.synth.row(static_cast<Eigen::Index>(i) * k);
    labels[r1 + 1] = 0.0;
  }
}

NetworkParams train_classifier(const Eigen::MatrixXd& features, const Eigen::VectorXd& labels,
                               const C2stConfig& config) {
  std::vector<int> dims;
  dims.push_back(static_cast<int>(features.cols()));
  dims.insert(dims.end(), config.hidden_dims.begin(), config.hidden_dims.end());
  dims.push_back(1);
  NetworkParams net = net_init(dims, Activation::relu, mix_seed(config.seed, 5));
  GradientTape tape;
  ParamSlot slot = tape.track(net);
  TapeTensor x = tape.constant(features);
  TapeTensor logits = tape.apply_net(slot, x);
  TapeTensor loss = tape.logistic_loss(logits, labels);
  AdamState adam(net.weights.size(), config.learning_rate);
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    if (epoch > 0) tape.forward();
    if (!std::isfinite(tape.scalar_value(loss))) {
      throw TrainingDivergedError("c2st training diverged at epoch " + std::to_string(epoch));
    }
    tape.backward(loss);
    adam_step(adam, net, tape.grad(slot));
  }
  return net;
}

double classifier_accuracy(const NetworkParams& net, const Eigen::MatrixXd& features,
                           const Eigen::VectorXd& labels) {
  const Eigen::MatrixXd logits = net_forward_batch(net, features);
  double correct = 0.0;
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const double pred = logits(r, 0) > 0.0 ? 1.0 : 0.0;
    if (pred == labels[r]) correct += 1.0;
  }
  return correct / static_cast<double>(logits.rows());
}

void standardize_from(const Eigen::MatrixXd& train, Eigen::VectorXd& mean,
                      Eigen::VectorXd& scale) {
  mean = train.colwise().mean();
  Eigen::VectorXd var =
      (train.rowwise() - mean.transpose()).array().square().colwise().mean();
  scale = var.array().sqrt().max(1e-12).inverse();
}

Eigen::MatrixXd apply_standardize(const Eigen::MatrixXd& x, const Eigen::VectorXd& mean,
                                  const Eigen::VectorXd& scale) {
  return (x.rowwise() - mean.transpose()).array().rowwise() * scale.transpose().array();
}

}  // namespace

TestReport c2st_test(const SampleBatch& batch, const C2stConfig& config) {
  batch.validate();
  config.validate();
  const int n = batch.n();
  if (n < 4) throw ConfigError("c2st_test: need at least 4 anchors");

  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(mix_seed(config.seed, 0xc257u));
  rng.shuffle(order);
  int n_train = static_cast<int>(config.train_fraction * n);
  n_train = std::clamp(n_train, 1, n - 1);
  const std::vector<int> train_anchors(order.begin(), order.begin() + n_train);
  const std::vector<int> test_anchors(order.begin() + n_train, order.end());

  Eigen::MatrixXd train_x, test_x;
  Eigen::VectorXd train_y, test_y;
  build_examples(batch, train_anchors, train_x, train_y);
  build_examples(batch, test_anchors, test_x, test_y);

  Eigen::VectorXd mean, scale;
  standardize_from(train_x, mean, scale);
  const NetworkParams net =
      train_classifier(apply_standardize(train_x, mean, scale), train_y, config);
  const double acc = classifier_accuracy(net, apply_standardize(test_x, mean, scale), test_y);
  return make_report(Method::c2st, acc, c2st_pvalue(acc, static_cast<int>(test_y.size())));
}

C2stModel c2st_train(const SampleBatch& batch, const C2stConfig& config) {
  batch.validate();
  config.validate();
  std::vector<int> all(batch.n());
  std::iota(all.begin(), all.end(), 0);
  Eigen::MatrixXd features;
  Eigen::VectorXd labels;
  build_examples(batch, all, features, labels);
  C2stModel model;
  model.config = config;
  standardize_from(features, model.feature_mean, model.feature_scale);
  model.classifier = train_classifier(
      apply_standardize(features, model.feature_mean, model.feature_scale), labels, config);
  return model;
}

TestReport c2st_evaluate(const C2stModel& model, const SampleBatch& batch) {
  batch.validate();
  if (model.classifier.input_dim() != batch.x_dim() + batch.theta_dim()) {
    throw ShapeError("c2st_evaluate: feature dim mismatch");
  }
  std::vector<int> all(batch.n());
  std::iota(all.begin(), all.end(), 0);
  Eigen::MatrixXd features;
  Eigen::VectorXd labels;
  build_examples(batch, all, features, labels);
  const double acc = classifier_accuracy(
      model.classifier, apply_standardize(features, model.feature_mean, model.feature_scale),
      labels);
  return make_report(Method::c2st, acc, c2st_pvalue(acc, static_cast<int>(labels.size())));
}

}  // namespace colt
