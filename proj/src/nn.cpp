#include "colt/nn.hpp"

#include <cmath>
#include <cstdlib>
#include <functional>
#include <thread>

#include <nlohmann/json.hpp>

#include "colt/errors.hpp"
#include "colt/rng.hpp"

namespace colt {

using json = nlohmann::json;

std::string activation_name(Activation a) {
  switch (a) {
    case Activation::relu: return "relu";
    case Activation::sine: return "sine";
    case Activation::identity: return "identity";
  }
  return "relu";
}

Activation activation_from_name(const std::string& name) {
  if (name == "relu") return Activation::relu;
  if (name == "sine") return Activation::sine;
  if (name == "identity") return Activation::identity;
  throw ConfigError("unknown activation: " + name);
}

std::size_t net_param_count(const std::vector<int>& dims) {
  std::size_t count = 0;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    count += static_cast<std::size_t>(dims[l]) * dims[l + 1] + dims[l + 1];
  }
  return count;
}

std::size_t NetworkParams::layer_offset(int layer) const {
  std::size_t off = 0;
  for (int l = 0; l < layer; ++l) {
    off += static_cast<std::size_t>(layer_dims[l]) * layer_dims[l + 1] + layer_dims[l + 1];
  }
  return off;
}

void NetworkParams::validate() const {
  if (layer_dims.size() < 2) throw ConfigError("network needs at least two layer dims");
  for (int d : layer_dims) {
    if (d <= 0) throw ConfigError("layer dims must be positive");
  }
  if (static_cast<std::size_t>(weights.size()) != net_param_count(layer_dims)) {
    throw ShapeError("weight vector length does not match layer dims");
  }
  if (!weights.allFinite()) throw ContractError("network weights must be finite");
}

NetworkParams net_init(const std::vector<int>& dims, Activation activation,
                       std::uint64_t seed) {
  if (dims.size() < 2) throw ConfigError("net_init: need at least input and output dims");
  for (int d : dims) {
    if (d <= 0) throw ConfigError("net_init: layer dims must be positive");
  }
  NetworkParams net;
  net.layer_dims = dims;
  net.activation = activation;
  net.weights = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(net_param_count(dims)));
  Rng rng(seed);
  std::size_t off = 0;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    const std::size_t n_w = static_cast<std::size_t>(dims[l]) * dims[l + 1];
    const double bound = std::sqrt(6.0 / dims[l]);
    for (std::size_t i = 0; i < n_w; ++i) {
      net.weights[static_cast<Eigen::Index>(off + i)] = rng.uniform(-bound, bound);
    }
    off += n_w + dims[l + 1];  // biases stay zero
  }
  return net;
}

namespace {

using ConstWeightMap =
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using ConstBiasMap = Eigen::Map<const Eigen::VectorXd>;

ConstWeightMap layer_weight(const NetworkParams& net, int layer, std::size_t off) {
  return ConstWeightMap(net.weights.data() + off, net.layer_dims[layer + 1],
                        net.layer_dims[layer]);
}

ConstBiasMap layer_bias(const NetworkParams& net, int layer, std::size_t off) {
  const std::size_t n_w =
      static_cast<std::size_t>(net.layer_dims[layer]) * net.layer_dims[layer + 1];
  return ConstBiasMap(net.weights.data() + off + n_w, net.layer_dims[layer + 1]);
}

void apply_activation(Eigen::Ref<Eigen::MatrixXd> m, Activation act) {
  switch (act) {
    case Activation::relu:
      m = m.cwiseMax(0.0);
      break;
    case Activation::sine:
      m = m.array().sin().matrix();
      break;
    case Activation::identity:
      break;
  }
}

}  // namespace

Eigen::VectorXd net_forward(const NetworkParams& net, const Eigen::VectorXd& input) {
  net.validate();
  if (input.size() != net.input_dim()) {
    throw ShapeError("net_forward: input length " + std::to_string(input.size()) +
                     " != input dim " + std::to_string(net.input_dim()));
  }
  Eigen::VectorXd h = input;
  std::size_t off = 0;
  for (int l = 0; l < net.layer_count(); ++l) {
    Eigen::VectorXd z = layer_weight(net, l, off) * h + layer_bias(net, l, off);
    if (l + 1 < net.layer_count()) {
      apply_activation(z, net.activation);
    }
    h = std::move(z);
    off += static_cast<std::size_t>(net.layer_dims[l]) * net.layer_dims[l + 1] +
           net.layer_dims[l + 1];
  }
  return h;
}

int tape_thread_count() {
  static const int n = [] {
    if (const char* env = std::getenv("COLT_THREADS")) {
      const int v = std::atoi(env);
      if (v >= 1 && v <= 64) return v;
    }
    return 2;
  }();
  return n;
}

namespace detail {

void parallel_row_chunks(int rows, int chunk_rows,
                         const std::function<void(int, int)>& fn) {
  const int n_chunks = (rows + chunk_rows - 1) / chunk_rows;
  const int n_threads = std::min(tape_thread_count(), std::max(1, n_chunks));
  if (n_threads <= 1 || n_chunks <= 1) {
    for (int c = 0; c < n_chunks; ++c) {
      fn(c * chunk_rows, std::min(rows, (c + 1) * chunk_rows));
    }
    return;
  }
  auto run_range = [&](int c0, int c1) {
    for (int c = c0; c < c1; ++c) {
      fn(c * chunk_rows, std::min(rows, (c + 1) * chunk_rows));
    }
  };
  std::vector<std::thread> workers;
  workers.reserve(n_threads - 1);
  int done = 0;
  for (int t = 0; t < n_threads; ++t) {
    const int take = (n_chunks - done) / (n_threads - t);
    if (t + 1 == n_threads) {
      run_range(done, n_chunks);
    } else {
      workers.emplace_back(run_range, done, done + take);
    }
    done += take;
  }
  for (auto& w : workers) w.join();
}

}  // namespace detail

Eigen::MatrixXd net_forward_batch(const NetworkParams& net, const Eigen::MatrixXd& inputs) {
  net.validate();
  if (inputs.cols() != net.input_dim()) {
    throw ShapeError("net_forward_batch: input dim mismatch");
  }
  const int rows = static_cast<int>(inputs.rows());
  Eigen::MatrixXd out(rows, net.output_dim());
  constexpr int kChunk = 2048;
  detail::parallel_row_chunks(rows, kChunk, [&](int lo, int hi) {
    Eigen::MatrixXd h = inputs.middleRows(lo, hi - lo);
    std::size_t off = 0;
    for (int l = 0; l < net.layer_count(); ++l) {
      Eigen::MatrixXd z = h * layer_weight(net, l, off).transpose();
      z.rowwise() += layer_bias(net, l, off).transpose();
      if (l + 1 < net.layer_count()) {
        apply_activation(z, net.activation);
      }
      h = std::move(z);
      off += static_cast<std::size_t>(net.layer_dims[l]) * net.layer_dims[l + 1] +
             net.layer_dims[l + 1];
    }
    out.middleRows(lo, hi - lo) = h;
  });
  return out;
}

std::string net_to_json(const NetworkParams& net) {
  net.validate();
  json j;
  j["layer_dims"] = net.layer_dims;
  j["activation"] = activation_name(net.activation);
  j["weights"] = std::vector<double>(net.weights.data(), net.weights.data() + net.weights.size());
  return j.dump();
}

NetworkParams net_from_json(const std::string& text) {
  json j = json::parse(text);
  NetworkParams net;
  net.layer_dims = j.at("layer_dims").get<std::vector<int>>();
  net.activation = activation_from_name(j.at("activation").get<std::string>());
  const auto w = j.at("weights").get<std::vector<double>>();
  net.weights = Eigen::Map<const Eigen::VectorXd>(w.data(), static_cast<Eigen::Index>(w.size()));
  net.validate();
  return net;
}

}  // namespace colt
