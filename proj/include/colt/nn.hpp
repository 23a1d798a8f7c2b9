#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace colt {

enum class Activation { relu, sine, identity };

std::string activation_name(Activation a);
Activation activation_from_name(const std::string& name);

/// Dense feed-forward network. Weights live in one flat vector, laid out
/// layer by layer as the row-major (out x in) weight matrix followed by the
/// bias. Hidden layers apply `activation`; the output layer is affine.
struct NetworkParams {
  std::vector<int> layer_dims;
  Activation activation = Activation::relu;
  Eigen::VectorXd weights;

  int input_dim() const { return layer_dims.front(); }
  int output_dim() const { return layer_dims.back(); }
  int layer_count() const { return static_cast<int>(layer_dims.size()) - 1; }

  /// Offset of layer l's weight matrix in the flat vector.
  std::size_t layer_offset(int layer) const;

  void validate() const;
};

std::size_t net_param_count(const std::vector<int>& layer_dims);

/// He-uniform initialization, biases zero. Deterministic in `seed`.
NetworkParams net_init(const std::vector<int>& layer_dims, Activation activation,
                       std::uint64_t seed);

Eigen::VectorXd net_forward(const NetworkParams& net, const Eigen::VectorXd& input);

/// Batched forward over the rows of `inputs`; chunked so the working set
/// stays cache-resident.
Eigen::MatrixXd net_forward_batch(const NetworkParams& net, const Eigen::MatrixXd& inputs);

std::string net_to_json(const NetworkParams& net);
NetworkParams net_from_json(const std::string& text);

/// Worker count for batched network math (COLT_THREADS overrides; default 2).
int tape_thread_count();

namespace detail {
/// Runs fn(lo, hi) over contiguous row chunks, split across tape threads.
/// Chunk boundaries are independent of the worker count.
void parallel_row_chunks(int rows, int chunk_rows,
                         const std::function<void(int, int)>& fn);
}  // namespace detail

}  // namespace colt
