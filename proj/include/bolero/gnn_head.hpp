#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "bolero/dataset.hpp"
#include "bolero/embed.hpp"
#include "bolero/graph.hpp"

namespace bolero {

enum class Precision { F32, F64 };

std::string_view to_string(Precision precision);
Precision parse_precision(std::string_view text);

struct GraphHeadConfig {
  std::size_t hidden_dim = 64;
  std::size_t num_layers = 2;
  std::size_t num_heads = 2;
  double dropout = 0.1;
  Task task = Task::Classification;
  std::size_t num_classes = 2;
  Precision precision = Precision::F32;

  // Throws InvalidArgument on hidden_dim % num_heads != 0, zero layers,
  // dropout outside [0, 1) or fewer than two classes.
  void validate() const;
  std::size_t head_dim() const { return hidden_dim / num_heads; }
  std::size_t output_dim() const { return task == Task::Classification ? num_classes : 1; }
  std::uint64_t hash() const;

  bool operator==(const GraphHeadConfig&) const = default;
};

// Dense row-major matrix. Vectors are 1 x n.
template <typename T>
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<T> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, T{0}) {}

  T& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  const T& operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  T* row(std::size_t r) { return data.data() + r * cols; }
  const T* row(std::size_t r) const { return data.data() + r * cols; }
  std::size_t size() const { return data.size(); }

  bool operator==(const Matrix&) const = default;
};

// One attention layer. Weights are (out x in); y = W x + b.
template <typename T>
struct LayerParams {
  Matrix<T> w_query, b_query;
  Matrix<T> w_key, b_key;
  Matrix<T> w_value, b_value;
  Matrix<T> w_root, b_root;
  Matrix<T> edge_key;    // 1 x hidden: scalar edge weight embedded into key space
  Matrix<T> edge_value;  // 1 x hidden: same for value space

  bool operator==(const LayerParams&) const = default;
};

template <typename T>
struct GraphHeadParams {
  Matrix<T> w_in, b_in;  // instance projection d -> hidden
  Matrix<T> anchors;     // |A| x hidden
  std::vector<LayerParams<T>> layers;
  Matrix<T> w_out, b_out;  // hidden -> output_dim

  // Stable (name, tensor) listing; the order is the checkpoint order.
  std::vector<std::pair<std::string, Matrix<T>*>> named_tensors();
  std::vector<std::pair<std::string, const Matrix<T>*>> named_tensors() const;

  std::size_t parameter_count() const;
  std::uint64_t fingerprint() const;
  GraphHeadParams zeros_like() const;
  bool all_finite() const;

  bool operator==(const GraphHeadParams&) const = default;
};

template <typename T>
struct GradientSet {
  GraphHeadParams<T> params;
  // Gradient with respect to the frozen row embeddings. Reported, never applied.
  Matrix<T> embeddings;
};

// Directed message-passing view of a BipartiteGraph: every ia and aa edge in
// both directions, grouped by destination and sorted by (source, weight) so
// aggregation order does not depend on the input edge order. Instances are
// nodes [0, n), anchor a is node n + a.
struct EdgeIndex {
  std::size_t num_instances = 0;
  std::size_t num_anchors = 0;
  std::vector<std::size_t> offsets;  // size num_nodes + 1
  std::vector<std::uint32_t> source;
  std::vector<double> weight;

  static EdgeIndex from_graph(const BipartiteGraph& graph);
  std::size_t num_nodes() const { return num_instances + num_anchors; }
  std::size_t num_edges() const { return source.size(); }
  std::uint64_t fingerprint() const;
};

// Everything backward needs, plus the node states at each layer boundary.
template <typename T>
struct NodeStates {
  std::vector<Matrix<T>> inputs;      // layer inputs X_0 .. X_{L-1}, each (|I|+|A|) x hidden
  std::vector<Matrix<T>> queries, keys, values;
  std::vector<Matrix<T>> attention;   // per layer, E x heads, softmax output before dropout
  std::vector<Matrix<T>> dropped;     // per layer, E x heads, after dropout (== attention in eval mode)
  std::vector<Matrix<T>> pre_activation;  // per layer output before ReLU
  Matrix<T> final_states;             // X_L
  std::uint64_t param_fingerprint = 0;
  std::uint64_t edge_fingerprint = 0;
  std::uint64_t embedding_checksum = 0;
  bool train_mode = false;
};

template <typename T>
struct ForwardResult {
  Matrix<T> predictions;  // |I| x output_dim: logits or a single regression output
  NodeStates<T> cache;
};

// Fan-in scaled uniform init: every weight and bias of a layer with fan-in f
// is drawn from U(-1/sqrt(f), 1/sqrt(f)); anchor rows use f = hidden_dim and
// edge embeddings f = 1. Values come from a counter-based SplitMix64 stream
// keyed by (seed, tensor position), so they are platform independent.
template <typename T>
GraphHeadParams<T> init_params(const GraphHeadConfig& config, const BipartiteGraph& graph, std::size_t embedding_dim,
                               std::uint64_t seed);

template <typename T>
ForwardResult<T> forward(const GraphHeadParams<T>& params, const EdgeIndex& edges, const EmbeddingMatrix& embeddings,
                         const GraphHeadConfig& config, bool train_mode, std::uint64_t seed);

template <typename T>
ForwardResult<T> forward(const GraphHeadParams<T>& params, const BipartiteGraph& graph,
                         const EmbeddingMatrix& embeddings, const GraphHeadConfig& config, bool train_mode,
                         std::uint64_t seed) {
  return forward(params, EdgeIndex::from_graph(graph), embeddings, config, train_mode, seed);
}

// loss_grad is dLoss/dPredictions (|I| x output_dim). Throws StaleCache if the
// cache came from different parameters, edges or embeddings.
template <typename T>
GradientSet<T> backward(const GraphHeadParams<T>& params, const EdgeIndex& edges, const EmbeddingMatrix& embeddings,
                        const GraphHeadConfig& config, const NodeStates<T>& cache, const Matrix<T>& loss_grad);

template <typename T>
GradientSet<T> backward(const GraphHeadParams<T>& params, const BipartiteGraph& graph,
                        const EmbeddingMatrix& embeddings, const GraphHeadConfig& config, const NodeStates<T>& cache,
                        const Matrix<T>& loss_grad) {
  return backward(params, EdgeIndex::from_graph(graph), embeddings, config, cache, loss_grad);
}

template <typename To, typename From>
GraphHeadParams<To> convert_params(const GraphHeadParams<From>& params);

// Checkpoint: ASCII header (format line, config hash, config fields, tensor
// names and shapes, "end") followed by every tensor as little-endian float32
// in named_tensors() order. Float32 parameters round-trip bit-exactly.
template <typename T>
void save_checkpoint(const std::filesystem::path& path, const GraphHeadParams<T>& params,
                     const GraphHeadConfig& config, std::string_view config_hash);
std::vector<std::byte> encode_checkpoint(const GraphHeadParams<float>& params, const GraphHeadConfig& config,
                                         std::string_view config_hash);

struct Checkpoint {
  GraphHeadConfig config;
  std::string config_hash;
  GraphHeadParams<float> params;
};
Checkpoint decode_checkpoint(std::span<const std::byte> bytes);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace bolero
