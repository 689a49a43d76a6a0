#include "bolero/gnn_head.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <numeric>

#include <fmt/format.h>

#include "bolero/error.hpp"
#include "bolero/hashing.hpp"

namespace bolero {

std::string_view to_string(Precision precision) { return precision == Precision::F32 ? "f32" : "f64"; }

Precision parse_precision(std::string_view text) {
  if (text == "f32") return Precision::F32;
  if (text == "f64") return Precision::F64;
  throw Error(ErrorCode::ConfigError, fmt::format("unknown precision '{}'", text));
}

void GraphHeadConfig::validate() const {
  if (num_layers < 1) throw Error(ErrorCode::InvalidArgument, "num_layers must be at least 1");
  if (num_heads < 1 || hidden_dim < 1 || hidden_dim % num_heads != 0)
    throw Error(ErrorCode::InvalidArgument,
                fmt::format("hidden_dim {} is not divisible by num_heads {}", hidden_dim, num_heads));
  if (!(dropout >= 0.0 && dropout < 1.0))
    throw Error(ErrorCode::InvalidArgument, fmt::format("dropout {} outside [0, 1)", dropout));
  if (task == Task::Classification && num_classes < 2)
    throw Error(ErrorCode::InvalidArgument, fmt::format("classification needs >= 2 classes, got {}", num_classes));
}

std::uint64_t GraphHeadConfig::hash() const {
  std::uint64_t h = 0x6E6E68656164ULL;
  for (std::uint64_t v : {static_cast<std::uint64_t>(hidden_dim), static_cast<std::uint64_t>(num_layers),
                          static_cast<std::uint64_t>(num_heads), std::bit_cast<std::uint64_t>(dropout),
                          static_cast<std::uint64_t>(task), static_cast<std::uint64_t>(num_classes),
                          static_cast<std::uint64_t>(precision)})
    h = hash_combine(h, v);
  return h;
}

// ---------------------------------------------------------------------------
// Parameters

template <typename T>
std::vector<std::pair<std::string, Matrix<T>*>> GraphHeadParams<T>::named_tensors() {
  std::vector<std::pair<std::string, Matrix<T>*>> out{{"w_in", &w_in}, {"b_in", &b_in}, {"anchors", &anchors}};
  for (std::size_t l = 0; l < layers.size(); ++l) {
    auto& L = layers[l];
    const std::string p = fmt::format("layer{}.", l);
    out.insert(out.end(), {{p + "w_query", &L.w_query},
                           {p + "b_query", &L.b_query},
                           {p + "w_key", &L.w_key},
                           {p + "b_key", &L.b_key},
                           {p + "w_value", &L.w_value},
                           {p + "b_value", &L.b_value},
                           {p + "w_root", &L.w_root},
                           {p + "b_root", &L.b_root},
                           {p + "edge_key", &L.edge_key},
                           {p + "edge_value", &L.edge_value}});
  }
  out.push_back({"w_out", &w_out});
  out.push_back({"b_out", &b_out});
  return out;
}

template <typename T>
std::vector<std::pair<std::string, const Matrix<T>*>> GraphHeadParams<T>::named_tensors() const {
  auto mutable_list = const_cast<GraphHeadParams*>(this)->named_tensors();
  std::vector<std::pair<std::string, const Matrix<T>*>> out;
  out.reserve(mutable_list.size());
  for (auto& [name, m] : mutable_list) out.emplace_back(std::move(name), m);
  return out;
}

template <typename T>
std::size_t GraphHeadParams<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [name, m] : named_tensors()) n += m->size();
  return n;
}

template <typename T>
std::uint64_t GraphHeadParams<T>::fingerprint() const {
  std::uint64_t h = kFnvOffset;
  for (const auto& [name, m] : named_tensors()) {
    h = hash_combine(h, (static_cast<std::uint64_t>(m->rows) << 32) | m->cols);
    h = fnv1a(std::as_bytes(std::span(m->data)), h);
  }
  return h;
}

template <typename T>
GraphHeadParams<T> GraphHeadParams<T>::zeros_like() const {
  GraphHeadParams out = *this;
  for (auto& [name, m] : out.named_tensors()) std::fill(m->data.begin(), m->data.end(), T{0});
  return out;
}

template <typename T>
bool GraphHeadParams<T>::all_finite() const {
  for (const auto& [name, m] : named_tensors())
    for (T v : m->data)
      if (!std::isfinite(v)) return false;
  return true;
}

template struct GraphHeadParams<float>;
template struct GraphHeadParams<double>;

template <typename T>
GraphHeadParams<T> init_params(const GraphHeadConfig& config, const BipartiteGraph& graph, std::size_t embedding_dim,
                               std::uint64_t seed) {
  config.validate();
  const std::size_t h = config.hidden_dim;
  GraphHeadParams<T> p;
  p.w_in = Matrix<T>(h, embedding_dim);
  p.b_in = Matrix<T>(1, h);
  p.anchors = Matrix<T>(graph.num_anchors(), h);
  p.layers.resize(config.num_layers);
  for (auto& L : p.layers) {
    for (Matrix<T>* w : {&L.w_query, &L.w_key, &L.w_value, &L.w_root}) *w = Matrix<T>(h, h);
    for (Matrix<T>* b : {&L.b_query, &L.b_key, &L.b_value, &L.b_root}) *b = Matrix<T>(1, h);
    L.edge_key = Matrix<T>(1, h);
    L.edge_value = Matrix<T>(1, h);
  }
  p.w_out = Matrix<T>(config.output_dim(), h);
  p.b_out = Matrix<T>(1, config.output_dim());

  std::uint64_t tensor_id = 0;
  for (auto& [name, m] : p.named_tensors()) {
    std::size_t fan_in = h;
    if (name == "w_in" || name == "b_in")
      fan_in = embedding_dim;
    else if (name.ends_with("edge_key") || name.ends_with("edge_value"))
      fan_in = 1;
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    const std::uint64_t key = hash_combine(splitmix64(seed), tensor_id++);
    for (std::size_t i = 0; i < m->size(); ++i)
      m->data[i] = static_cast<T>((2.0 * unit_double(splitmix64(key + i)) - 1.0) * bound);
  }
  return p;
}

template GraphHeadParams<float> init_params<float>(const GraphHeadConfig&, const BipartiteGraph&, std::size_t,
                                                   std::uint64_t);
template GraphHeadParams<double> init_params<double>(const GraphHeadConfig&, const BipartiteGraph&, std::size_t,
                                                     std::uint64_t);

template <typename To, typename From>
GraphHeadParams<To> convert_params(const GraphHeadParams<From>& params) {
  GraphHeadParams<To> out;
  out.layers.resize(params.layers.size());
  auto src = params.named_tensors();
  auto dst = out.named_tensors();
  for (std::size_t t = 0; t < src.size(); ++t) {
    *dst[t].second = Matrix<To>(src[t].second->rows, src[t].second->cols);
    std::transform(src[t].second->data.begin(), src[t].second->data.end(), dst[t].second->data.begin(),
                   [](From v) { return static_cast<To>(v); });
  }
  return out;
}

template GraphHeadParams<float> convert_params<float, double>(const GraphHeadParams<double>&);
template GraphHeadParams<double> convert_params<double, float>(const GraphHeadParams<float>&);
template GraphHeadParams<float> convert_params<float, float>(const GraphHeadParams<float>&);
template GraphHeadParams<double> convert_params<double, double>(const GraphHeadParams<double>&);

// ---------------------------------------------------------------------------
// Edge index

EdgeIndex EdgeIndex::from_graph(const BipartiteGraph& graph) {
  graph.validate();
  EdgeIndex idx;
  idx.num_instances = graph.num_instances;
  idx.num_anchors = graph.num_anchors();
  const std::size_t n = graph.num_instances;

  struct Directed {
    std::uint32_t dst, src;
    double w;
  };
  std::vector<Directed> edges;
  edges.reserve(2 * (graph.ia_edges.size() + graph.aa_edges.size()));
  for (const auto& e : graph.ia_edges) {
    const auto anchor = static_cast<std::uint32_t>(n + e.anchor);
    edges.push_back({e.instance, anchor, e.weight});
    edges.push_back({anchor, e.instance, e.weight});
  }
  for (const auto& e : graph.aa_edges) {
    const auto a = static_cast<std::uint32_t>(n + e.a);
    const auto b = static_cast<std::uint32_t>(n + e.b);
    edges.push_back({a, b, e.weight});
    edges.push_back({b, a, e.weight});
  }
  std::sort(edges.begin(), edges.end(), [](const Directed& x, const Directed& y) {
    if (x.dst != y.dst) return x.dst < y.dst;
    if (x.src != y.src) return x.src < y.src;
    return x.w < y.w;
  });

  idx.offsets.assign(idx.num_nodes() + 1, 0);
  idx.source.reserve(edges.size());
  idx.weight.reserve(edges.size());
  for (const auto& e : edges) {
    ++idx.offsets[e.dst + 1];
    idx.source.push_back(e.src);
    idx.weight.push_back(e.w);
  }
  std::partial_sum(idx.offsets.begin(), idx.offsets.end(), idx.offsets.begin());
  return idx;
}

std::uint64_t EdgeIndex::fingerprint() const {
  std::uint64_t h = hash_combine(num_instances, num_anchors);
  h = fnv1a(std::as_bytes(std::span(offsets)), h);
  h = fnv1a(std::as_bytes(std::span(source)), h);
  return fnv1a(std::as_bytes(std::span(weight)), h);
}

// ---------------------------------------------------------------------------
// Dense kernels

namespace {

// Y = X W^T + b, X: N x in, W: out x in.
template <typename T>
Matrix<T> linear(const Matrix<T>& x, const Matrix<T>& w, const Matrix<T>& b) {
  Matrix<T> y(x.rows, w.rows);
  for (std::size_t n = 0; n < x.rows; ++n) {
    const T* xr = x.row(n);
    T* yr = y.row(n);
    for (std::size_t o = 0; o < w.rows; ++o) {
      const T* wr = w.row(o);
      T acc = b.data[o];
      for (std::size_t k = 0; k < w.cols; ++k) acc += wr[k] * xr[k];
      yr[o] = acc;
    }
  }
  return y;
}

// Accumulates dW += dY^T X, db += colsum(dY), dX += dY W.
template <typename T>
void linear_backward(const Matrix<T>& dy, const Matrix<T>& x, const Matrix<T>& w, Matrix<T>& dw, Matrix<T>& db,
                     Matrix<T>& dx) {
  for (std::size_t n = 0; n < x.rows; ++n) {
    const T* xr = x.row(n);
    const T* dyr = dy.row(n);
    T* dxr = dx.row(n);
    for (std::size_t o = 0; o < w.rows; ++o) {
      const T g = dyr[o];
      if (g == T{0}) continue;
      db.data[o] += g;
      T* dwr = dw.row(o);
      const T* wr = w.row(o);
      for (std::size_t k = 0; k < w.cols; ++k) {
        dwr[k] += g * xr[k];
        dxr[k] += g * wr[k];
      }
    }
  }
}

std::uint64_t dropout_key(std::uint64_t seed, std::size_t layer) {
  return hash_combine(hash_combine(splitmix64(seed), 0xD80F0000ULL), layer);
}

template <typename T>
void check_shapes(const GraphHeadParams<T>& params, const EdgeIndex& edges, const EmbeddingMatrix& embeddings,
                  const GraphHeadConfig& config) {
  config.validate();
  const std::size_t h = config.hidden_dim;
  if (embeddings.rows() != edges.num_instances)
    throw Error(ErrorCode::ShapeMismatch,
                fmt::format("{} embedding rows for {} instances", embeddings.rows(), edges.num_instances));
  if (params.w_in.rows != h || params.w_in.cols != embeddings.dim())
    throw Error(ErrorCode::ShapeMismatch, fmt::format("w_in is {}x{}, expected {}x{}", params.w_in.rows,
                                                      params.w_in.cols, h, embeddings.dim()));
  if (params.anchors.rows != edges.num_anchors || params.anchors.cols != h)
    throw Error(ErrorCode::ShapeMismatch,
                fmt::format("anchor table is {}x{}, graph has {} anchors", params.anchors.rows, params.anchors.cols,
                            edges.num_anchors));
  if (params.layers.size() != config.num_layers)
    throw Error(ErrorCode::ShapeMismatch,
                fmt::format("{} layers of parameters, config says {}", params.layers.size(), config.num_layers));
  for (const auto& L : params.layers)
    if (L.w_query.rows != h || L.w_query.cols != h || L.edge_key.cols != h)
      throw Error(ErrorCode::ShapeMismatch, "layer weights do not match hidden_dim");
  if (params.w_out.rows != config.output_dim() || params.w_out.cols != h)
    throw Error(ErrorCode::ShapeMismatch, "output layer does not match the task");
}

}  // namespace

// ---------------------------------------------------------------------------
// Forward

template <typename T>
ForwardResult<T> forward(const GraphHeadParams<T>& params, const EdgeIndex& edges, const EmbeddingMatrix& embeddings,
                         const GraphHeadConfig& config, bool train_mode, std::uint64_t seed) {
  check_shapes(params, edges, embeddings, config);
  const std::size_t n_inst = edges.num_instances;
  const std::size_t n_nodes = edges.num_nodes();
  const std::size_t hidden = config.hidden_dim;
  const std::size_t heads = config.num_heads;
  const std::size_t hd = config.head_dim();
  const T scale = T{1} / std::sqrt(static_cast<T>(hd));
  const bool use_dropout = train_mode && config.dropout > 0.0;
  const double keep = 1.0 - config.dropout;
  const T keep_scale = static_cast<T>(1.0 / keep);

  ForwardResult<T> result;
  auto& cache = result.cache;
  cache.param_fingerprint = params.fingerprint();
  cache.edge_fingerprint = edges.fingerprint();
  cache.embedding_checksum = embeddings.checksum();
  cache.train_mode = train_mode;

  // Layer-0 node features: projected embeddings, then anchor table rows.
  Matrix<T> x(n_nodes, hidden);
  {
    Matrix<T> z(n_inst, embeddings.dim());
    std::transform(embeddings.data().begin(), embeddings.data().end(), z.data.begin(),
                   [](float v) { return static_cast<T>(v); });
    const Matrix<T> projected = linear(z, params.w_in, params.b_in);
    std::copy(projected.data.begin(), projected.data.end(), x.data.begin());
    std::copy(params.anchors.data.begin(), params.anchors.data.end(), x.data.begin() + n_inst * hidden);
  }

  std::vector<T> logits;
  for (std::size_t l = 0; l < config.num_layers; ++l) {
    const auto& L = params.layers[l];
    Matrix<T> q = linear(x, L.w_query, L.b_query);
    Matrix<T> k = linear(x, L.w_key, L.b_key);
    Matrix<T> v = linear(x, L.w_value, L.b_value);
    Matrix<T> out = linear(x, L.w_root, L.b_root);
    Matrix<T> alpha(edges.num_edges(), heads);
    Matrix<T> dropped(edges.num_edges(), heads);
    const std::uint64_t dkey = dropout_key(seed, l);

    for (std::size_t i = 0; i < n_nodes; ++i) {
      const std::size_t begin = edges.offsets[i];
      const std::size_t end = edges.offsets[i + 1];
      if (begin == end) continue;
      logits.resize(end - begin);
      for (std::size_t h = 0; h < heads; ++h) {
        const std::size_t off = h * hd;
        const T* qi = q.row(i) + off;
        T max_logit = -std::numeric_limits<T>::infinity();
        for (std::size_t e = begin; e < end; ++e) {
          const T* kj = k.row(edges.source[e]) + off;
          const T w = static_cast<T>(edges.weight[e]);
          const T* ek = L.edge_key.data.data() + off;
          T s = 0;
          for (std::size_t c = 0; c < hd; ++c) s += qi[c] * (kj[c] + ek[c] * w);
          s *= scale;
          logits[e - begin] = s;
          max_logit = std::max(max_logit, s);
        }
        T denom = 0;
        for (std::size_t e = begin; e < end; ++e) {
          logits[e - begin] = std::exp(logits[e - begin] - max_logit);
          denom += logits[e - begin];
        }
        T* oi = out.row(i) + off;
        const T* ev = L.edge_value.data.data() + off;
        for (std::size_t e = begin; e < end; ++e) {
          const T a = logits[e - begin] / denom;
          alpha(e, h) = a;
          T ad = a;
          if (use_dropout) {
            const bool kept = unit_double(splitmix64(dkey + e * heads + h)) < keep;
            ad = kept ? a * keep_scale : T{0};
          }
          dropped(e, h) = ad;
          if (ad == T{0}) continue;
          const T* vj = v.row(edges.source[e]) + off;
          const T w = static_cast<T>(edges.weight[e]);
          for (std::size_t c = 0; c < hd; ++c) oi[c] += ad * (vj[c] + ev[c] * w);
        }
      }
    }

    cache.inputs.push_back(std::move(x));
    cache.queries.push_back(std::move(q));
    cache.keys.push_back(std::move(k));
    cache.values.push_back(std::move(v));
    cache.attention.push_back(std::move(alpha));
    cache.dropped.push_back(std::move(dropped));

    x = out;
    if (l + 1 < config.num_layers)
      for (T& val : x.data) val = std::max(val, T{0});
    cache.pre_activation.push_back(std::move(out));
  }

  Matrix<T> inst(n_inst, hidden);
  std::copy(x.data.begin(), x.data.begin() + n_inst * hidden, inst.data.begin());
  result.predictions = linear(inst, params.w_out, params.b_out);
  cache.final_states = std::move(x);

  for (T val : result.predictions.data)
    if (!std::isfinite(val)) throw Error(ErrorCode::NonFiniteActivation, "graph head produced a non-finite output");
  return result;
}

template ForwardResult<float> forward<float>(const GraphHeadParams<float>&, const EdgeIndex&, const EmbeddingMatrix&,
                                             const GraphHeadConfig&, bool, std::uint64_t);
template ForwardResult<double> forward<double>(const GraphHeadParams<double>&, const EdgeIndex&,
                                               const EmbeddingMatrix&, const GraphHeadConfig&, bool, std::uint64_t);

// ---------------------------------------------------------------------------
// Backward

template <typename T>
GradientSet<T> backward(const GraphHeadParams<T>& params, const EdgeIndex& edges, const EmbeddingMatrix& embeddings,
                        const GraphHeadConfig& config, const NodeStates<T>& cache, const Matrix<T>& loss_grad) {
  check_shapes(params, edges, embeddings, config);
  if (cache.param_fingerprint != params.fingerprint() || cache.edge_fingerprint != edges.fingerprint() ||
      cache.embedding_checksum != embeddings.checksum() || cache.inputs.size() != config.num_layers)
    throw Error(ErrorCode::StaleCache, "forward cache does not belong to these parameters/inputs");
  const std::size_t n_inst = edges.num_instances;
  const std::size_t n_nodes = edges.num_nodes();
  const std::size_t hidden = config.hidden_dim;
  const std::size_t heads = config.num_heads;
  const std::size_t hd = config.head_dim();
  const T scale = T{1} / std::sqrt(static_cast<T>(hd));
  // dropped = alpha * mask / keep
  const T mask_scale = cache.train_mode && config.dropout > 0.0 ? static_cast<T>(1.0 / (1.0 - config.dropout)) : T{1};
  if (loss_grad.rows != n_inst || loss_grad.cols != config.output_dim())
    throw Error(ErrorCode::ShapeMismatch, fmt::format("loss gradient is {}x{}, expected {}x{}", loss_grad.rows,
                                                      loss_grad.cols, n_inst, config.output_dim()));

  GradientSet<T> grads;
  grads.params = params.zeros_like();
  auto& g = grads.params;

  // Output layer.
  Matrix<T> dx(n_nodes, hidden);
  {
    Matrix<T> inst(n_inst, hidden);
    std::copy(cache.final_states.data.begin(), cache.final_states.data.begin() + n_inst * hidden, inst.data.begin());
    Matrix<T> dinst(n_inst, hidden);
    linear_backward(loss_grad, inst, params.w_out, g.w_out, g.b_out, dinst);
    std::copy(dinst.data.begin(), dinst.data.end(), dx.data.begin());
  }

  std::vector<T> dalpha;
  for (std::size_t l = config.num_layers; l-- > 0;) {
    const auto& L = params.layers[l];
    auto& G = g.layers[l];
    const auto& x = cache.inputs[l];
    const auto& q = cache.queries[l];
    const auto& k = cache.keys[l];
    const auto& v = cache.values[l];
    const auto& alpha = cache.attention[l];
    const auto& dropped = cache.dropped[l];

    Matrix<T> dout = std::move(dx);
    if (l + 1 < config.num_layers) {
      const auto& pre = cache.pre_activation[l];
      for (std::size_t i = 0; i < dout.size(); ++i)
        if (!(pre.data[i] > T{0})) dout.data[i] = T{0};
    }

    Matrix<T> dq(n_nodes, hidden), dk(n_nodes, hidden), dv(n_nodes, hidden);
    for (std::size_t i = 0; i < n_nodes; ++i) {
      const std::size_t begin = edges.offsets[i];
      const std::size_t end = edges.offsets[i + 1];
      if (begin == end) continue;
      dalpha.resize(end - begin);
      for (std::size_t h = 0; h < heads; ++h) {
        const std::size_t off = h * hd;
        const T* go = dout.row(i) + off;
        const T* ev = L.edge_value.data.data() + off;
        const T* ek = L.edge_key.data.data() + off;
        T* gev = G.edge_value.data.data() + off;
        T* gek = G.edge_key.data.data() + off;

        // Value path and d(dropped attention).
        for (std::size_t e = begin; e < end; ++e) {
          const std::uint32_t j = edges.source[e];
          const T w = static_cast<T>(edges.weight[e]);
          const T* vj = v.row(j) + off;
          const T ad = dropped(e, h);
          T da = 0;
          for (std::size_t c = 0; c < hd; ++c) da += go[c] * (vj[c] + ev[c] * w);
          dalpha[e - begin] = ad == T{0} ? T{0} : da * mask_scale;
          if (ad != T{0}) {
            T* dvj = dv.row(j) + off;
            for (std::size_t c = 0; c < hd; ++c) {
              dvj[c] += ad * go[c];
              gev[c] += ad * go[c] * w;
            }
          }
        }

        // Softmax backward then the logit q_i . (k_j + e_k w) * scale.
        T weighted = 0;
        for (std::size_t e = begin; e < end; ++e) weighted += alpha(e, h) * dalpha[e - begin];
        const T* qi = q.row(i) + off;
        T* dqi = dq.row(i) + off;
        for (std::size_t e = begin; e < end; ++e) {
          const T ds = alpha(e, h) * (dalpha[e - begin] - weighted) * scale;
          if (ds == T{0}) continue;
          const std::uint32_t j = edges.source[e];
          const T w = static_cast<T>(edges.weight[e]);
          const T* kj = k.row(j) + off;
          T* dkj = dk.row(j) + off;
          for (std::size_t c = 0; c < hd; ++c) {
            dqi[c] += ds * (kj[c] + ek[c] * w);
            dkj[c] += ds * qi[c];
            gek[c] += ds * qi[c] * w;
          }
        }
      }
    }

    dx = Matrix<T>(n_nodes, hidden);
    linear_backward(dout, x, L.w_root, G.w_root, G.b_root, dx);
    linear_backward(dq, x, L.w_query, G.w_query, G.b_query, dx);
    linear_backward(dk, x, L.w_key, G.w_key, G.b_key, dx);
    linear_backward(dv, x, L.w_value, G.w_value, G.b_value, dx);
  }

  // Layer-0 inputs: instance projection and anchor table.
  Matrix<T> z(n_inst, embeddings.dim());
  std::transform(embeddings.data().begin(), embeddings.data().end(), z.data.begin(),
                 [](float val) { return static_cast<T>(val); });
  Matrix<T> dinst(n_inst, hidden);
  std::copy(dx.data.begin(), dx.data.begin() + n_inst * hidden, dinst.data.begin());
  grads.embeddings = Matrix<T>(n_inst, embeddings.dim());
  linear_backward(dinst, z, params.w_in, g.w_in, g.b_in, grads.embeddings);
  std::copy(dx.data.begin() + n_inst * hidden, dx.data.end(), g.anchors.data.begin());
  return grads;
}

template GradientSet<float> backward<float>(const GraphHeadParams<float>&, const EdgeIndex&, const EmbeddingMatrix&,
                                            const GraphHeadConfig&, const NodeStates<float>&, const Matrix<float>&);
template GradientSet<double> backward<double>(const GraphHeadParams<double>&, const EdgeIndex&,
                                              const EmbeddingMatrix&, const GraphHeadConfig&,
                                              const NodeStates<double>&, const Matrix<double>&);

}  // namespace bolero
