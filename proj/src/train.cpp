#include "bolero/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include <fmt/format.h>

#include "bolero/error.hpp"
#include "bolero/hashing.hpp"

namespace bolero {

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw Error(ErrorCode::InvalidArgument, "learning_rate must be positive");
  if (patience < 1) throw Error(ErrorCode::InvalidArgument, "patience must be at least 1");
  if (max_epochs < 1) throw Error(ErrorCode::InvalidArgument, "max_epochs must be at least 1");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0))
    throw Error(ErrorCode::InvalidArgument, "Adam betas must lie in [0, 1)");
  if (!(epsilon > 0.0)) throw Error(ErrorCode::InvalidArgument, "Adam epsilon must be positive");
}

// ---------------------------------------------------------------------------
// Loss

template <typename T>
LossResult<T> compute_loss(const Matrix<T>& predictions, std::span<const double> targets,
                           std::span<const std::uint8_t> mask, Task task) {
  if (targets.size() != predictions.rows || mask.size() != predictions.rows)
    throw Error(ErrorCode::ShapeMismatch, "targets and mask must have one entry per prediction row");
  const auto count = static_cast<std::size_t>(std::count_if(mask.begin(), mask.end(), [](auto m) { return m != 0; }));
  if (count == 0) throw Error(ErrorCode::EmptyMask, "loss mask selects no rows");

  LossResult<T> out;
  out.gradient = Matrix<T>(predictions.rows, predictions.cols);
  const double inv_m = 1.0 / static_cast<double>(count);
  double total = 0.0;

  for (std::size_t r = 0; r < predictions.rows; ++r) {
    if (!mask[r]) continue;
    const T* row = predictions.row(r);
    T* grow = out.gradient.row(r);
    if (task == Task::Classification) {
      const auto label = static_cast<std::size_t>(targets[r]);
      if (label >= predictions.cols)
        throw Error(ErrorCode::ShapeMismatch, fmt::format("class {} out of range for {} logits", label, predictions.cols));
      double max_logit = row[0];
      for (std::size_t c = 1; c < predictions.cols; ++c) max_logit = std::max<double>(max_logit, row[c]);
      double denom = 0.0;
      for (std::size_t c = 0; c < predictions.cols; ++c) denom += std::exp(static_cast<double>(row[c]) - max_logit);
      const double log_denom = std::log(denom) + max_logit;
      total += log_denom - static_cast<double>(row[label]);
      for (std::size_t c = 0; c < predictions.cols; ++c) {
        const double p = std::exp(static_cast<double>(row[c]) - log_denom);
        grow[c] = static_cast<T>((p - (c == label ? 1.0 : 0.0)) * inv_m);
      }
    } else {
      const double diff = static_cast<double>(row[0]) - targets[r];
      total += diff * diff;
      grow[0] = static_cast<T>(2.0 * diff * inv_m);
    }
  }
  out.value = total * inv_m;
  return out;
}

template LossResult<float> compute_loss<float>(const Matrix<float>&, std::span<const double>,
                                               std::span<const std::uint8_t>, Task);
template LossResult<double> compute_loss<double>(const Matrix<double>&, std::span<const double>,
                                                 std::span<const std::uint8_t>, Task);

// ---------------------------------------------------------------------------
// Adam

template <typename T>
void adam_update(std::span<T> param, std::span<const T> grad, std::span<T> first_moment, std::span<T> second_moment,
                 std::size_t step, const TrainConfig& config) {
  if (grad.size() != param.size() || first_moment.size() != param.size() || second_moment.size() != param.size())
    throw Error(ErrorCode::ShapeMismatch, "Adam tensors differ in size");
  const double b1 = config.beta1;
  const double b2 = config.beta2;
  const double correction1 = 1.0 - std::pow(b1, static_cast<double>(step));
  const double correction2 = 1.0 - std::pow(b2, static_cast<double>(step));
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double g = grad[i];
    const double m = b1 * first_moment[i] + (1.0 - b1) * g;
    const double v = b2 * second_moment[i] + (1.0 - b2) * g * g;
    first_moment[i] = static_cast<T>(m);
    second_moment[i] = static_cast<T>(v);
    const double m_hat = m / correction1;
    const double v_hat = v / correction2;
    param[i] = static_cast<T>(param[i] - config.learning_rate * m_hat / (std::sqrt(v_hat) + config.epsilon));
  }
}

template void adam_update<float>(std::span<float>, std::span<const float>, std::span<float>, std::span<float>,
                                 std::size_t, const TrainConfig&);
template void adam_update<double>(std::span<double>, std::span<const double>, std::span<double>, std::span<double>,
                                  std::size_t, const TrainConfig&);

template <typename T>
AdamState<T> AdamState<T>::for_params(const GraphHeadParams<T>& params) {
  return {params.zeros_like(), params.zeros_like(), 0};
}

template struct AdamState<float>;
template struct AdamState<double>;

template <typename T>
void adam_step(GraphHeadParams<T>& params, const GraphHeadParams<T>& grads, AdamState<T>& state,
               const TrainConfig& config) {
  auto p = params.named_tensors();
  const auto g = grads.named_tensors();
  auto m = state.first_moment.named_tensors();
  auto v = state.second_moment.named_tensors();
  if (g.size() != p.size() || m.size() != p.size() || v.size() != p.size())
    throw Error(ErrorCode::ShapeMismatch, "parameter, gradient and moment sets differ in layout");
  for (std::size_t t = 0; t < p.size(); ++t)
    if (g[t].second->rows != p[t].second->rows || g[t].second->cols != p[t].second->cols ||
        m[t].second->size() != p[t].second->size() || v[t].second->size() != p[t].second->size())
      throw Error(ErrorCode::ShapeMismatch, fmt::format("tensor '{}' differs in shape", p[t].first));

  ++state.step;
  for (std::size_t t = 0; t < p.size(); ++t)
    adam_update<T>(p[t].second->data, g[t].second->data, m[t].second->data, v[t].second->data, state.step, config);
}

template void adam_step<float>(GraphHeadParams<float>&, const GraphHeadParams<float>&, AdamState<float>&,
                               const TrainConfig&);
template void adam_step<double>(GraphHeadParams<double>&, const GraphHeadParams<double>&, AdamState<double>&,
                                const TrainConfig&);

// ---------------------------------------------------------------------------
// Early stopping, scaling, metrics

bool EarlyStopping::update(std::size_t epoch, double metric) {
  const bool improved = std::isnan(best_) || (higher_is_better_ ? metric > best_ : metric < best_);
  if (improved) {
    best_ = metric;
    best_epoch_ = epoch;
    epochs_without_improvement_ = 0;
  } else {
    ++epochs_without_improvement_;
  }
  return improved;
}

TargetScaler TargetScaler::fit(std::span<const double> train_targets) {
  if (train_targets.empty()) throw Error(ErrorCode::EmptyInput, "no training targets to fit a scaler on");
  TargetScaler s;
  const double n = static_cast<double>(train_targets.size());
  s.mean = std::accumulate(train_targets.begin(), train_targets.end(), 0.0) / n;
  double ss = 0.0;
  for (double y : train_targets) ss += (y - s.mean) * (y - s.mean);
  s.std = std::max(std::sqrt(ss / n), kStdFloor);
  return s;
}

double macro_f1(std::span<const std::size_t> predicted, std::span<const std::size_t> truth, std::size_t num_classes) {
  if (predicted.empty() || truth.empty()) throw Error(ErrorCode::EmptyInput, "macro-F1 of an empty set");
  if (predicted.size() != truth.size())
    throw Error(ErrorCode::ShapeMismatch, fmt::format("{} predictions for {} targets", predicted.size(), truth.size()));
  if (num_classes == 0) throw Error(ErrorCode::InvalidArgument, "macro-F1 needs at least one class");
  std::vector<double> tp(num_classes, 0.0), fp(num_classes, 0.0), fn(num_classes, 0.0);
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    if (predicted[i] >= num_classes || truth[i] >= num_classes)
      throw Error(ErrorCode::InvalidArgument, "class index out of range");
    if (predicted[i] == truth[i]) {
      tp[truth[i]] += 1.0;
    } else {
      fp[predicted[i]] += 1.0;
      fn[truth[i]] += 1.0;
    }
  }
  double sum = 0.0;
  for (std::size_t c = 0; c < num_classes; ++c) {
    const double precision = tp[c] + fp[c] > 0.0 ? tp[c] / (tp[c] + fp[c]) : 0.0;
    const double recall = tp[c] + fn[c] > 0.0 ? tp[c] / (tp[c] + fn[c]) : 0.0;
    sum += precision + recall > 0.0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
  }
  return sum / static_cast<double>(num_classes);
}

double rmse(std::span<const double> predicted, std::span<const double> truth) {
  if (predicted.empty() || truth.empty()) throw Error(ErrorCode::EmptyInput, "RMSE of an empty set");
  if (predicted.size() != truth.size())
    throw Error(ErrorCode::ShapeMismatch, fmt::format("{} predictions for {} targets", predicted.size(), truth.size()));
  double ss = 0.0;
  for (std::size_t i = 0; i < predicted.size(); ++i) ss += (predicted[i] - truth[i]) * (predicted[i] - truth[i]);
  return std::sqrt(ss / static_cast<double>(predicted.size()));
}

double evaluate_metric(Task task, std::span<const double> predicted, std::span<const double> truth,
                       std::size_t num_classes) {
  if (task == Task::Regression) return rmse(predicted, truth);
  std::vector<std::size_t> p(predicted.size()), t(truth.size());
  std::transform(predicted.begin(), predicted.end(), p.begin(), [](double v) { return static_cast<std::size_t>(v); });
  std::transform(truth.begin(), truth.end(), t.begin(), [](double v) { return static_cast<std::size_t>(v); });
  return macro_f1(p, t, num_classes);
}

template <typename T>
std::vector<std::size_t> argmax_rows(const Matrix<T>& logits) {
  std::vector<std::size_t> out(logits.rows);
  for (std::size_t r = 0; r < logits.rows; ++r) {
    const T* row = logits.row(r);
    out[r] = static_cast<std::size_t>(std::max_element(row, row + logits.cols) - row);
  }
  return out;
}

template std::vector<std::size_t> argmax_rows<float>(const Matrix<float>&);
template std::vector<std::size_t> argmax_rows<double>(const Matrix<double>&);

// ---------------------------------------------------------------------------
// Training loop

namespace {

template <typename T>
std::vector<double> decode_predictions(const Matrix<T>& predictions, const std::vector<std::size_t>& rows, Task task,
                                       const TargetScaler& scaler) {
  std::vector<double> out;
  out.reserve(rows.size());
  if (task == Task::Classification) {
    const auto labels = argmax_rows(predictions);
    for (std::size_t r : rows) out.push_back(static_cast<double>(labels[r]));
  } else {
    for (std::size_t r : rows) out.push_back(scaler.invert(predictions(r, 0)));
  }
  return out;
}

template <typename T>
TrainOutcome train_impl(const TabularDataset& dataset, const BipartiteGraph& graph, const EmbeddingMatrix& embeddings,
                        const GraphHeadConfig& head, const TrainConfig& cfg) {
  const auto start = std::chrono::steady_clock::now();
  const Task task = dataset.task();
  const std::size_t n = dataset.num_rows();
  if (graph.num_instances != n)
    throw Error(ErrorCode::ShapeMismatch, fmt::format("graph has {} instances, dataset {} rows", graph.num_instances, n));

  const auto train_rows = dataset.rows_in(Split::Train);
  const auto val_rows = dataset.rows_in(Split::Val);
  const auto test_rows = dataset.rows_in(Split::Test);
  if (train_rows.empty() || val_rows.empty() || test_rows.empty())
    throw Error(ErrorCode::EmptyMask, "train, validation and test splits must all be non-empty");

  // Train and Val labels only; Test labels stay unread until the end.
  std::vector<double> train_targets(n, 0.0);
  std::vector<std::uint8_t> train_mask(n, 0);
  std::vector<double> raw_train;
  for (std::size_t r : train_rows) {
    raw_train.push_back(dataset.target(r));
    train_mask[r] = 1;
  }
  const TargetScaler scaler = task == Task::Regression ? TargetScaler::fit(raw_train) : TargetScaler{};
  for (std::size_t i = 0; i < train_rows.size(); ++i)
    train_targets[train_rows[i]] = task == Task::Regression ? scaler.standardize(raw_train[i]) : raw_train[i];
  std::vector<double> val_truth;
  for (std::size_t r : val_rows) val_truth.push_back(dataset.target(r));

  TrainOutcome outcome;
  outcome.embedding_checksum_before = embeddings.checksum();
  const EdgeIndex edges = EdgeIndex::from_graph(graph);
  GraphHeadParams<T> params = init_params<T>(head, graph, embeddings.dim(), cfg.seed);
  GraphHeadParams<T> best = params;
  AdamState<T> adam = AdamState<T>::for_params(params);
  EarlyStopping stopper(task == Task::Classification, cfg.patience);
  const std::uint64_t dropout_stream = hash_combine(splitmix64(cfg.seed), 0xE90C4ULL);

  std::size_t epoch = 0;
  while (epoch < cfg.max_epochs) {
    ++epoch;
    auto fwd = forward(params, edges, embeddings, head, true, hash_combine(dropout_stream, epoch));
    const auto loss = compute_loss(fwd.predictions, train_targets, train_mask, task);
    const auto grads = backward(params, edges, embeddings, head, fwd.cache, loss.gradient);
    adam_step(params, grads.params, adam, cfg);
    if (!params.all_finite()) throw Error(ErrorCode::NonFiniteActivation, fmt::format("parameters diverged at epoch {}", epoch));

    const auto eval = forward(params, edges, embeddings, head, false, 0);
    const double val_metric =
        evaluate_metric(task, decode_predictions(eval.predictions, val_rows, task, scaler), val_truth, head.num_classes);
    if (stopper.update(epoch, val_metric)) best = params;
    if (stopper.should_stop()) break;
  }

  const auto final_eval = forward(best, edges, embeddings, head, false, 0);
  const auto test_pred = decode_predictions(final_eval.predictions, test_rows, task, scaler);
  outcome.result.test_label_reads_before_eval = dataset.target_reads(Split::Test);
  std::vector<double> test_truth;
  for (std::size_t r : test_rows) test_truth.push_back(dataset.target(r));

  auto& res = outcome.result;
  res.seed = cfg.seed;
  res.metric_name = task == Task::Classification ? "macro_f1" : "rmse";
  res.test_metric = evaluate_metric(task, test_pred, test_truth, head.num_classes);
  res.best_val_metric = stopper.best();
  res.best_epoch = stopper.best_epoch();
  res.epochs = epoch;
  outcome.best_params = convert_params<float>(best);
  outcome.embedding_checksum_after = embeddings.checksum();
  res.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return outcome;
}

}  // namespace

TrainOutcome train_run(const TabularDataset& dataset, const BipartiteGraph& graph, const EmbeddingMatrix& embeddings,
                       GraphHeadConfig head_config, const TrainConfig& train_config) {
  train_config.validate();
  head_config.task = dataset.task();
  head_config.num_classes = dataset.task() == Task::Classification ? std::max<std::size_t>(dataset.num_classes(), 2) : 1;
  head_config.precision = train_config.precision;
  head_config.validate();
  // Private counter: reads are attributed to this run only.
  const TabularDataset local = dataset.with_fresh_label_counter();
  return train_config.precision == Precision::F64 ? train_impl<double>(local, graph, embeddings, head_config, train_config)
                                                  : train_impl<float>(local, graph, embeddings, head_config, train_config);
}

}  // namespace bolero
