#pragma once

#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "bolero/dataset.hpp"
#include "bolero/embed.hpp"
#include "bolero/gnn_head.hpp"
#include "bolero/graph.hpp"

namespace bolero {

struct TrainConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::size_t max_epochs = 300;
  std::size_t patience = 20;
  std::uint64_t seed = 0;
  Precision precision = Precision::F32;

  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

template <typename T>
struct LossResult {
  double value = 0.0;
  Matrix<T> gradient;  // same shape as predictions; zero outside the mask
};

// Classification: mean softmax cross-entropy over masked rows, targets are
// class indices. Regression: mean squared error over masked rows against
// (standardised) targets in column 0. Throws EmptyMask.
template <typename T>
LossResult<T> compute_loss(const Matrix<T>& predictions, std::span<const double> targets,
                           std::span<const std::uint8_t> mask, Task task);

// Standard Adam with bias correction on one flat tensor; `step` is the
// 1-based step count after incrementing.
template <typename T>
void adam_update(std::span<T> param, std::span<const T> grad, std::span<T> first_moment,
                 std::span<T> second_moment, std::size_t step, const TrainConfig& config);

template <typename T>
struct AdamState {
  GraphHeadParams<T> first_moment;
  GraphHeadParams<T> second_moment;
  std::size_t step = 0;

  static AdamState for_params(const GraphHeadParams<T>& params);
};

// Throws ShapeMismatch when the three parameter sets differ in layout.
template <typename T>
void adam_step(GraphHeadParams<T>& params, const GraphHeadParams<T>& grads, AdamState<T>& state,
               const TrainConfig& config);

// Tracks the best validation metric; stop once `patience` epochs pass
// without strict improvement.
class EarlyStopping {
 public:
  EarlyStopping(bool higher_is_better, std::size_t patience)
      : higher_is_better_(higher_is_better), patience_(patience) {}

  // Returns true when `metric` is a new best.
  bool update(std::size_t epoch, double metric);
  bool should_stop() const { return epochs_without_improvement_ >= patience_; }
  double best() const { return best_; }
  std::size_t best_epoch() const { return best_epoch_; }

 private:
  bool higher_is_better_;
  std::size_t patience_;
  double best_ = std::numeric_limits<double>::quiet_NaN();
  std::size_t best_epoch_ = 0;
  std::size_t epochs_without_improvement_ = 0;
};

// Train-fitted standardisation for regression targets.
struct TargetScaler {
  double mean = 0.0;
  double std = 1.0;

  static TargetScaler fit(std::span<const double> train_targets);
  double standardize(double y) const { return (y - mean) / std; }
  double invert(double z) const { return z * std + mean; }
};

// Unweighted mean of per-class F1 over classes [0, num_classes). Classes with
// a zero denominator contribute 0. Throws EmptyInput.
double macro_f1(std::span<const std::size_t> predicted, std::span<const std::size_t> truth, std::size_t num_classes);
double rmse(std::span<const double> predicted, std::span<const double> truth);

// Classification: predicted/truth hold class indices; regression: values on
// the original target scale.
double evaluate_metric(Task task, std::span<const double> predicted, std::span<const double> truth,
                       std::size_t num_classes);

template <typename T>
std::vector<std::size_t> argmax_rows(const Matrix<T>& logits);

struct RunResult {
  std::uint64_t seed = 0;
  double best_val_metric = 0.0;
  double test_metric = 0.0;
  std::string metric_name;
  std::size_t epochs = 0;
  std::size_t best_epoch = 0;
  double seconds = 0.0;
  // Test-label reads observed just before the final metric computation.
  std::size_t test_label_reads_before_eval = 0;
};

struct TrainOutcome {
  RunResult result;
  GraphHeadParams<float> best_params;
  std::uint64_t embedding_checksum_before = 0;
  std::uint64_t embedding_checksum_after = 0;
};

// Full-graph transductive training: one forward/backward/Adam step per epoch
// on Train rows, evaluation-mode Val scoring for early stopping, and a single
// Test evaluation from the best-Val parameters. The head's task and class
// count are taken from the dataset.
TrainOutcome train_run(const TabularDataset& dataset, const BipartiteGraph& graph, const EmbeddingMatrix& embeddings,
                       GraphHeadConfig head_config, const TrainConfig& train_config);

}  // namespace bolero
