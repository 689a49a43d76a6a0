#pragma once

#include <array>
#include <atomic>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace bolero {

enum class ColumnKind { Categorical, Continuous, DateLike, Target };
enum class Task { Classification, Regression };
enum class Split : std::uint8_t { Train = 0, Val = 1, Test = 2 };

std::string_view to_string(ColumnKind kind);
std::string_view to_string(Task task);
std::string_view to_string(Split split);
ColumnKind parse_column_kind(std::string_view text);
Task parse_task(std::string_view text);

struct ColumnSchema {
  std::string name;
  ColumnKind kind = ColumnKind::Continuous;

  bool operator==(const ColumnSchema&) const = default;
};

// Column list plus task type; the JSON sidecar next to every CSV.
struct DatasetSchema {
  std::vector<ColumnSchema> columns;
  Task task = Task::Classification;

  // Throws ConfigError unless exactly one Target column exists and names are unique.
  void validate() const;
  const ColumnSchema& target() const;

  static DatasetSchema from_json_text(std::string_view text);
  static DatasetSchema load(const std::filesystem::path& path);
  std::string to_json_text() const;
};

inline constexpr std::uint32_t kMissingCode = 0;

// One feature column. Before preprocessing, categorical and date cells live
// in `text`; afterwards categorical cells are `codes` and every other column
// is a Continuous column of `values`.
struct FeatureColumn {
  std::string name;
  ColumnKind kind = ColumnKind::Continuous;
  std::vector<std::string> text;
  std::vector<std::uint32_t> codes;
  std::vector<double> values;

  bool operator==(const FeatureColumn&) const = default;
};

// Per-split read counters for target values. Shared by copies of a dataset
// until with_fresh_label_counter() is called.
class LabelAccessCounter {
 public:
  void record(Split split) { counts_[static_cast<std::size_t>(split)].fetch_add(1, std::memory_order_relaxed); }
  std::size_t reads(Split split) const { return counts_[static_cast<std::size_t>(split)].load(std::memory_order_relaxed); }

 private:
  std::array<std::atomic<std::size_t>, 3> counts_{};
};

class TabularDataset {
 public:
  TabularDataset() = default;
  TabularDataset(Task task, std::vector<FeatureColumn> columns, std::vector<double> targets,
                 std::vector<std::string> class_names);

  Task task() const { return task_; }
  std::size_t num_rows() const { return targets_ ? targets_->size() : 0; }
  std::size_t num_classes() const { return class_names_.size(); }
  const std::vector<std::string>& class_names() const { return class_names_; }

  const std::vector<FeatureColumn>& columns() const { return columns_; }
  const FeatureColumn& column(std::string_view name) const;
  std::vector<ColumnSchema> feature_schema() const;

  std::span<const Split> splits() const { return splits_; }
  Split split_of(std::size_t row) const { return splits_[row]; }
  std::vector<std::size_t> rows_in(Split split) const;
  std::size_t count(Split split) const;

  // Target for `row`: class index for classification, raw value for
  // regression. Every call is counted against the row's split.
  double target(std::size_t row) const;
  std::size_t target_reads(Split split) const { return counter_->reads(split); }

  bool preprocessed() const { return preprocess_fingerprint_ != 0; }
  std::uint64_t preprocess_fingerprint() const { return preprocess_fingerprint_; }

  TabularDataset with_splits(std::vector<Split> splits) const;
  TabularDataset with_columns(std::vector<FeatureColumn> columns, std::uint64_t preprocess_fingerprint) const;
  TabularDataset with_targets(std::vector<double> targets) const;
  TabularDataset with_fresh_label_counter() const;
  TabularDataset drop_columns(std::span<const std::string> names) const;

 private:
  friend TabularDataset make_splits(const TabularDataset& dataset, std::uint64_t seed);

  Task task_ = Task::Classification;
  std::vector<FeatureColumn> columns_;
  std::shared_ptr<const std::vector<double>> targets_;
  std::vector<std::string> class_names_;
  std::vector<Split> splits_;
  std::uint64_t preprocess_fingerprint_ = 0;
  std::shared_ptr<LabelAccessCounter> counter_ = std::make_shared<LabelAccessCounter>();
};

// RFC-4180 reader; returns header + records. Exposed for tests and tools.
std::vector<std::vector<std::string>> parse_csv(std::string_view text);

// Reads a CSV whose header must name exactly the schema's columns (any
// order). Rows with a missing target are skipped. Every row starts in Train
// until make_splits assigns partitions.
TabularDataset load_csv(const std::filesystem::path& path, const DatasetSchema& schema);
TabularDataset load_csv_text(std::string_view text, const DatasetSchema& schema);

// Deterministic 80/10/10 partition. Val and Test each receive floor(N/10)
// rows and Train the remainder. Classification splits are stratified by
// class where the class counts allow it.
TabularDataset make_splits(const TabularDataset& dataset, std::uint64_t seed);

struct CategoricalMap {
  std::string column;
  std::vector<std::string> values;  // values[c - 1] has code c
  std::unordered_map<std::string, std::uint32_t> index;

  std::uint32_t code_of(const std::string& value) const;
};

struct ContinuousStats {
  std::string column;
  double median = 0.0;
  double mean = 0.0;
  double std = 1.0;
  double min = 0.0;
  double max = 0.0;
};

struct PreprocessState {
  std::vector<ColumnSchema> schema;
  std::vector<CategoricalMap> categorical;
  std::vector<ContinuousStats> continuous;  // continuous columns and expanded date parts
  std::vector<std::string> date_columns;

  const CategoricalMap& categorical_map(std::string_view column) const;
  const ContinuousStats& stats(std::string_view column) const;
  std::uint64_t fingerprint() const;
};

inline constexpr double kStdFloor = 1e-12;
inline constexpr std::array<std::string_view, 4> kDateParts{"year", "month", "day", "dow"};

// Parses YYYY-MM-DD into {year, month, day, day-of-week (Monday = 0)}.
// Anything else yields four NaNs.
std::array<double, 4> expand_date(std::string_view text);

PreprocessState fit_preprocess(const TabularDataset& dataset);
TabularDataset apply_preprocess(const TabularDataset& dataset, const PreprocessState& state);

}  // namespace bolero
