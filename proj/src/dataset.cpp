#include "bolero/dataset.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>
#include <unordered_set>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "bolero/error.hpp"
#include "bolero/hashing.hpp"

namespace bolero {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t");
  return s.substr(first, last - first + 1);
}

double parse_double(std::string_view text) {
  text = trim(text);
  if (text.empty()) return kNaN;
  if (text.front() == '+') text.remove_prefix(1);
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size()) return kNaN;
  return value;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, fmt::format("cannot open {}", path.string()));
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

double median_of(std::vector<double> values) {
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

ContinuousStats fit_stats(std::string name, const std::vector<double>& train_values) {
  std::vector<double> present;
  present.reserve(train_values.size());
  for (double v : train_values)
    if (!std::isnan(v)) present.push_back(v);
  if (present.empty())
    throw Error(ErrorCode::AllMissingColumn, fmt::format("column '{}' has no observed training value", name));

  ContinuousStats stats;
  stats.column = std::move(name);
  stats.median = median_of(present);
  const double n = static_cast<double>(present.size());
  stats.mean = std::accumulate(present.begin(), present.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : present) ss += (v - stats.mean) * (v - stats.mean);
  stats.std = std::max(std::sqrt(ss / n), kStdFloor);
  const auto [lo, hi] = std::minmax_element(present.begin(), present.end());
  stats.min = *lo;
  stats.max = *hi;
  return stats;
}

std::vector<double> standardize(const std::vector<double>& values, const ContinuousStats& stats) {
  std::vector<double> out(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double v = std::isnan(values[i]) ? stats.median : values[i];
    out[i] = (v - stats.mean) / stats.std;
  }
  return out;
}

// Largest-remainder apportionment of `total` proportional to `weights`,
// never exceeding `caps`. Exact integer arithmetic; ties go to the lower index.
std::vector<std::size_t> apportion(std::size_t total, const std::vector<std::size_t>& weights,
                                   const std::vector<std::size_t>& caps) {
  const std::size_t weight_sum = std::accumulate(weights.begin(), weights.end(), std::size_t{0});
  std::vector<std::size_t> alloc(weights.size(), 0);
  if (weight_sum == 0) return alloc;
  std::size_t assigned = 0;
  for (std::size_t c = 0; c < weights.size(); ++c) {
    alloc[c] = std::min(total * weights[c] / weight_sum, caps[c]);
    assigned += alloc[c];
  }
  while (assigned < total) {
    std::size_t best = weights.size();
    long double best_gap = -std::numeric_limits<long double>::infinity();
    for (std::size_t c = 0; c < weights.size(); ++c) {
      if (alloc[c] >= caps[c]) continue;
      // gap = ideal - alloc, scaled by weight_sum
      const long double gap = static_cast<long double>(total * weights[c]) -
                              static_cast<long double>(alloc[c] * weight_sum);
      if (gap > best_gap) {
        best_gap = gap;
        best = c;
      }
    }
    if (best == weights.size()) break;
    ++alloc[best];
    ++assigned;
  }
  return alloc;
}

}  // namespace

std::string_view to_string(ColumnKind kind) {
  switch (kind) {
    case ColumnKind::Categorical: return "categorical";
    case ColumnKind::Continuous: return "continuous";
    case ColumnKind::DateLike: return "date";
    case ColumnKind::Target: return "target";
  }
  return "?";
}

std::string_view to_string(Task task) {
  return task == Task::Classification ? "classification" : "regression";
}

std::string_view to_string(Split split) {
  switch (split) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
  }
  return "?";
}

ColumnKind parse_column_kind(std::string_view text) {
  if (text == "categorical") return ColumnKind::Categorical;
  if (text == "continuous") return ColumnKind::Continuous;
  if (text == "date" || text == "datelike") return ColumnKind::DateLike;
  if (text == "target") return ColumnKind::Target;
  throw Error(ErrorCode::ConfigError, fmt::format("unknown column kind '{}'", text));
}

Task parse_task(std::string_view text) {
  if (text == "classification") return Task::Classification;
  if (text == "regression") return Task::Regression;
  throw Error(ErrorCode::ConfigError, fmt::format("unknown task '{}'", text));
}

// ---------------------------------------------------------------------------
// Schema

void DatasetSchema::validate() const {
  std::unordered_set<std::string> seen;
  std::size_t targets = 0;
  for (const auto& col : columns) {
    if (!seen.insert(col.name).second)
      throw Error(ErrorCode::DuplicateColumn, fmt::format("schema lists '{}' twice", col.name));
    if (col.kind == ColumnKind::Target) ++targets;
  }
  if (targets != 1)
    throw Error(ErrorCode::ConfigError, fmt::format("schema needs exactly one target column, found {}", targets));
}

const ColumnSchema& DatasetSchema::target() const {
  for (const auto& col : columns)
    if (col.kind == ColumnKind::Target) return col;
  throw Error(ErrorCode::ConfigError, "schema has no target column");
}

DatasetSchema DatasetSchema::from_json_text(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ConfigError, fmt::format("schema is not valid JSON: {}", e.what()));
  }
  DatasetSchema schema;
  try {
    schema.task = parse_task(j.at("task").get<std::string>());
    for (const auto& col : j.at("columns"))
      schema.columns.push_back({col.at("name").get<std::string>(), parse_column_kind(col.at("kind").get<std::string>())});
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ConfigError, fmt::format("malformed schema: {}", e.what()));
  }
  schema.validate();
  return schema;
}

DatasetSchema DatasetSchema::load(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path))
    throw Error(ErrorCode::ConfigError, fmt::format("schema file {} does not exist", path.string()));
  return from_json_text(read_file(path));
}

std::string DatasetSchema::to_json_text() const {
  nlohmann::json j;
  j["task"] = std::string(to_string(task));
  j["columns"] = nlohmann::json::array();
  for (const auto& col : columns)
    j["columns"].push_back({{"name", col.name}, {"kind", std::string(to_string(col.kind))}});
  return j.dump(2);
}

// ---------------------------------------------------------------------------
// TabularDataset

TabularDataset::TabularDataset(Task task, std::vector<FeatureColumn> columns, std::vector<double> targets,
                               std::vector<std::string> class_names)
    : task_(task),
      columns_(std::move(columns)),
      targets_(std::make_shared<const std::vector<double>>(std::move(targets))),
      class_names_(std::move(class_names)),
      splits_(targets_->size(), Split::Train) {
  for (const auto& col : columns_) {
    const std::size_t n = col.kind == ColumnKind::Continuous ? col.values.size()
                          : col.codes.empty()                 ? col.text.size()
                                                              : col.codes.size();
    if (n != targets_->size())
      throw Error(ErrorCode::ShapeMismatch,
                  fmt::format("column '{}' has {} cells, expected {}", col.name, n, targets_->size()));
  }
}

const FeatureColumn& TabularDataset::column(std::string_view name) const {
  for (const auto& col : columns_)
    if (col.name == name) return col;
  throw Error(ErrorCode::MissingColumn, fmt::format("no column named '{}'", name));
}

std::vector<ColumnSchema> TabularDataset::feature_schema() const {
  std::vector<ColumnSchema> out;
  out.reserve(columns_.size());
  for (const auto& col : columns_) out.push_back({col.name, col.kind});
  return out;
}

std::vector<std::size_t> TabularDataset::rows_in(Split split) const {
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < splits_.size(); ++i)
    if (splits_[i] == split) rows.push_back(i);
  return rows;
}

std::size_t TabularDataset::count(Split split) const {
  return static_cast<std::size_t>(std::count(splits_.begin(), splits_.end(), split));
}

double TabularDataset::target(std::size_t row) const {
  counter_->record(splits_.at(row));
  return (*targets_)[row];
}

TabularDataset TabularDataset::with_splits(std::vector<Split> splits) const {
  if (splits.size() != num_rows())
    throw Error(ErrorCode::ShapeMismatch, fmt::format("{} split labels for {} rows", splits.size(), num_rows()));
  TabularDataset out = *this;
  out.splits_ = std::move(splits);
  return out;
}

TabularDataset TabularDataset::with_columns(std::vector<FeatureColumn> columns,
                                            std::uint64_t preprocess_fingerprint) const {
  TabularDataset out = *this;
  out.columns_ = std::move(columns);
  out.preprocess_fingerprint_ = preprocess_fingerprint;
  return out;
}

TabularDataset TabularDataset::with_targets(std::vector<double> targets) const {
  if (targets.size() != num_rows())
    throw Error(ErrorCode::ShapeMismatch, fmt::format("{} targets for {} rows", targets.size(), num_rows()));
  TabularDataset out = *this;
  out.targets_ = std::make_shared<const std::vector<double>>(std::move(targets));
  return out;
}

TabularDataset TabularDataset::with_fresh_label_counter() const {
  TabularDataset out = *this;
  out.counter_ = std::make_shared<LabelAccessCounter>();
  return out;
}

TabularDataset TabularDataset::drop_columns(std::span<const std::string> names) const {
  std::vector<FeatureColumn> kept;
  for (const auto& col : columns_)
    if (std::find(names.begin(), names.end(), col.name) == names.end()) kept.push_back(col);
  return with_columns(std::move(kept), preprocess_fingerprint_);
}

// ---------------------------------------------------------------------------
// CSV

std::vector<std::vector<std::string>> parse_csv(std::string_view text) {
  if (text.starts_with("\xEF\xBB\xBF")) text.remove_prefix(3);
  std::vector<std::vector<std::string>> records;
  std::vector<std::string> record;
  std::string field;
  bool in_quotes = false;
  bool field_started = false;

  auto end_record = [&] {
    record.push_back(std::move(field));
    field.clear();
    // a bare empty line is not a record
    if (!(record.size() == 1 && record[0].empty() && !field_started)) records.push_back(std::move(record));
    record.clear();
    field_started = false;
  };

  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        field.push_back(c);
      }
      continue;
    }
    switch (c) {
      case '"':
        in_quotes = true;
        field_started = true;
        break;
      case ',':
        record.push_back(std::move(field));
        field.clear();
        field_started = true;
        break;
      case '\r':
        if (i + 1 < text.size() && text[i + 1] == '\n') ++i;
        end_record();
        break;
      case '\n':
        end_record();
        break;
      default:
        field.push_back(c);
        field_started = true;
    }
  }
  if (in_quotes) throw Error(ErrorCode::FormatError, "unterminated quoted field");
  if (field_started || !field.empty() || !record.empty()) end_record();
  return records;
}

TabularDataset load_csv_text(std::string_view text, const DatasetSchema& schema) {
  schema.validate();
  const auto records = parse_csv(text);
  if (records.empty()) throw Error(ErrorCode::EmptyFile, "CSV has no header row");

  const auto& header = records.front();
  std::unordered_map<std::string, std::size_t> position;
  for (std::size_t i = 0; i < header.size(); ++i) {
    const std::string name(trim(header[i]));
    if (!position.emplace(name, i).second)
      throw Error(ErrorCode::DuplicateColumn, fmt::format("header lists '{}' twice", name));
    const bool known = std::any_of(schema.columns.begin(), schema.columns.end(),
                                   [&](const ColumnSchema& c) { return c.name == name; });
    if (!known) throw Error(ErrorCode::MissingColumn, fmt::format("header column '{}' is not in the schema", name));
  }
  for (const auto& col : schema.columns)
    if (!position.contains(col.name))
      throw Error(ErrorCode::MissingColumn, fmt::format("schema column '{}' is missing from the header", col.name));
  if (records.size() < 2) throw Error(ErrorCode::EmptyFile, "CSV has a header but no data rows");

  const std::size_t target_pos = position.at(schema.target().name);
  std::vector<FeatureColumn> columns;
  for (const auto& col : schema.columns)
    if (col.kind != ColumnKind::Target) columns.push_back({col.name, col.kind, {}, {}, {}});

  std::vector<double> targets;
  std::vector<std::string> class_names;
  std::unordered_map<std::string, std::size_t> class_index;

  for (std::size_t r = 1; r < records.size(); ++r) {
    const auto& rec = records[r];
    if (rec.size() != header.size())
      throw Error(ErrorCode::FormatError,
                  fmt::format("line {} has {} fields, header has {}", r + 1, rec.size(), header.size()));
    const std::string_view target_cell = trim(rec[target_pos]);
    double target = kNaN;
    if (schema.task == Task::Classification) {
      if (!target_cell.empty()) {
        const auto [it, inserted] = class_index.emplace(std::string(target_cell), class_names.size());
        if (inserted) class_names.emplace_back(target_cell);
        target = static_cast<double>(it->second);
      }
    } else {
      target = parse_double(target_cell);
    }
    if (std::isnan(target)) continue;
    targets.push_back(target);

    for (auto& col : columns) {
      const std::string& cell = rec[position.at(col.name)];
      if (col.kind == ColumnKind::Continuous)
        col.values.push_back(parse_double(cell));
      else
        col.text.emplace_back(trim(cell));
    }
  }
  if (targets.empty()) throw Error(ErrorCode::EmptyFile, "CSV has no row with a target value");
  return TabularDataset(schema.task, std::move(columns), std::move(targets), std::move(class_names));
}

TabularDataset load_csv(const std::filesystem::path& path, const DatasetSchema& schema) {
  return load_csv_text(read_file(path), schema);
}

// ---------------------------------------------------------------------------
// Splits

TabularDataset make_splits(const TabularDataset& dataset, std::uint64_t seed) {
  const std::size_t n = dataset.num_rows();
  if (n < 10) throw Error(ErrorCode::TooFewRows, fmt::format("need at least 10 rows to split, got {}", n));
  const std::size_t n_holdout = n / 10;
  std::mt19937_64 engine(splitmix64(seed));
  std::vector<Split> splits(n, Split::Train);

  if (dataset.task() == Task::Regression || dataset.num_classes() == 0) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    stable_shuffle(engine, order);
    for (std::size_t i = 0; i < n_holdout; ++i) splits[order[i]] = Split::Test;
    for (std::size_t i = n_holdout; i < 2 * n_holdout; ++i) splits[order[i]] = Split::Val;
    return dataset.with_splits(std::move(splits));
  }

  const auto& targets = *dataset.targets_;
  std::vector<std::vector<std::size_t>> groups(dataset.num_classes());
  for (std::size_t i = 0; i < n; ++i) groups[static_cast<std::size_t>(targets[i])].push_back(i);
  std::vector<std::size_t> sizes;
  for (auto& g : groups) {
    stable_shuffle(engine, g);
    sizes.push_back(g.size());
  }
  const auto test = apportion(n_holdout, sizes, sizes);
  std::vector<std::size_t> remaining(sizes.size());
  for (std::size_t c = 0; c < sizes.size(); ++c) remaining[c] = sizes[c] - test[c];
  const auto val = apportion(n_holdout, sizes, remaining);

  for (std::size_t c = 0; c < groups.size(); ++c) {
    for (std::size_t i = 0; i < test[c]; ++i) splits[groups[c][i]] = Split::Test;
    for (std::size_t i = test[c]; i < test[c] + val[c]; ++i) splits[groups[c][i]] = Split::Val;
  }
  return dataset.with_splits(std::move(splits));
}

// ---------------------------------------------------------------------------
// Preprocessing

std::uint32_t CategoricalMap::code_of(const std::string& value) const {
  const auto it = index.find(value);
  return it == index.end() ? kMissingCode : it->second;
}

const CategoricalMap& PreprocessState::categorical_map(std::string_view column) const {
  for (const auto& m : categorical)
    if (m.column == column) return m;
  throw Error(ErrorCode::MissingColumn, fmt::format("no categorical map for '{}'", column));
}

const ContinuousStats& PreprocessState::stats(std::string_view column) const {
  for (const auto& s : continuous)
    if (s.column == column) return s;
  throw Error(ErrorCode::MissingColumn, fmt::format("no continuous statistics for '{}'", column));
}

std::uint64_t PreprocessState::fingerprint() const {
  std::uint64_t h = kFnvOffset;
  auto mix_double = [&](double v) { h = hash_combine(h, std::bit_cast<std::uint64_t>(v)); };
  for (const auto& c : schema) h = hash_combine(fnv1a(c.name, h), static_cast<std::uint64_t>(c.kind));
  for (const auto& m : categorical) {
    h = fnv1a(m.column, h);
    for (const auto& v : m.values) h = fnv1a(v, hash_combine(h, 0x7C));
  }
  for (const auto& s : continuous) {
    h = fnv1a(s.column, h);
    for (double v : {s.median, s.mean, s.std, s.min, s.max}) mix_double(v);
  }
  return h == 0 ? 1 : h;
}

std::array<double, 4> expand_date(std::string_view text) {
  constexpr std::array<double, 4> invalid{kNaN, kNaN, kNaN, kNaN};
  text = trim(text);
  if (text.size() != 10 || text[4] != '-' || text[7] != '-') return invalid;
  auto number = [&](std::size_t pos, std::size_t len, int& out) {
    const auto [ptr, ec] = std::from_chars(text.data() + pos, text.data() + pos + len, out);
    return ec == std::errc() && ptr == text.data() + pos + len;
  };
  int y = 0, m = 0, d = 0;
  if (!number(0, 4, y) || !number(5, 2, m) || !number(8, 2, d)) return invalid;
  using namespace std::chrono;
  const year_month_day ymd{year{y}, month{static_cast<unsigned>(m)}, day{static_cast<unsigned>(d)}};
  if (!ymd.ok()) return invalid;
  const unsigned dow = weekday{sys_days{ymd}}.iso_encoding() - 1;
  return {static_cast<double>(y), static_cast<double>(m), static_cast<double>(d), static_cast<double>(dow)};
}

PreprocessState fit_preprocess(const TabularDataset& dataset) {
  if (dataset.preprocessed())
    throw Error(ErrorCode::SchemaMismatch, "dataset is already preprocessed; fit on the raw dataset");
  const auto train_rows = dataset.rows_in(Split::Train);
  if (train_rows.empty()) throw Error(ErrorCode::TooFewRows, "train split is empty");

  PreprocessState state;
  state.schema = dataset.feature_schema();
  for (const auto& col : dataset.columns()) {
    switch (col.kind) {
      case ColumnKind::Categorical: {
        CategoricalMap map;
        map.column = col.name;
        for (std::size_t r : train_rows) {
          const std::string& v = col.text[r];
          if (v.empty()) continue;
          if (map.index.emplace(v, static_cast<std::uint32_t>(map.values.size() + 1)).second) map.values.push_back(v);
        }
        state.categorical.push_back(std::move(map));
        break;
      }
      case ColumnKind::Continuous: {
        std::vector<double> train;
        train.reserve(train_rows.size());
        for (std::size_t r : train_rows) train.push_back(col.values[r]);
        state.continuous.push_back(fit_stats(col.name, train));
        break;
      }
      case ColumnKind::DateLike: {
        state.date_columns.push_back(col.name);
        std::array<std::vector<double>, 4> parts;
        for (std::size_t r : train_rows) {
          const auto p = expand_date(col.text[r]);
          for (std::size_t k = 0; k < 4; ++k) parts[k].push_back(p[k]);
        }
        for (std::size_t k = 0; k < 4; ++k)
          state.continuous.push_back(fit_stats(fmt::format("{}.{}", col.name, kDateParts[k]), parts[k]));
        break;
      }
      case ColumnKind::Target:
        break;
    }
  }
  return state;
}

TabularDataset apply_preprocess(const TabularDataset& dataset, const PreprocessState& state) {
  const std::uint64_t fp = state.fingerprint();
  if (dataset.preprocessed()) {
    if (dataset.preprocess_fingerprint() == fp) return dataset;
    throw Error(ErrorCode::SchemaMismatch, "dataset was preprocessed with a different state");
  }
  if (dataset.feature_schema() != state.schema)
    throw Error(ErrorCode::SchemaMismatch, "dataset columns differ from the fitted schema");

  std::vector<FeatureColumn> out;
  for (const auto& col : dataset.columns()) {
    switch (col.kind) {
      case ColumnKind::Categorical: {
        const auto& map = state.categorical_map(col.name);
        FeatureColumn c{col.name, ColumnKind::Categorical, {}, {}, {}};
        c.codes.reserve(col.text.size());
        for (const auto& v : col.text) c.codes.push_back(map.code_of(v));
        out.push_back(std::move(c));
        break;
      }
      case ColumnKind::Continuous:
        out.push_back({col.name, ColumnKind::Continuous, {}, {}, standardize(col.values, state.stats(col.name))});
        break;
      case ColumnKind::DateLike: {
        std::array<std::vector<double>, 4> parts;
        for (const auto& v : col.text) {
          const auto p = expand_date(v);
          for (std::size_t k = 0; k < 4; ++k) parts[k].push_back(p[k]);
        }
        for (std::size_t k = 0; k < 4; ++k) {
          std::string name = fmt::format("{}.{}", col.name, kDateParts[k]);
          auto values = standardize(parts[k], state.stats(name));
          out.push_back({std::move(name), ColumnKind::Continuous, {}, {}, std::move(values)});
        }
        break;
      }
      case ColumnKind::Target:
        break;
    }
  }
  return dataset.with_columns(std::move(out), fp);
}

}  // namespace bolero
