#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "bolero/dataset.hpp"

namespace bolero {

// One line of a results file:
// {dataset, method, seed, task, metric_name, metric_value, epochs, seconds}
// plus an optional config_hash for provenance.
struct ScoreRecord {
  std::string dataset;
  std::string method;
  std::uint64_t seed = 0;
  Task task = Task::Classification;
  std::string metric_name;  // "macro_f1" or "rmse"
  double metric_value = 0.0;
  std::size_t epochs = 0;
  double seconds = 0.0;
  std::string config_hash;

  bool operator==(const ScoreRecord&) const = default;
};

std::string_view metric_name_for(Task task);

std::string to_jsonl_line(const ScoreRecord& record);
ScoreRecord parse_jsonl_line(std::string_view line);
std::vector<ScoreRecord> read_jsonl(const std::filesystem::path& path);
std::vector<ScoreRecord> parse_jsonl(std::string_view text);

}  // namespace bolero
