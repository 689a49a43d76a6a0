#include "bolero/records.hpp"

#include <fstream>
#include <sstream>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "bolero/error.hpp"

namespace bolero {

std::string_view metric_name_for(Task task) { return task == Task::Classification ? "macro_f1" : "rmse"; }

std::string to_jsonl_line(const ScoreRecord& r) {
  // Field order is fixed so identical runs give identical bytes.
  nlohmann::ordered_json j;
  j["dataset"] = r.dataset;
  j["method"] = r.method;
  j["seed"] = r.seed;
  j["task"] = std::string(to_string(r.task));
  j["metric_name"] = r.metric_name;
  j["metric_value"] = r.metric_value;
  j["epochs"] = r.epochs;
  j["seconds"] = r.seconds;
  if (!r.config_hash.empty()) j["config_hash"] = r.config_hash;
  return j.dump();
}

ScoreRecord parse_jsonl_line(std::string_view line) {
  ScoreRecord r;
  try {
    const auto j = nlohmann::json::parse(line);
    r.dataset = j.at("dataset").get<std::string>();
    r.method = j.at("method").get<std::string>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.task = parse_task(j.at("task").get<std::string>());
    r.metric_name = j.value("metric_name", std::string(metric_name_for(r.task)));
    r.metric_value = j.at("metric_value").get<double>();
    r.epochs = j.value("epochs", std::size_t{0});
    r.seconds = j.value("seconds", 0.0);
    r.config_hash = j.value("config_hash", std::string{});
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::FormatError, fmt::format("bad score record '{}': {}", line, e.what()));
  }
  return r;
}

std::vector<ScoreRecord> parse_jsonl(std::string_view text) {
  std::vector<ScoreRecord> out;
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.find_first_not_of(" \t") != std::string_view::npos) out.push_back(parse_jsonl_line(line));
    start = end + 1;
  }
  return out;
}

std::vector<ScoreRecord> read_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, fmt::format("cannot open {}", path.string()));
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_jsonl(buffer.str());
}

}  // namespace bolero
