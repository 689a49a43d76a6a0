#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "bolero/embed.hpp"
#include "bolero/graph.hpp"
#include "bolero/records.hpp"
#include "bolero/run_config.hpp"
#include "bolero/stats.hpp"
#include "bolero/train.hpp"

namespace bolero {

// Runs job(0..count-1) on at most `workers` threads (0: hardware
// concurrency). After all jobs finish, rethrows the lowest-index failure.
void parallel_for(std::size_t count, std::size_t workers, const std::function<void(std::size_t)>& job);

// A dataset after load, split, preprocessing, graph build and embedding.
struct PreparedDataset {
  std::string name;
  TabularDataset data;
  BipartiteGraph graph;
  EmbeddingMatrix embeddings;
};

PreparedDataset prepare_dataset(const RunConfig& config, const DatasetEntry& entry);

struct RunSummary {
  ScoreRecord record;
  RunResult result;
  std::filesystem::path checkpoint;
};

// Trains every (dataset, seed), writes <out>/results.jsonl in config order
// and <out>/<dataset>/seed<k>.ckpt. Errors carry stage, dataset and seed.
std::vector<RunSummary> cmd_run(const RunConfig& config);

struct CompareOutput {
  std::vector<Leaderboard> boards;
  std::vector<std::string> notes;  // Friedman gate lines
  std::filesystem::path out_dir;
};

// Reads score files, builds one leaderboard per task present and writes
// leaderboard.csv, pairwise.csv and report.txt under `out_dir`.
CompareOutput cmd_compare(const std::vector<std::filesystem::path>& score_files, double alpha,
                          const std::filesystem::path& out_dir);

// Writes <out>/<dataset>/graph.json and returns the path.
std::filesystem::path cmd_export_graph(const RunConfig& config, const std::string& dataset);

// Writes <out>/<dataset>/embeddings.bin from the stub encoder.
std::filesystem::path cmd_stub_embed(const RunConfig& config, const std::string& dataset);

}  // namespace bolero
