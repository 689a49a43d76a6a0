#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "bolero/gnn_head.hpp"
#include "bolero/graph.hpp"
#include "bolero/train.hpp"

namespace bolero {

struct DatasetEntry {
  std::string name;
  std::string csv;
  std::string schema;
  std::string embedding;  // required when embeddings come from files

  bool operator==(const DatasetEntry&) const = default;
};

enum class EmbeddingSource { Stub, File };

struct EmbeddingConfig {
  EmbeddingSource source = EmbeddingSource::Stub;
  std::size_t dim = 32;
  std::uint64_t seed = 0;

  bool operator==(const EmbeddingConfig&) const = default;
};

// JSON layout:
// {
//   "method": "BOLERO",
//   "output_dir": "out",
//   "seeds": [0, 1, 2, 3, 4],
//   "split_seed": 0,
//   "workers": 0,
//   "datasets": [{"name": "...", "csv": "...", "schema": "...", "embedding": "..."}],
//   "embedding": {"source": "stub" | "file", "dim": 32, "seed": 0},
//   "graph": {"top_k": 16, "occurrence_threshold": 0.5},
//   "head": {"hidden_dim": 64, "num_layers": 2, "num_heads": 2, "dropout": 0.1, "precision": "f32"},
//   "train": {"learning_rate": 0.001, "beta1": 0.9, "beta2": 0.999, "epsilon": 1e-8,
//             "max_epochs": 300, "patience": 20}
// }
// Every key except "datasets" is optional. Relative paths resolve against
// the config file's directory. The task comes from each dataset's schema.
struct RunConfig {
  std::string method = "BOLERO";
  std::string output_dir = "out";
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
  std::uint64_t split_seed = 0;
  std::size_t workers = 0;  // 0: hardware concurrency
  std::vector<DatasetEntry> datasets;
  EmbeddingConfig embedding;
  GraphOptions graph;
  GraphHeadConfig head;
  TrainConfig train;
  std::filesystem::path base_dir;  // not serialised

  static RunConfig from_json_text(std::string_view text, const std::filesystem::path& base_dir = {});
  static RunConfig load(const std::filesystem::path& path);
  std::string to_json_text() const;

  // Throws ConfigError on bad values or referenced files that do not exist.
  void validate() const;

  std::filesystem::path resolve(const std::string& path) const;
  std::filesystem::path output_path() const { return resolve(output_dir); }
  const DatasetEntry& dataset(std::string_view name) const;

  // Hex hash over the serialised config, excluding "workers".
  std::string hash() const;

  bool operator==(const RunConfig& other) const;
};

}  // namespace bolero
