#include "bolero/run_config.hpp"

#include <fstream>
#include <sstream>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "bolero/error.hpp"
#include "bolero/hashing.hpp"

namespace bolero {

namespace {

using nlohmann::json;
using ordered = nlohmann::ordered_json;

template <typename V>
void read_opt(const json& obj, const char* key, V& out) {
  if (obj.contains(key)) out = obj.at(key).get<V>();
}

void reject_unknown(const json& obj, std::initializer_list<std::string_view> known, std::string_view where) {
  for (const auto& [key, value] : obj.items())
    if (std::find(known.begin(), known.end(), key) == known.end())
      throw Error(ErrorCode::ConfigError, fmt::format("unknown key '{}' in {}", key, where));
}

ordered to_ordered(const RunConfig& c, bool with_workers) {
  ordered j;
  j["method"] = c.method;
  j["output_dir"] = c.output_dir;
  j["seeds"] = c.seeds;
  j["split_seed"] = c.split_seed;
  if (with_workers) j["workers"] = c.workers;
  j["datasets"] = ordered::array();
  for (const auto& d : c.datasets) {
    ordered e;
    e["name"] = d.name;
    e["csv"] = d.csv;
    e["schema"] = d.schema;
    if (!d.embedding.empty()) e["embedding"] = d.embedding;
    j["datasets"].push_back(e);
  }
  j["embedding"] = {{"source", c.embedding.source == EmbeddingSource::Stub ? "stub" : "file"},
                    {"dim", c.embedding.dim},
                    {"seed", c.embedding.seed}};
  j["graph"] = {{"top_k", c.graph.top_k}, {"occurrence_threshold", c.graph.occurrence_threshold}};
  j["head"] = {{"hidden_dim", c.head.hidden_dim},
               {"num_layers", c.head.num_layers},
               {"num_heads", c.head.num_heads},
               {"dropout", c.head.dropout},
               {"precision", std::string(to_string(c.head.precision))}};
  j["train"] = {{"learning_rate", c.train.learning_rate}, {"beta1", c.train.beta1},
                {"beta2", c.train.beta2},                 {"epsilon", c.train.epsilon},
                {"max_epochs", c.train.max_epochs},       {"patience", c.train.patience}};
  return j;
}

}  // namespace

RunConfig RunConfig::from_json_text(std::string_view text, const std::filesystem::path& base_dir) {
  RunConfig c;
  c.base_dir = base_dir;
  try {
    const json j = json::parse(text);
    if (!j.is_object()) throw Error(ErrorCode::ConfigError, "config must be a JSON object");
    reject_unknown(j, {"method", "output_dir", "seeds", "split_seed", "workers", "datasets", "embedding", "graph", "head",
                       "train"},
                   "config");
    read_opt(j, "method", c.method);
    read_opt(j, "output_dir", c.output_dir);
    read_opt(j, "seeds", c.seeds);
    read_opt(j, "split_seed", c.split_seed);
    read_opt(j, "workers", c.workers);
    if (!j.contains("datasets")) throw Error(ErrorCode::ConfigError, "config has no 'datasets' list");
    for (const auto& e : j.at("datasets")) {
      reject_unknown(e, {"name", "csv", "schema", "embedding"}, "datasets[]");
      DatasetEntry d;
      d.name = e.at("name").get<std::string>();
      d.csv = e.at("csv").get<std::string>();
      d.schema = e.at("schema").get<std::string>();
      read_opt(e, "embedding", d.embedding);
      c.datasets.push_back(std::move(d));
    }
    if (j.contains("embedding")) {
      const auto& e = j.at("embedding");
      reject_unknown(e, {"source", "dim", "seed"}, "embedding");
      std::string source = "stub";
      read_opt(e, "source", source);
      if (source == "stub") c.embedding.source = EmbeddingSource::Stub;
      else if (source == "file") c.embedding.source = EmbeddingSource::File;
      else throw Error(ErrorCode::ConfigError, fmt::format("embedding.source must be 'stub' or 'file', got '{}'", source));
      read_opt(e, "dim", c.embedding.dim);
      read_opt(e, "seed", c.embedding.seed);
    }
    if (j.contains("graph")) {
      const auto& g = j.at("graph");
      reject_unknown(g, {"top_k", "occurrence_threshold"}, "graph");
      read_opt(g, "top_k", c.graph.top_k);
      read_opt(g, "occurrence_threshold", c.graph.occurrence_threshold);
    }
    if (j.contains("head")) {
      const auto& h = j.at("head");
      reject_unknown(h, {"hidden_dim", "num_layers", "num_heads", "dropout", "precision"}, "head");
      read_opt(h, "hidden_dim", c.head.hidden_dim);
      read_opt(h, "num_layers", c.head.num_layers);
      read_opt(h, "num_heads", c.head.num_heads);
      read_opt(h, "dropout", c.head.dropout);
      if (h.contains("precision")) c.head.precision = parse_precision(h.at("precision").get<std::string>());
    }
    c.train.precision = c.head.precision;
    if (j.contains("train")) {
      const auto& t = j.at("train");
      reject_unknown(t, {"learning_rate", "beta1", "beta2", "epsilon", "max_epochs", "patience"}, "train");
      read_opt(t, "learning_rate", c.train.learning_rate);
      read_opt(t, "beta1", c.train.beta1);
      read_opt(t, "beta2", c.train.beta2);
      read_opt(t, "epsilon", c.train.epsilon);
      read_opt(t, "max_epochs", c.train.max_epochs);
      read_opt(t, "patience", c.train.patience);
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ConfigError, fmt::format("invalid config JSON: {}", e.what()));
  }
  return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::ConfigError, fmt::format("cannot open config {}", path.string()));
  std::ostringstream ss;
  ss << in.rdbuf();
  return from_json_text(ss.str(), path.parent_path());
}

std::string RunConfig::to_json_text() const { return to_ordered(*this, true).dump(2) + "\n"; }

std::filesystem::path RunConfig::resolve(const std::string& path) const {
  const std::filesystem::path p(path);
  return p.is_absolute() || base_dir.empty() ? p : base_dir / p;
}

const DatasetEntry& RunConfig::dataset(std::string_view name) const {
  for (const auto& d : datasets)
    if (d.name == name) return d;
  throw Error(ErrorCode::ConfigError, fmt::format("no dataset named '{}' in config", name));
}

void RunConfig::validate() const {
  auto fail = [](std::string msg) { throw Error(ErrorCode::ConfigError, std::move(msg)); };
  if (method.empty()) fail("method name is empty");
  if (output_dir.empty()) fail("output_dir is empty");
  if (seeds.empty()) fail("seeds list is empty");
  for (std::size_t i = 0; i < seeds.size(); ++i)
    for (std::size_t j = i + 1; j < seeds.size(); ++j)
      if (seeds[i] == seeds[j]) fail(fmt::format("seed {} listed twice", seeds[i]));
  if (datasets.empty()) fail("datasets list is empty");
  for (std::size_t i = 0; i < datasets.size(); ++i) {
    const auto& d = datasets[i];
    if (d.name.empty() || d.name.find_first_of("/\\") != std::string::npos)
      fail(fmt::format("dataset name '{}' must be non-empty without path separators", d.name));
    for (std::size_t j = 0; j < i; ++j)
      if (datasets[j].name == d.name) fail(fmt::format("dataset '{}' listed twice", d.name));
    if (!std::filesystem::is_regular_file(resolve(d.csv)))
      fail(fmt::format("dataset '{}': csv file {} does not exist", d.name, resolve(d.csv).string()));
    if (!std::filesystem::is_regular_file(resolve(d.schema)))
      fail(fmt::format("dataset '{}': schema file {} does not exist", d.name, resolve(d.schema).string()));
    if (embedding.source == EmbeddingSource::File) {
      if (d.embedding.empty()) fail(fmt::format("dataset '{}': embedding source is 'file' but no path given", d.name));
      if (!std::filesystem::is_regular_file(resolve(d.embedding)))
        fail(fmt::format("dataset '{}': embedding file {} does not exist", d.name, resolve(d.embedding).string()));
    }
  }
  if (embedding.source == EmbeddingSource::Stub && embedding.dim < 8) fail("embedding.dim must be >= 8");
  if (graph.top_k == 0) fail("graph.top_k must be >= 1");
  if (!(graph.occurrence_threshold >= 0.0 && graph.occurrence_threshold < 1.0))
    fail("graph.occurrence_threshold must lie in [0, 1)");
  try {
    GraphHeadConfig h = head;
    h.num_classes = std::max<std::size_t>(h.num_classes, 2);
    h.validate();
    train.validate();
  } catch (const Error& e) {
    fail(e.what());
  }
}

std::string RunConfig::hash() const { return hex64(fnv1a(to_ordered(*this, false).dump())); }

bool RunConfig::operator==(const RunConfig& other) const {
  return to_ordered(*this, true) == to_ordered(other, true);
}

}  // namespace bolero
