#include "bolero/pipeline.hpp"

#include <atomic>
#include <chrono>
#include <exception>
#include <fstream>
#include <thread>

#include <fmt/format.h>

#include "bolero/error.hpp"
#include "bolero/hashing.hpp"
#include "bolero/report.hpp"

namespace bolero {

namespace {

// Re-raises `body`'s Error with stage/dataset/seed context, keeping the code.
template <typename F>
auto in_stage(std::string_view stage, std::string_view dataset, std::string_view seed, F&& body) {
  try {
    return body();
  } catch (const Error& e) {
    throw Error(e.code(), fmt::format("stage={} dataset={} seed={}: {}", stage, dataset, seed, e.what()));
  } catch (const std::exception& e) {
    throw Error(ErrorCode::IoError, fmt::format("stage={} dataset={} seed={}: {}", stage, dataset, seed, e.what()));
  }
}

void write_file(const std::filesystem::path& path, std::string_view text) {
  std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, fmt::format("cannot write {}", path.string()));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, fmt::format("cannot open {}", path.string()));
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

void parallel_for(std::size_t count, std::size_t workers, const std::function<void(std::size_t)>& job) {
  if (workers == 0) workers = std::max(1u, std::thread::hardware_concurrency());
  workers = std::min(workers, count);
  std::vector<std::exception_ptr> errors(count);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < count; i = next++) {
      try {
        job(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  {
    std::vector<std::jthread> pool;
    for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(worker);
    worker();
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
}

PreparedDataset prepare_dataset(const RunConfig& config, const DatasetEntry& entry) {
  PreparedDataset out;
  out.name = entry.name;
  const auto schema = in_stage("load", entry.name, "-", [&] { return DatasetSchema::load(config.resolve(entry.schema)); });
  auto raw = in_stage("load", entry.name, "-", [&] { return load_csv(config.resolve(entry.csv), schema); });
  auto split = in_stage("split", entry.name, "-", [&] { return make_splits(raw, config.split_seed); });
  out.data = in_stage("preprocess", entry.name, "-", [&] { return apply_preprocess(split, fit_preprocess(split)); });
  out.graph = in_stage("build_graph", entry.name, "-", [&] { return build_graph(out.data, config.graph); });
  out.embeddings = in_stage("embed", entry.name, "-", [&] {
    if (config.embedding.source == EmbeddingSource::File)
      return load_embeddings(config.resolve(entry.embedding), out.data.num_rows());
    return stub_embed(out.data, config.embedding.dim, config.embedding.seed);
  });
  return out;
}

std::vector<RunSummary> cmd_run(const RunConfig& config) {
  config.validate();
  const std::string hash = config.hash();
  const auto out_dir = config.output_path();

  std::vector<PreparedDataset> prepared(config.datasets.size());
  parallel_for(prepared.size(), config.workers,
               [&](std::size_t i) { prepared[i] = prepare_dataset(config, config.datasets[i]); });

  const std::size_t n_seeds = config.seeds.size();
  std::vector<RunSummary> runs(prepared.size() * n_seeds);
  parallel_for(runs.size(), config.workers, [&](std::size_t job) {
    const auto& ds = prepared[job / n_seeds];
    const std::uint64_t seed = config.seeds[job % n_seeds];
    const std::string seed_text = std::to_string(seed);
    TrainConfig train = config.train;
    train.seed = seed;
    train.precision = config.head.precision;
    const auto start = std::chrono::steady_clock::now();
    const auto outcome =
        in_stage("train", ds.name, seed_text, [&] { return train_run(ds.data, ds.graph, ds.embeddings, config.head, train); });
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (outcome.result.test_label_reads_before_eval != 0)
      throw Error(ErrorCode::InvalidArgument, fmt::format("stage=train dataset={} seed={}: test labels read {} times "
                                                          "before final evaluation",
                                                          ds.name, seed, outcome.result.test_label_reads_before_eval));

    auto& run = runs[job];
    run.result = outcome.result;
    run.record = ScoreRecord{ds.name,
                             config.method,
                             seed,
                             ds.data.task(),
                             std::string(metric_name_for(ds.data.task())),
                             outcome.result.test_metric,
                             outcome.result.epochs,
                             seconds,
                             hash};
    run.checkpoint = out_dir / ds.name / fmt::format("seed{}.ckpt", seed);
    in_stage("checkpoint", ds.name, seed_text, [&] {
      std::filesystem::create_directories(run.checkpoint.parent_path());
      GraphHeadConfig head = config.head;
      head.task = ds.data.task();
      head.num_classes = ds.data.task() == Task::Classification ? std::max<std::size_t>(ds.data.num_classes(), 2) : 2;
      save_checkpoint(run.checkpoint, outcome.best_params, head, hash);
    });
  });

  std::string jsonl;
  for (const auto& r : runs) jsonl += to_jsonl_line(r.record) + "\n";
  in_stage("write_results", "-", "-", [&] { write_file(out_dir / "results.jsonl", jsonl); });
  return runs;
}

CompareOutput cmd_compare(const std::vector<std::filesystem::path>& score_files, double alpha,
                          const std::filesystem::path& out_dir) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw Error(ErrorCode::InvalidArgument, fmt::format("alpha {} not in (0, 1)", alpha));
  std::vector<ScoreRecord> records;
  std::uint64_t h = fnv1a(fmt::format("alpha={:.17g}", alpha));
  for (const auto& path : score_files) {
    const std::string text = in_stage("read_scores", path.string(), "-", [&] { return read_file(path); });
    h = hash_combine(h, fnv1a(text));
    auto part = in_stage("read_scores", path.string(), "-", [&] { return parse_jsonl(text); });
    records.insert(records.end(), part.begin(), part.end());
  }
  const std::string hash = hex64(h);

  const auto table = in_stage("compare", "-", "-", [&] { return ScoreTable::from_records(records); });
  if (table.methods().size() < 2)
    throw Error(ErrorCode::InvalidArgument,
                fmt::format("compare needs >= 2 methods across the score files, found {}", table.methods().size()));

  CompareOutput out;
  out.out_dir = out_dir;
  for (Task task : {Task::Classification, Task::Regression}) {
    if (table.datasets(task).empty()) continue;
    out.boards.push_back(in_stage("compare", std::string(to_string(task)), "-", [&] { return leaderboard(table, task, alpha); }));
    out.notes.push_back(friedman_note(out.boards.back(), alpha));
  }

  std::string text = fmt::format("# bolero config_hash={}\n", hash);
  for (std::size_t i = 0; i < out.boards.size(); ++i)
    text += "\n" + out.notes[i] + "\n" + leaderboard_text(out.boards[i]) + "\n" + pairwise_text(out.boards[i]);
  write_file(out_dir / "leaderboard.csv", leaderboard_csv(out.boards, hash));
  write_file(out_dir / "pairwise.csv", pairwise_csv(out.boards, hash));
  write_file(out_dir / "report.txt", text);
  return out;
}

std::filesystem::path cmd_export_graph(const RunConfig& config, const std::string& dataset) {
  config.validate();
  const auto& entry = config.dataset(dataset);
  const auto schema = in_stage("load", entry.name, "-", [&] { return DatasetSchema::load(config.resolve(entry.schema)); });
  const auto raw = in_stage("load", entry.name, "-", [&] { return load_csv(config.resolve(entry.csv), schema); });
  const auto split = in_stage("split", entry.name, "-", [&] { return make_splits(raw, config.split_seed); });
  const auto data = in_stage("preprocess", entry.name, "-", [&] { return apply_preprocess(split, fit_preprocess(split)); });
  const auto graph = in_stage("build_graph", entry.name, "-", [&] { return build_graph(data, config.graph); });
  const auto path = config.output_path() / entry.name / "graph.json";
  in_stage("export_graph", entry.name, "-", [&] { write_file(path, graph.to_json(config.hash())); });
  return path;
}

std::filesystem::path cmd_stub_embed(const RunConfig& config, const std::string& dataset) {
  RunConfig stub = config;
  stub.embedding.source = EmbeddingSource::Stub;
  stub.validate();
  const auto& entry = stub.dataset(dataset);
  const auto prepared = prepare_dataset(stub, entry);
  const auto path = config.output_path() / entry.name / "embeddings.bin";
  in_stage("stub_embed", entry.name, "-", [&] {
    std::filesystem::create_directories(path.parent_path());
    save_embeddings(path, prepared.embeddings);
  });
  return path;
}

}  // namespace bolero
