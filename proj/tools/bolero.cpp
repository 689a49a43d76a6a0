// bolero: command-line front end for training runs and score comparison.

#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "bolero/error.hpp"
#include "bolero/pipeline.hpp"
#include "bolero/report.hpp"
#include "bolero/run_config.hpp"

namespace {

std::vector<std::string> selected_datasets(const bolero::RunConfig& config, const std::string& only) {
  if (!only.empty()) return {config.dataset(only).name};
  std::vector<std::string> names;
  for (const auto& d : config.datasets) names.push_back(d.name);
  return names;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Static bipartite graph head over frozen tabular embeddings, plus multi-dataset comparison."};
  app.require_subcommand(1);

  std::string config_path;
  std::string only_dataset;

  auto* run = app.add_subcommand("run", "Train the graph head on every dataset and seed in a config; writes "
                                        "results.jsonl and checkpoints under output_dir");
  run->add_option("config", config_path, "Run config (JSON)")->required()->check(CLI::ExistingFile);

  std::vector<std::string> score_files;
  double alpha = 0.05;
  std::string compare_out = ".";
  auto* compare = app.add_subcommand("compare", "Friedman gate, pairwise Wilcoxon and random-effects pooling over "
                                                "JSONL score files; writes leaderboard.csv, pairwise.csv, report.txt");
  compare->add_option("scores", score_files, "JSONL score files")->required()->check(CLI::ExistingFile);
  compare->add_option("--alpha", alpha, "Significance level")->capture_default_str();
  compare->add_option("--out", compare_out, "Output directory")->capture_default_str();

  auto* export_graph = app.add_subcommand("export-graph", "Write <output_dir>/<dataset>/graph.json");
  export_graph->add_option("config", config_path, "Run config (JSON)")->required()->check(CLI::ExistingFile);
  export_graph->add_option("--dataset", only_dataset, "Only this dataset (default: all)");

  auto* stub = app.add_subcommand("stub-embed", "Write <output_dir>/<dataset>/embeddings.bin from the hashed-token "
                                                "stub encoder");
  stub->add_option("config", config_path, "Run config (JSON)")->required()->check(CLI::ExistingFile);
  stub->add_option("--dataset", only_dataset, "Only this dataset (default: all)");

  auto* validate = app.add_subcommand("validate-config", "Check a run config and print its hash");
  validate->add_option("config", config_path, "Run config (JSON)")->required()->check(CLI::ExistingFile);

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) {
      const auto config = bolero::RunConfig::load(config_path);
      const auto runs = bolero::cmd_run(config);
      for (const auto& r : runs)
        fmt::print("{} seed={} {}={:.6f} epochs={} ({:.1f}s)\n", r.record.dataset, r.record.seed, r.record.metric_name,
                   r.record.metric_value, r.record.epochs, r.record.seconds);
      fmt::print("wrote {}\n", (config.output_path() / "results.jsonl").string());
    } else if (compare->parsed()) {
      std::vector<std::filesystem::path> paths(score_files.begin(), score_files.end());
      const auto out = bolero::cmd_compare(paths, alpha, compare_out);
      for (std::size_t i = 0; i < out.boards.size(); ++i) {
        if (out.notes[i].find("WARNING") != std::string::npos) fmt::print(stderr, "{}", out.notes[i]);
        else fmt::print("{}", out.notes[i]);
        fmt::print("{}\n", bolero::leaderboard_text(out.boards[i]));
      }
      fmt::print("wrote reports to {}\n", out.out_dir.string());
    } else if (export_graph->parsed()) {
      const auto config = bolero::RunConfig::load(config_path);
      for (const auto& name : selected_datasets(config, only_dataset))
        fmt::print("wrote {}\n", bolero::cmd_export_graph(config, name).string());
    } else if (stub->parsed()) {
      const auto config = bolero::RunConfig::load(config_path);
      for (const auto& name : selected_datasets(config, only_dataset))
        fmt::print("wrote {}\n", bolero::cmd_stub_embed(config, name).string());
    } else if (validate->parsed()) {
      const auto config = bolero::RunConfig::load(config_path);
      config.validate();
      fmt::print("ok config_hash={}\n", config.hash());
    }
  } catch (const std::exception& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return 1;
  }
  return 0;
}
