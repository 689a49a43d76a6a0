#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <regex>
#include <sstream>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "bolero/error.hpp"
#include "bolero/pipeline.hpp"
#include "bolero/report.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;

namespace bolero {
namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void spit(const fs::path& p, const std::string& text) {
  fs::create_directories(p.parent_path());
  std::ofstream(p, std::ios::binary) << text;
}

std::string strip_seconds(const std::string& jsonl) {
  return std::regex_replace(jsonl, std::regex(R"("seconds":[^,}]*)"), R"("seconds":0)");
}

class PipelineTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("bolero_pipeline_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
    spit(dir_ / "xor.csv", oracle::xor_csv(120, 4));
    spit(dir_ / "xor.schema.json", oracle::xor_schema().to_json_text());
    std::string reg = "x,c,y\n";
    for (int i = 0; i < 60; ++i) reg += std::to_string(i % 7) + ",k" + std::to_string(i % 3) + "," + std::to_string(i % 7 + 2 * (i % 3)) + "\n";
    spit(dir_ / "reg.csv", reg);
    spit(dir_ / "reg.schema.json",
         R"({"task":"regression","columns":[{"name":"x","kind":"continuous"},{"name":"c","kind":"categorical"},{"name":"y","kind":"target"}]})");
  }
  void TearDown() override { fs::remove_all(dir_); }

  RunConfig config() const {
    RunConfig c;
    c.base_dir = dir_;
    c.output_dir = "out";
    c.seeds = {0, 1};
    c.datasets = {{"xor", "xor.csv", "xor.schema.json", ""}, {"reg", "reg.csv", "reg.schema.json", ""}};
    c.embedding.dim = 8;
    c.head.hidden_dim = 8;
    c.train.max_epochs = 6;
    c.workers = 3;
    return c;
  }

  fs::path dir_;
};

TEST_F(PipelineTest, ConfigRoundTripsLosslessly) {
  auto c = config();
  c.train.learning_rate = 0.0123456789012345;
  c.graph.occurrence_threshold = 0.3;
  c.head.precision = Precision::F64;
  c.embedding.source = EmbeddingSource::File;
  c.datasets[0].embedding = "e.bin";
  const auto back = RunConfig::from_json_text(c.to_json_text(), dir_);
  EXPECT_EQ(back, c);
  EXPECT_EQ(back.to_json_text(), c.to_json_text());
  EXPECT_EQ(back.hash(), c.hash());
  EXPECT_EQ(back.train.learning_rate, c.train.learning_rate);
}

TEST_F(PipelineTest, ConfigValidation) {
  auto c = config();
  EXPECT_NO_THROW(c.validate());
  c.datasets[0].schema = "missing.json";
  try {
    c.validate();
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ConfigError);
  }
  EXPECT_THROW(RunConfig::from_json_text(R"({"datasets":[], "bogus": 1})"), Error);
  EXPECT_THROW(RunConfig::from_json_text(R"({"seeds":[0]})"), Error);
}

TEST_F(PipelineTest, MissingSchemaFailsBeforeAnyWork) {
  auto c = config();
  c.datasets[1].schema = "nope.schema.json";
  EXPECT_THROW(cmd_run(c), Error);
  EXPECT_FALSE(fs::exists(dir_ / "out"));
}

TEST_F(PipelineTest, RunWritesOneLinePerSeedAndIsDeterministic) {
  const auto c = config();
  const auto runs = cmd_run(c);
  ASSERT_EQ(runs.size(), 4u);
  const auto first = slurp(dir_ / "out" / "results.jsonl");
  const auto records = parse_jsonl(first);
  ASSERT_EQ(records.size(), 4u);
  EXPECT_EQ(records[0].dataset, "xor");
  EXPECT_EQ(records[0].seed, 0u);
  EXPECT_EQ(records[3].dataset, "reg");
  EXPECT_EQ(records[3].metric_name, "rmse");
  for (const auto& r : records) EXPECT_EQ(r.config_hash, c.hash());
  for (const auto& r : runs) {
    EXPECT_EQ(r.result.test_label_reads_before_eval, 0u);
    EXPECT_TRUE(fs::exists(r.checkpoint));
    EXPECT_EQ(load_checkpoint(r.checkpoint).config_hash, c.hash());
  }
  auto serial = c;
  serial.workers = 1;
  cmd_run(serial);
  EXPECT_EQ(strip_seconds(slurp(dir_ / "out" / "results.jsonl")), strip_seconds(first));
}

TEST_F(PipelineTest, StageErrorsNameDatasetAndSeed) {
  spit(dir_ / "tiny.csv", "x,y\n1,a\n2,b\n");
  spit(dir_ / "tiny.schema.json",
       R"({"task":"classification","columns":[{"name":"x","kind":"continuous"},{"name":"y","kind":"target"}]})");
  auto c = config();
  c.datasets = {{"tiny", "tiny.csv", "tiny.schema.json", ""}};
  try {
    cmd_run(c);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::TooFewRows);
    EXPECT_NE(std::string(e.what()).find("stage=split dataset=tiny"), std::string::npos) << e.what();
  }
}

TEST_F(PipelineTest, FileEmbeddingsFromStubEmbed) {
  auto c = config();
  const auto path = cmd_stub_embed(c, "xor");
  EXPECT_EQ(path, dir_ / "out" / "xor" / "embeddings.bin");
  c.embedding.source = EmbeddingSource::File;
  c.datasets = {{"xor", "xor.csv", "xor.schema.json", "out/xor/embeddings.bin"}};
  const auto from_file = prepare_dataset(c, c.datasets[0]);
  auto stub = c;
  stub.embedding.source = EmbeddingSource::Stub;
  EXPECT_EQ(from_file.embeddings, prepare_dataset(stub, stub.datasets[0]).embeddings);
}

TEST_F(PipelineTest, ExportGraphIsStableJson) {
  const auto c = config();
  const auto path = cmd_export_graph(c, "xor");
  const auto first = slurp(path);
  EXPECT_EQ(slurp(cmd_export_graph(c, "xor")), first);
  const auto j = nlohmann::json::parse(first);
  EXPECT_EQ(j.at("config_hash"), c.hash());
  EXPECT_EQ(j.at("num_instances"), 120);
  for (const char* key : {"anchors", "ia_edges", "aa_edges"}) EXPECT_TRUE(j.at(key).is_array());
  for (const auto& a : j.at("anchors")) EXPECT_TRUE(a.contains("id") && a.contains("kind") && a.contains("column"));
}

TEST_F(PipelineTest, ExportGraphContinuousOnly) {
  spit(dir_ / "cont.csv", "u,v,y\n1,2,a\n2,3,b\n3,1,a\n4,4,b\n5,5,a\n6,0,b\n7,2,a\n8,9,b\n9,1,a\n0,3,b\n");
  spit(dir_ / "cont.schema.json",
       R"({"task":"classification","columns":[{"name":"u","kind":"continuous"},{"name":"v","kind":"continuous"},{"name":"y","kind":"target"}]})");
  auto c = config();
  c.datasets = {{"cont", "cont.csv", "cont.schema.json", ""}};
  const auto j = nlohmann::json::parse(slurp(cmd_export_graph(c, "cont")));
  ASSERT_EQ(j.at("anchors").size(), 2u);
  for (const auto& a : j.at("anchors")) EXPECT_EQ(a.at("kind"), "continuous");
}

std::string score_lines(const std::string& method, int datasets, double offset, Task task = Task::Classification) {
  std::string out;
  for (int d = 0; d < datasets; ++d)
    for (std::uint64_t s = 0; s < 3; ++s) {
      ScoreRecord r;
      r.dataset = "d" + std::to_string(d);
      r.method = method;
      r.seed = s;
      r.task = task;
      r.metric_name = std::string(metric_name_for(task));
      r.metric_value = 0.5 + offset + 0.01 * d + 0.001 * static_cast<double>(s);
      out += to_jsonl_line(r) + "\n";
    }
  return out;
}

TEST_F(PipelineTest, CompareTwoFilesTenDatasets) {
  spit(dir_ / "a.jsonl", score_lines("A", 10, 0.05));
  spit(dir_ / "b.jsonl", score_lines("B", 10, 0.0));
  const auto out = cmd_compare({dir_ / "a.jsonl", dir_ / "b.jsonl"}, 0.05, dir_ / "cmp");
  ASSERT_EQ(out.boards.size(), 1u);
  ASSERT_EQ(out.boards[0].rows.size(), 2u);
  EXPECT_EQ(out.boards[0].rows[0].method, "A");
  EXPECT_EQ(out.boards[0].rows[0].significant_wins, 1u);
  for (const char* f : {"leaderboard.csv", "pairwise.csv", "report.txt"}) {
    const auto text = slurp(dir_ / "cmp" / f);
    EXPECT_EQ(text.rfind("# bolero config_hash=", 0), 0u) << f;
  }
  const auto csv = slurp(dir_ / "cmp" / "leaderboard.csv");
  EXPECT_NE(csv.find("A,classification,100.0000,1/1,"), std::string::npos) << csv;
}

TEST_F(PipelineTest, CompareDisjointDatasets) {
  spit(dir_ / "a.jsonl", score_lines("A", 3, 0.0));
  std::string b = score_lines("B", 3, 0.0);
  b = std::regex_replace(b, std::regex("\"d([0-9])\""), "\"other$1\"");
  spit(dir_ / "b.jsonl", b);
  try {
    cmd_compare({dir_ / "a.jsonl", dir_ / "b.jsonl"}, 0.05, dir_ / "cmp");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::CoverageMismatch);
  }
}

TEST_F(PipelineTest, CompareThreeMethodsMatchesStatsModule) {
  spit(dir_ / "s.jsonl", score_lines("A", 8, 0.2) + score_lines("B", 8, 0.0) + score_lines("C", 8, 0.001));
  const auto out = cmd_compare({dir_ / "s.jsonl"}, 0.05, dir_ / "cmp");
  const auto records = read_jsonl(dir_ / "s.jsonl");
  const auto expected = leaderboard(ScoreTable::from_records(records), Task::Classification, 0.05);
  ASSERT_EQ(out.boards[0].rows.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(out.boards[0].rows[i].method, expected.rows[i].method);
    EXPECT_EQ(out.boards[0].rows[i].significant_wins, expected.rows[i].significant_wins);
  }
  EXPECT_EQ(out.boards[0].rows[0].method, "A");
  EXPECT_EQ(out.boards[0].rows[0].significant_wins, 2u);
  EXPECT_NE(out.notes[0].find("Friedman"), std::string::npos);
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(BOLERO_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}

TEST_F(PipelineTest, CliExitCodes) {
  spit(dir_ / "cfg.json", config().to_json_text());
  EXPECT_EQ(run_cli("validate-config " + (dir_ / "cfg.json").string()), 0);
  EXPECT_EQ(run_cli("export-graph " + (dir_ / "cfg.json").string() + " --dataset xor"), 0);
  EXPECT_TRUE(fs::exists(dir_ / "out" / "xor" / "graph.json"));
  EXPECT_EQ(run_cli("run " + (dir_ / "cfg.json").string()), 0);
  EXPECT_EQ(parse_jsonl(slurp(dir_ / "out" / "results.jsonl")).size(), 4u);

  EXPECT_NE(run_cli("compare " + (dir_ / "out" / "results.jsonl").string() + " --out " + (dir_ / "cmp").string()), 0);

  auto bad = config();
  bad.datasets[0].csv = "absent.csv";
  spit(dir_ / "bad.json", bad.to_json_text());
  EXPECT_NE(run_cli("validate-config " + (dir_ / "bad.json").string()), 0);
  EXPECT_NE(run_cli("frobnicate"), 0);
}

}  // namespace
}  // namespace bolero
