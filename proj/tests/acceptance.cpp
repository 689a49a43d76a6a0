// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
// failure. Tolerances are fixed here and printed with each result.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <regex>
#include <sstream>
#include <string>
#include <vector>

#include <fmt/format.h>
#include <fmt/ranges.h>

#include "bolero/error.hpp"
#include "bolero/pipeline.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;
using namespace bolero;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  std::string name;
  std::function<Outcome()> check;
};

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

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

double median_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

Outcome gradient_check() {
  constexpr double kTol = 1e-4;
  const auto start = std::chrono::steady_clock::now();
  std::mt19937_64 rng(2024);
  double worst = 0.0;
  std::string worst_where;
  std::size_t entries = 0;
  constexpr int kGraphs = 24;
  for (int i = 0; i < kGraphs; ++i) {
    const std::size_t instances = 4 + rng() % 9;
    const std::size_t anchors = 2 + rng() % 7;  // at most 20 nodes
    const auto g = oracle::random_graph(rng(), instances, anchors, 0.3 + 0.4 * (rng() % 100) / 100.0);
    GraphHeadConfig cfg;
    cfg.hidden_dim = 4;
    cfg.num_heads = 1 + i % 2;
    cfg.num_layers = 1 + i % 3;
    cfg.task = i % 2 ? Task::Regression : Task::Classification;
    cfg.num_classes = 3;
    cfg.dropout = i % 3 == 0 ? 0.25 : 0.0;
    cfg.precision = Precision::F64;
    const std::size_t d = 2 + rng() % 3;
    const auto params = init_params<double>(cfg, g, d, rng());
    const auto z = oracle::random_embeddings(rng(), instances, d);
    const bool train_mode = cfg.dropout > 0;
    const auto r = oracle::finite_difference_check(params, g, z, cfg, train_mode, rng(), rng());
    entries += r.entries;
    if (r.max_relative_error > worst) {
      worst = r.max_relative_error;
      worst_where = fmt::format("graph {} tensor {}", i, r.worst_tensor);
    }
  }
  const double secs = seconds_since(start);
  return {worst < kTol && secs < 60.0,
          fmt::format("{} graphs, {} entries, max rel err {:.2e} at {} (tol {:.0e}), {:.1f}s (limit 60s)", kGraphs,
                      entries, worst, worst_where, kTol, secs)};
}

Outcome ppmi_oracle() {
  constexpr double kTol = 1e-12;
  std::mt19937_64 rng(51);
  double worst = 0.0;
  std::size_t pairs = 0, edges = 0;
  bool symmetric = true, non_negative = true, edges_match = true;
  for (int t = 0; t < 50; ++t) {
    const std::size_t rows = 2 + rng() % 29;
    const std::uint32_t k0 = 1 + rng() % 3, k1 = 1 + rng() % 2;
    std::vector<std::uint32_t> c0(rows), c1(rows);
    std::vector<double> x0(rows);
    for (std::size_t r = 0; r < rows; ++r) {
      c0[r] = static_cast<std::uint32_t>(rng() % k0);
      c1[r] = static_cast<std::uint32_t>(rng() % k1);
      x0[r] = static_cast<double>(rng() % 5);
    }
    const auto data = oracle::coded_table({c0, c1}, {x0}, std::vector<double>(rows, 0), 2);
    const auto anchors = build_anchors(data);
    if (anchors.size() > 6) return {false, fmt::format("table {} produced {} anchors", t, anchors.size())};
    const double lo = *std::min_element(x0.begin(), x0.end());
    const double hi = *std::max_element(x0.begin(), x0.end());
    std::vector<std::vector<bool>> occurs(rows, std::vector<bool>(anchors.size()));
    for (std::size_t r = 0; r < rows; ++r)
      for (const auto& a : anchors) {
        if (a.kind == AnchorKind::ContinuousFeature)
          occurs[r][a.index] = hi > lo && (x0[r] - lo) / (hi - lo) > 0.5;
        else
          occurs[r][a.index] = (a.column == 0 ? c0[r] : c1[r]) == a.code;
      }
    const auto expected = oracle::brute_force_ppmi(occurs);
    const auto stats = count_cooccurrence(data, anchors);
    for (std::uint32_t a = 0; a < anchors.size(); ++a)
      for (std::uint32_t b = 0; b < anchors.size(); ++b) {
        if (a == b) continue;
        const double got = ppmi(stats, a, b);
        symmetric = symmetric && got == ppmi(stats, b, a);
        non_negative = non_negative && got >= 0.0;
        worst = std::max(worst, std::abs(got - expected[a][b]));
        ++pairs;
      }
    const auto graph = build_graph(data);
    for (const auto& e : graph.aa_edges) {
      edges_match = edges_match && e.a < e.b && std::abs(e.weight - expected[e.a][e.b]) <= kTol;
      ++edges;
    }
  }
  return {worst <= kTol && symmetric && non_negative && edges_match,
          fmt::format("50 tables, {} ordered pairs, max |err| {:.1e} (tol {:.0e}), symmetric={}, non-negative={}, "
                      "{} stored edges match={}",
                      pairs, worst, kTol, symmetric, non_negative, edges, edges_match)};
}

Outcome wilcoxon_exactness() {
  constexpr double kExactTol = 1e-12, kApproxTol = 0.01;
  std::mt19937_64 rng(7);
  double worst_exact = 0.0;
  for (int i = 0; i < 200; ++i) {
    const std::size_t n = 5 + i % 8;
    std::vector<double> e(n);
    for (auto& x : e) {
      const double sign = rng() % 3 == 0 ? -1.0 : 1.0;
      // Half the vectors draw from a small grid so |effects| tie.
      x = sign * (i % 2 ? 1.0 + static_cast<double>(rng() % 4) : 0.01 + std::uniform_real_distribution<>(0, 1)(rng));
    }
    const auto r = wilcoxon_signed_rank(e);
    if (!r.exact) return {false, fmt::format("n={} not computed exactly", n)};
    worst_exact = std::max(worst_exact, std::abs(r.p_value - oracle::wilcoxon_enumerate(e)));
  }
  // n = 30: distinct magnitudes with structured sign patterns, and a tied grid.
  double worst_approx = 0.0;
  std::vector<std::vector<double>> cases;
  for (int pattern = 0; pattern < 6; ++pattern) {
    std::vector<double> e(30);
    for (int j = 0; j < 30; ++j) {
      const bool negative = pattern == 0   ? j % 2 == 0
                            : pattern == 1 ? j % 3 == 0
                            : pattern == 2 ? j < 8
                            : pattern == 3 ? j % 4 == 1
                            : pattern == 4 ? j >= 20
                                           : j % 5 == 0;
      e[j] = (negative ? -1.0 : 1.0) * (j + 1);
    }
    cases.push_back(e);
  }
  {
    std::vector<double> e(30);
    for (int j = 0; j < 30; ++j) e[j] = (j % 3 == 0 ? -1.0 : 1.0) * (1 + j % 5);
    cases.push_back(e);
  }
  for (const auto& e : cases) {
    const auto r = wilcoxon_signed_rank(e);
    if (r.exact) return {false, "n=30 unexpectedly used the exact path"};
    worst_approx = std::max(worst_approx, std::abs(r.p_value - oracle::wilcoxon_split_enumerate(e)));
  }
  const double anchor = wilcoxon_signed_rank(std::vector<double>{1, 2, 3, 4, 5}).p_value;
  return {worst_exact <= kExactTol && worst_approx <= kApproxTol && std::abs(anchor - 0.0625) <= kExactTol,
          fmt::format("n in [5,12] x200 max |err| {:.1e} (tol {:.0e}); n=30 x{} max |err| {:.4f} (tol {}); "
                      "five positives p={:.6f}",
                      worst_exact, kExactTol, cases.size(), worst_approx, kApproxTol, anchor)};
}

Outcome dersimonian_laird_oracle() {
  constexpr double kTol = 1e-9;
  double worst = 0.0;
  auto track = [&](double got, double want) { worst = std::max(worst, std::abs(got - want)); };

  const auto a = dersimonian_laird(std::vector<double>{1, 3}, std::vector<double>{1, 1});
  track(a.pooled, 2.0);
  track(a.tau2, 1.0);
  track(a.ci_half_width, 1.96);
  // d = {0, 2, 4}, v = 1: Q = 8, C = 3 - 1 = 2, tau2 = 3, weights 1/4 each.
  const auto b = dersimonian_laird(std::vector<double>{0, 2, 4}, std::vector<double>{1, 1, 1});
  track(b.pooled, 2.0);
  track(b.q, 8.0);
  track(b.tau2, 3.0);
  track(b.ci_half_width, 1.96 * std::sqrt(4.0 / 3.0));

  const std::vector<double> d{0.1, 0.2, 0.3, 0.4}, v{0.5, 0.4, 0.6, 0.5};
  const auto h = dersimonian_laird(d, v);
  double sw = 0, swd = 0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    sw += 1 / v[i];
    swd += d[i] / v[i];
  }
  track(h.pooled, swd / sw);
  track(h.ci_half_width, 1.96 / std::sqrt(sw));
  const auto same = dersimonian_laird(std::vector<double>{0.7, 0.7, 0.7}, std::vector<double>{0.1, 0.3, 0.2});
  track(same.pooled, 0.7);
  const bool homogeneous = h.tau2 == 0.0 && same.tau2 == 0.0;
  return {worst <= kTol && homogeneous,
          fmt::format("hand cases max |err| {:.1e} (tol {:.0e}); homogeneous tau2 = {} and {}", worst, kTol, h.tau2,
                      same.tau2)};
}

Outcome friedman_oracle() {
  constexpr double kTol = 1e-9;
  const std::vector<std::vector<double>> s{{.9, .8, .7}, {.6, .9, .5}, {.8, .7, .6}, {.7, .6, .8}};
  // Hand ranks per row (1 = best), then 12/(N k (k+1)) sum R^2 - 3 N (k+1).
  const std::vector<std::vector<double>> ranks{{1, 2, 3}, {2, 1, 3}, {1, 2, 3}, {2, 3, 1}};
  const double n = 4, k = 3;
  double sum_sq = 0;
  for (int j = 0; j < 3; ++j) {
    double rj = 0;
    for (const auto& row : ranks) rj += row[j];
    sum_sq += rj * rj;
  }
  const double stat = 12.0 / (n * k * (k + 1)) * sum_sq - 3 * n * (k + 1);
  const double p = std::exp(-stat / 2);  // chi-square survival with 2 dof
  const auto r = friedman_test(s, true);
  const auto flat = friedman_test(std::vector<std::vector<double>>(4, {0.5, 0.5, 0.5}), true);
  return {std::abs(r.statistic - stat) <= kTol && std::abs(r.p_value - p) <= kTol && flat.p_value == 1.0,
          fmt::format("statistic {:.12f} vs {:.12f}, p {:.12f} vs {:.12f} (tol {:.0e}); identical scores p={}",
                      r.statistic, stat, r.p_value, p, kTol, flat.p_value)};
}

Outcome effect_conversion() {
  const double half = rmse_reduction_percent(std::log(2.0));
  const double theta = theta_from_reduction_percent(20.3);
  return {std::abs(half - 50.0) <= 1e-12 && std::abs(theta - 0.227) <= 5e-4,
          fmt::format("ln 2 -> {:.15f}%; 20.3% -> theta {:.6f} (target 0.227, tol 5e-4)", half, theta)};
}

Outcome xor_graph_prior() {
  const auto start = std::chrono::steady_clock::now();
  auto raw = load_csv_text(oracle::xor_csv(500, 3), oracle::xor_schema());
  const auto split = make_splits(raw, 0);
  const auto data = apply_preprocess(split, fit_preprocess(split));
  const auto graph = build_graph(data);
  // Stub embeddings see only the noise columns, so they carry no label signal.
  const std::vector<std::string> label_columns{"a", "b"};
  const auto embeddings = stub_embed(data.drop_columns(label_columns), 16, 0);

  GraphHeadConfig head;
  head.hidden_dim = 32;
  head.num_layers = 2;
  head.num_heads = 2;
  head.dropout = 0.1;
  TrainConfig train;
  train.learning_rate = 0.01;
  train.max_epochs = 200;
  train.patience = 40;

  std::vector<double> head_f1, probe_f1;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    train.seed = seed;
    head_f1.push_back(train_run(data.with_fresh_label_counter(), graph, embeddings, head, train).result.test_metric);
  }
  for (std::uint64_t seed = 0; seed < 5; ++seed)
    probe_f1.push_back(oracle::linear_probe_macro_f1(data, stub_embed(data.drop_columns(label_columns), 16, seed)));
  const double secs = seconds_since(start);
  const double head_median = median_of(head_f1), probe_median = median_of(probe_f1);
  return {head_median >= 0.9 && probe_median <= 0.6 && secs < 300.0,
          fmt::format("graph head median macro-F1 {:.3f} (>= 0.9; per seed {:.3f}); linear probe median {:.3f} "
                      "(<= 0.6; max {:.3f}); lr 0.01; {:.1f}s (limit 300s)",
                      head_median, fmt::join(head_f1, " "), probe_median,
                      *std::max_element(probe_f1.begin(), probe_f1.end()), secs)};
}

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("bolero_acceptance_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

Outcome leakage_and_determinism() {
  const auto dir = scratch("runs");
  spit(dir / "xor.csv", oracle::xor_csv(200, 9));
  spit(dir / "xor.schema.json", oracle::xor_schema().to_json_text());
  std::string reg = "x,c,y\n";
  for (int i = 0; i < 80; ++i)
    reg += fmt::format("{},k{},{}\n", (i * 7) % 11, i % 4, 1.5 * ((i * 7) % 11) + (i % 4));
  spit(dir / "reg.csv", reg);
  spit(dir / "reg.schema.json",
       R"({"task":"regression","columns":[{"name":"x","kind":"continuous"},{"name":"c","kind":"categorical"},{"name":"y","kind":"target"}]})");

  RunConfig config;
  config.base_dir = dir;
  config.datasets = {{"xor", "xor.csv", "xor.schema.json", ""}, {"reg", "reg.csv", "reg.schema.json", ""}};
  config.seeds = {0, 1, 2};
  config.embedding.dim = 8;
  config.head.hidden_dim = 16;
  config.train.max_epochs = 30;
  config.workers = 4;

  const auto strip = [](const std::string& s) {
    return std::regex_replace(s, std::regex(R"("seconds":[^,}]*)"), R"("seconds":0)");
  };
  std::size_t runs = 0, leaks = 0;
  std::vector<std::string> outputs;
  for (std::size_t workers : {4u, 1u, 3u}) {
    config.workers = workers;
    for (const auto& r : cmd_run(config)) {
      ++runs;
      leaks += r.result.test_label_reads_before_eval;
    }
    outputs.push_back(strip(slurp(config.output_path() / "results.jsonl")));
  }
  const bool identical = outputs[0] == outputs[1] && outputs[1] == outputs[2] && !outputs[0].empty();
  fs::remove_all(dir);
  return {leaks == 0 && identical,
          fmt::format("{} runs, test-label reads before evaluation {}; 3 repeats (workers 4/1/3) byte-identical "
                      "excluding seconds: {}",
                      runs, leaks, identical)};
}

Outcome win_credit_conservation() {
  constexpr double kTol = 1e-9;
  const auto dir = scratch("compare");
  std::mt19937_64 rng(99);
  std::size_t pairs = 0, cells = 0, csv_rows = 0;
  double worst = 0.0;
  for (int run = 0; run < 20; ++run) {
    const std::size_t methods = 2 + rng() % 4, datasets = 2 + rng() % 7, seeds = 1 + rng() % 4;
    std::string jsonl;
    for (std::size_t m = 0; m < methods; ++m)
      for (std::size_t d = 0; d < datasets; ++d)
        for (std::uint64_t s = 0; s < seeds; ++s) {
          ScoreRecord r;
          r.method = fmt::format("M{}", m);
          r.dataset = fmt::format("D{}", d);
          r.seed = s;
          r.task = d % 3 == 0 ? Task::Regression : Task::Classification;
          r.metric_name = std::string(metric_name_for(r.task));
          // Coarse grid so medians tie across methods regularly.
          r.metric_value = 0.2 + 0.1 * static_cast<double>(rng() % 4);
          jsonl += to_jsonl_line(r) + "\n";
        }
    spit(dir / "scores.jsonl", jsonl);
    const auto out = cmd_compare({dir / "scores.jsonl"}, 0.05, dir / fmt::format("out{}", run));
    for (const auto& board : out.boards)
      for (const auto& p : board.pairs) {
        ++pairs;
        for (std::size_t i = 0; i < p.credit_a.size(); ++i) {
          ++cells;
          worst = std::max(worst, std::abs(p.credit_a[i] + p.credit_b[i] - 1.0));
        }
        worst = std::max(worst, std::abs(p.win_rate_a + p.win_rate_b - 100.0));
      }
    // The written pairwise table lists both orderings; their rates must also sum to 100.
    std::istringstream csv(slurp(dir / fmt::format("out{}", run) / "pairwise.csv"));
    std::string line;
    while (std::getline(csv, line)) {
      if (line.empty() || line[0] == '#' || line.rfind("method_a", 0) == 0) continue;
      std::vector<std::string> f;
      std::stringstream ls(line);
      for (std::string cell; std::getline(ls, cell, ',');) f.push_back(cell);
      worst = std::max(worst, std::abs(std::stod(f[4]) + std::stod(f[5]) - 100.0) > 1e-3 ? 1.0 : 0.0);
      ++csv_rows;
    }
  }
  fs::remove_all(dir);
  return {worst <= kTol && pairs > 0,
          fmt::format("20 compare runs, {} pairs, {} dataset cells, {} csv rows; max |credit sum - 1| or "
                      "|rate sum - 100| = {:.1e} (tol {:.0e})",
                      pairs, cells, csv_rows, worst, kTol)};
}

}  // namespace

int main() {
  const std::vector<Criterion> criteria{
      {"gradient-correctness", gradient_check},
      {"ppmi-oracle", ppmi_oracle},
      {"wilcoxon-exactness", wilcoxon_exactness},
      {"dersimonian-laird-oracle", dersimonian_laird_oracle},
      {"friedman-oracle", friedman_oracle},
      {"effect-conversion", effect_conversion},
      {"xor-graph-prior", xor_graph_prior},
      {"leakage-and-determinism", leakage_and_determinism},
      {"win-credit-conservation", win_credit_conservation},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    Outcome o;
    try {
      o = c.check();
    } catch (const std::exception& e) {
      o = {false, fmt::format("threw: {}", e.what())};
    }
    fmt::print("{} {}: {}\n", o.pass ? "PASS" : "FAIL", c.name, o.detail);
    std::fflush(stdout);
    if (!o.pass) ++failures;
  }
  fmt::print("{}/{} criteria passed\n", criteria.size() - failures, criteria.size());
  return failures == 0 ? 0 : 1;
}
