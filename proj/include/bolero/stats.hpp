#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "bolero/dataset.hpp"
#include "bolero/records.hpp"

namespace bolero {

// Run-level scores keyed by (method, dataset, seed), with one task per dataset.
class ScoreTable {
 public:
  // Throws InvalidArgument on a duplicate (method, dataset, seed) or a
  // dataset whose task changes between entries.
  void add(const std::string& method, const std::string& dataset, std::uint64_t seed, double score, Task task);
  static ScoreTable from_records(std::span<const ScoreRecord> records);

  // Methods in first-seen order; datasets sorted by name.
  const std::vector<std::string>& methods() const { return methods_; }
  std::vector<std::string> datasets() const;
  std::vector<std::string> datasets(Task task) const;
  Task task(const std::string& dataset) const;
  bool has(const std::string& method, const std::string& dataset) const;
  // Throws MissingCell when the (method, dataset) cell has no run.
  const std::map<std::uint64_t, double>& runs(const std::string& method, const std::string& dataset) const;

 private:
  std::vector<std::string> methods_;
  std::map<std::string, Task> tasks_;
  std::map<std::string, std::map<std::string, std::map<std::uint64_t, double>>> scores_;
};

double median(std::vector<double> values);

// s(m, D): median over seeds for every (method, dataset) in the table.
// Throws MissingCell if any method lacks a dataset that another covers.
std::map<std::string, std::map<std::string, double>> aggregate_median(const ScoreTable& scores);

// Paired per-dataset effects of A over B.
//  Classification: delta_D = s(A,D) - s(B,D).
//  Regression:     theta_D = ln(s(B,D) / s(A,D)), positive when A has lower RMSE.
// variance_D = sample variance of per-seed paired effects / seed count,
// floored at 1e-12.
struct EffectTable {
  std::string method_a;
  std::string method_b;
  Task task = Task::Classification;
  std::vector<std::string> datasets;
  std::vector<double> effects;
  std::vector<double> variances;
};

inline constexpr double kVarianceFloor = 1e-12;

// Restricted to datasets of `task`. Throws CoverageMismatch when A and B do
// not cover the same datasets or seeds, NonPositiveRMSE on scores <= 0.
EffectTable pair_effects(const ScoreTable& scores, const std::string& method_a, const std::string& method_b, Task task);

struct WilcoxonResult {
  double p_value = 1.0;
  double w_plus = 0.0;   // sum of ranks of positive effects
  std::size_t n = 0;     // non-zero effects
  bool exact = false;
};

inline constexpr std::size_t kWilcoxonExactMaxN = 25;

// Two-sided signed-rank test. Zeros are dropped and tied |effects| share
// average ranks. Up to 25 non-zero effects the null distribution is computed
// exactly over all sign assignments; beyond that a normal approximation with
// tie-corrected variance and continuity correction is used.
// p = min(1, 2 min(P(W+ <= w), P(W+ >= w))). Throws TooFewNonZero if n < 5.
WilcoxonResult wilcoxon_signed_rank(std::span<const double> effects);

struct FriedmanResult {
  double statistic = 0.0;
  double p_value = 1.0;
  std::vector<double> mean_ranks;  // rank 1 = best
};

// scores[d][m]: score of method m on dataset d. Ranks within each dataset use
// average ranks for ties; statistic includes the tie correction and p comes
// from chi-square with k - 1 degrees of freedom.
FriedmanResult friedman_test(const std::vector<std::vector<double>>& scores, bool higher_is_better);

struct MetaAnalysisResult {
  double pooled = 0.0;
  double ci_half_width = 0.0;
  double tau2 = 0.0;
  double q = 0.0;
  std::vector<double> weights;  // random-effects weights 1 / (v_i + tau2)
  double fixed_effect = 0.0;
  double fixed_ci_half_width = 0.0;
};

inline constexpr double kCiZ = 1.96;

// DerSimonian-Laird random-effects pooling. Throws DegenerateVariances
// with fewer than two studies or any variance that is not positive and finite.
MetaAnalysisResult dersimonian_laird(std::span<const double> effects, std::span<const double> variances);
MetaAnalysisResult dersimonian_laird(const EffectTable& effects);

// 100 (1 - e^{-theta}) and its inverse.
double rmse_reduction_percent(double median_theta);
double theta_from_reduction_percent(double percent);

// Win credit of a over b on one dataset: 1 win, 0.5 tie, 0 loss.
double win_credit(double score_a, double score_b, bool higher_is_better);

struct PairwiseComparison {
  std::string method_a;
  std::string method_b;
  Task task = Task::Classification;
  std::vector<std::string> datasets;
  std::vector<double> credit_a;  // per dataset
  std::vector<double> credit_b;
  double win_rate_a = 0.0;  // percent
  double win_rate_b = 0.0;
  EffectTable effects;
  double median_effect = 0.0;  // raw delta or theta
  MetaAnalysisResult pooled;
  std::optional<double> p_value;  // empty when too few non-zero effects
  bool significant_for_a = false;
  bool significant_for_b = false;
};

struct LeaderboardRow {
  std::string method;
  double win_rate = 0.0;  // percent
  std::size_t significant_wins = 0;
  std::size_t opponents = 0;
  double median_effect = 0.0;  // F1 points, or % RMSE reduction for regression
};

struct Leaderboard {
  Task task = Task::Classification;
  std::vector<LeaderboardRow> rows;  // by win rate, descending
  std::vector<PairwiseComparison> pairs;  // unordered pairs in method order
  std::optional<FriedmanResult> friedman;  // present when >= 3 methods
};

// Pairwise accounting over the datasets of `task`.
Leaderboard leaderboard(const ScoreTable& scores, Task task, double alpha = 0.05);

}  // namespace bolero
