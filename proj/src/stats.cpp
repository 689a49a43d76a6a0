#include "bolero/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include <boost/math/special_functions/gamma.hpp>
#include <fmt/format.h>

#include "bolero/error.hpp"

namespace bolero {

// ---------------------------------------------------------------------------
// ScoreTable

void ScoreTable::add(const std::string& method, const std::string& dataset, std::uint64_t seed, double score,
                     Task task) {
  const auto [it, inserted] = tasks_.emplace(dataset, task);
  if (!inserted && it->second != task)
    throw Error(ErrorCode::InvalidArgument, fmt::format("dataset '{}' appears as both tasks", dataset));
  if (std::find(methods_.begin(), methods_.end(), method) == methods_.end()) methods_.push_back(method);
  if (!scores_[method][dataset].emplace(seed, score).second)
    throw Error(ErrorCode::InvalidArgument,
                fmt::format("duplicate score for method '{}', dataset '{}', seed {}", method, dataset, seed));
}

ScoreTable ScoreTable::from_records(std::span<const ScoreRecord> records) {
  ScoreTable t;
  for (const auto& r : records) t.add(r.method, r.dataset, r.seed, r.metric_value, r.task);
  return t;
}

std::vector<std::string> ScoreTable::datasets() const {
  std::vector<std::string> out;
  for (const auto& [name, task] : tasks_) out.push_back(name);
  return out;
}

std::vector<std::string> ScoreTable::datasets(Task task) const {
  std::vector<std::string> out;
  for (const auto& [name, t] : tasks_)
    if (t == task) out.push_back(name);
  return out;
}

Task ScoreTable::task(const std::string& dataset) const {
  const auto it = tasks_.find(dataset);
  if (it == tasks_.end()) throw Error(ErrorCode::MissingCell, fmt::format("unknown dataset '{}'", dataset));
  return it->second;
}

bool ScoreTable::has(const std::string& method, const std::string& dataset) const {
  const auto m = scores_.find(method);
  return m != scores_.end() && m->second.contains(dataset);
}

const std::map<std::uint64_t, double>& ScoreTable::runs(const std::string& method, const std::string& dataset) const {
  const auto m = scores_.find(method);
  if (m != scores_.end()) {
    const auto d = m->second.find(dataset);
    if (d != m->second.end() && !d->second.empty()) return d->second;
  }
  throw Error(ErrorCode::MissingCell, fmt::format("no runs for method '{}' on dataset '{}'", method, dataset));
}

// ---------------------------------------------------------------------------
// Aggregation and effects

double median(std::vector<double> values) {
  if (values.empty()) throw Error(ErrorCode::EmptyInput, "median of an empty set");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

std::map<std::string, std::map<std::string, double>> aggregate_median(const ScoreTable& scores) {
  std::map<std::string, std::map<std::string, double>> out;
  for (const auto& method : scores.methods())
    for (const auto& dataset : scores.datasets()) {
      std::vector<double> values;
      for (const auto& [seed, s] : scores.runs(method, dataset)) values.push_back(s);
      out[method][dataset] = median(std::move(values));
    }
  return out;
}

namespace {

double paired_effect(double a, double b, Task task) {
  return task == Task::Classification ? a - b : std::log(b / a);
}

double sample_variance(const std::vector<double>& x) {
  if (x.size() < 2) return 0.0;
  const double mean = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
  double ss = 0.0;
  for (double v : x) ss += (v - mean) * (v - mean);
  return ss / static_cast<double>(x.size() - 1);
}

}  // namespace

EffectTable pair_effects(const ScoreTable& scores, const std::string& method_a, const std::string& method_b, Task task) {
  EffectTable out{method_a, method_b, task, {}, {}, {}};
  for (const auto& dataset : scores.datasets(task)) {
    const bool has_a = scores.has(method_a, dataset);
    const bool has_b = scores.has(method_b, dataset);
    if (!has_a && !has_b) continue;
    if (has_a != has_b)
      throw Error(ErrorCode::CoverageMismatch, fmt::format("dataset '{}' is scored for '{}' but not '{}'", dataset,
                                                           has_a ? method_a : method_b, has_a ? method_b : method_a));
    const auto& runs_a = scores.runs(method_a, dataset);
    const auto& runs_b = scores.runs(method_b, dataset);
    std::set<std::uint64_t> seeds_a, seeds_b;
    for (const auto& [s, v] : runs_a) seeds_a.insert(s);
    for (const auto& [s, v] : runs_b) seeds_b.insert(s);
    if (seeds_a != seeds_b)
      throw Error(ErrorCode::CoverageMismatch,
                  fmt::format("seed sets of '{}' and '{}' differ on dataset '{}'", method_a, method_b, dataset));

    std::vector<double> va, vb, per_seed;
    for (const auto& [seed, a] : runs_a) {
      const double b = runs_b.at(seed);
      if (task == Task::Regression && (!(a > 0.0) || !(b > 0.0)))
        throw Error(ErrorCode::NonPositiveRMSE, fmt::format("non-positive RMSE on dataset '{}' seed {}", dataset, seed));
      va.push_back(a);
      vb.push_back(b);
      per_seed.push_back(paired_effect(a, b, task));
    }
    out.datasets.push_back(dataset);
    out.effects.push_back(paired_effect(median(va), median(vb), task));
    out.variances.push_back(std::max(sample_variance(per_seed) / static_cast<double>(per_seed.size()), kVarianceFloor));
  }
  if (out.datasets.empty())
    throw Error(ErrorCode::CoverageMismatch,
                fmt::format("'{}' and '{}' share no {} dataset", method_a, method_b, to_string(task)));
  return out;
}

// ---------------------------------------------------------------------------
// Wilcoxon signed-rank

namespace {

// Average ranks (1-based) of `values`, ties sharing the mean rank.
std::vector<double> average_ranks(const std::vector<double>& values) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(values.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && values[order[j + 1]] == values[order[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = avg;
    i = j + 1;
  }
  return ranks;
}

double normal_upper_tail(double z) { return 0.5 * std::erfc(z / std::sqrt(2.0)); }

}  // namespace

WilcoxonResult wilcoxon_signed_rank(std::span<const double> effects) {
  std::vector<double> magnitudes;
  std::vector<bool> positive;
  for (double e : effects) {
    if (e == 0.0) continue;
    magnitudes.push_back(std::abs(e));
    positive.push_back(e > 0.0);
  }
  const std::size_t n = magnitudes.size();
  if (n < 5) throw Error(ErrorCode::TooFewNonZero, fmt::format("{} non-zero effects; the test needs at least 5", n));

  const auto ranks = average_ranks(magnitudes);
  WilcoxonResult out;
  out.n = n;
  for (std::size_t i = 0; i < n; ++i)
    if (positive[i]) out.w_plus += ranks[i];

  if (n <= kWilcoxonExactMaxN) {
    // Average ranks are multiples of 1/2, so doubled ranks are integers and
    // the null distribution of 2 W+ is a subset-sum count over them.
    std::vector<std::size_t> doubled(n);
    std::size_t total = 0;
    for (std::size_t i = 0; i < n; ++i) {
      doubled[i] = static_cast<std::size_t>(std::llround(2.0 * ranks[i]));
      total += doubled[i];
    }
    std::vector<double> counts(total + 1, 0.0);
    counts[0] = 1.0;
    std::size_t reach = 0;
    for (std::size_t r : doubled) {
      for (std::size_t s = reach + 1; s-- > 0;)
        if (counts[s] != 0.0) counts[s + r] += counts[s];
      reach += r;
    }
    const auto observed = static_cast<std::size_t>(std::llround(2.0 * out.w_plus));
    double lower = 0.0, upper = 0.0;
    for (std::size_t s = 0; s <= total; ++s) {
      if (s <= observed) lower += counts[s];
      if (s >= observed) upper += counts[s];
    }
    const double patterns = std::ldexp(1.0, static_cast<int>(n));
    out.p_value = std::min(1.0, 2.0 * std::min(lower, upper) / patterns);
    out.exact = true;
    return out;
  }

  const double nn = static_cast<double>(n);
  const double mean = nn * (nn + 1.0) / 4.0;
  double tie_term = 0.0;
  {
    std::vector<double> sorted = magnitudes;
    std::sort(sorted.begin(), sorted.end());
    std::size_t i = 0;
    while (i < sorted.size()) {
      std::size_t j = i;
      while (j + 1 < sorted.size() && sorted[j + 1] == sorted[i]) ++j;
      const double t = static_cast<double>(j - i + 1);
      tie_term += t * t * t - t;
      i = j + 1;
    }
  }
  const double variance = nn * (nn + 1.0) * (2.0 * nn + 1.0) / 24.0 - tie_term / 48.0;
  const double z = std::max(0.0, std::abs(out.w_plus - mean) - 0.5) / std::sqrt(variance);
  out.p_value = std::min(1.0, 2.0 * normal_upper_tail(z));
  return out;
}

// ---------------------------------------------------------------------------
// Friedman

FriedmanResult friedman_test(const std::vector<std::vector<double>>& scores, bool higher_is_better) {
  const std::size_t n = scores.size();
  if (n < 2) throw Error(ErrorCode::IncompleteMatrix, fmt::format("Friedman test needs >= 2 datasets, got {}", n));
  const std::size_t k = scores.front().size();
  if (k < 3) throw Error(ErrorCode::IncompleteMatrix, fmt::format("Friedman test needs >= 3 methods, got {}", k));
  for (const auto& row : scores) {
    if (row.size() != k) throw Error(ErrorCode::IncompleteMatrix, "score matrix rows differ in length");
    for (double v : row)
      if (!std::isfinite(v)) throw Error(ErrorCode::IncompleteMatrix, "score matrix has a missing or non-finite cell");
  }

  std::vector<double> rank_sums(k, 0.0);
  double tie_term = 0.0;
  for (const auto& row : scores) {
    std::vector<double> keyed(row);
    if (higher_is_better)
      for (double& v : keyed) v = -v;  // rank 1 = best
    const auto ranks = average_ranks(keyed);
    for (std::size_t j = 0; j < k; ++j) rank_sums[j] += ranks[j];
    std::vector<double> sorted(keyed);
    std::sort(sorted.begin(), sorted.end());
    std::size_t i = 0;
    while (i < k) {
      std::size_t j = i;
      while (j + 1 < k && sorted[j + 1] == sorted[i]) ++j;
      const double t = static_cast<double>(j - i + 1);
      tie_term += t * t * t - t;
      i = j + 1;
    }
  }

  const double nn = static_cast<double>(n);
  const double kk = static_cast<double>(k);
  FriedmanResult out;
  for (double r : rank_sums) out.mean_ranks.push_back(r / nn);
  double sum_sq = 0.0;
  for (double r : rank_sums) sum_sq += r * r;
  const double numerator = 12.0 / (nn * kk * (kk + 1.0)) * sum_sq - 3.0 * nn * (kk + 1.0);
  const double correction = 1.0 - tie_term / (nn * (kk * kk * kk - kk));
  if (correction <= 0.0) {  // every dataset fully tied
    out.statistic = 0.0;
    out.p_value = 1.0;
    return out;
  }
  out.statistic = std::max(0.0, numerator / correction);
  out.p_value = out.statistic == 0.0 ? 1.0 : boost::math::gamma_q((kk - 1.0) / 2.0, out.statistic / 2.0);
  return out;
}

// ---------------------------------------------------------------------------
// Random-effects pooling

MetaAnalysisResult dersimonian_laird(std::span<const double> effects, std::span<const double> variances) {
  const std::size_t n = effects.size();
  if (n < 2 || variances.size() != n)
    throw Error(ErrorCode::DegenerateVariances, fmt::format("need >= 2 studies with one variance each, got {}", n));
  for (double v : variances)
    if (!(v > 0.0) || !std::isfinite(v))
      throw Error(ErrorCode::DegenerateVariances, fmt::format("variance {} is not positive and finite", v));

  MetaAnalysisResult out;
  double sw = 0.0, sw2 = 0.0, swd = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double w = 1.0 / variances[i];
    sw += w;
    sw2 += w * w;
    swd += w * effects[i];
  }
  out.fixed_effect = swd / sw;
  out.fixed_ci_half_width = kCiZ * std::sqrt(1.0 / sw);
  for (std::size_t i = 0; i < n; ++i) {
    const double d = effects[i] - out.fixed_effect;
    out.q += d * d / variances[i];
  }
  out.tau2 = std::max(0.0, (out.q - static_cast<double>(n - 1)) / (sw - sw2 / sw));

  double sws = 0.0, swsd = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double w = 1.0 / (variances[i] + out.tau2);
    out.weights.push_back(w);
    sws += w;
    swsd += w * effects[i];
  }
  out.pooled = swsd / sws;
  out.ci_half_width = kCiZ * std::sqrt(1.0 / sws);
  return out;
}

MetaAnalysisResult dersimonian_laird(const EffectTable& effects) {
  return dersimonian_laird(effects.effects, effects.variances);
}

double rmse_reduction_percent(double median_theta) { return 100.0 * (1.0 - std::exp(-median_theta)); }

double theta_from_reduction_percent(double percent) { return -std::log1p(-percent / 100.0); }

double win_credit(double score_a, double score_b, bool higher_is_better) {
  if (score_a == score_b) return 0.5;
  return (score_a > score_b) == higher_is_better ? 1.0 : 0.0;
}

// ---------------------------------------------------------------------------
// Leaderboard

Leaderboard leaderboard(const ScoreTable& scores, Task task, double alpha) {
  std::vector<std::string> methods;
  const auto datasets = scores.datasets(task);
  for (const auto& m : scores.methods())
    if (std::any_of(datasets.begin(), datasets.end(), [&](const auto& d) { return scores.has(m, d); }))
      methods.push_back(m);
  if (methods.size() < 2)
    throw Error(ErrorCode::InvalidArgument, fmt::format("need >= 2 methods with {} scores", to_string(task)));
  for (const auto& m : methods)
    for (const auto& d : datasets)
      if (!scores.has(m, d))
        throw Error(ErrorCode::CoverageMismatch, fmt::format("method '{}' has no score on dataset '{}'", m, d));

  const bool higher_is_better = task == Task::Classification;
  Leaderboard board;
  board.task = task;

  // Median-aggregated s(m, D).
  std::map<std::string, std::map<std::string, double>> s;
  for (const auto& m : methods)
    for (const auto& d : datasets) {
      std::vector<double> v;
      for (const auto& [seed, x] : scores.runs(m, d)) v.push_back(x);
      s[m][d] = median(std::move(v));
    }

  if (methods.size() >= 3 && datasets.size() >= 2) {
    std::vector<std::vector<double>> matrix;
    for (const auto& d : datasets) {
      std::vector<double> row;
      for (const auto& m : methods) row.push_back(s[m][d]);
      matrix.push_back(std::move(row));
    }
    board.friedman = friedman_test(matrix, higher_is_better);
  }

  std::map<std::string, double> credits;
  std::map<std::string, std::size_t> sig_wins;
  std::map<std::string, std::vector<double>> pooled_effects;  // per-dataset effects vs every opponent

  for (std::size_t i = 0; i < methods.size(); ++i)
    for (std::size_t j = i + 1; j < methods.size(); ++j) {
      PairwiseComparison pc;
      pc.method_a = methods[i];
      pc.method_b = methods[j];
      pc.task = task;
      pc.effects = pair_effects(scores, pc.method_a, pc.method_b, task);
      pc.datasets = pc.effects.datasets;
      for (const auto& d : pc.datasets) {
        pc.credit_a.push_back(win_credit(s[pc.method_a][d], s[pc.method_b][d], higher_is_better));
        pc.credit_b.push_back(win_credit(s[pc.method_b][d], s[pc.method_a][d], higher_is_better));
      }
      const double nd = static_cast<double>(pc.datasets.size());
      pc.win_rate_a = 100.0 * std::accumulate(pc.credit_a.begin(), pc.credit_a.end(), 0.0) / nd;
      pc.win_rate_b = 100.0 * std::accumulate(pc.credit_b.begin(), pc.credit_b.end(), 0.0) / nd;
      pc.median_effect = median(pc.effects.effects);
      if (pc.datasets.size() >= 2) pc.pooled = dersimonian_laird(pc.effects);
      else pc.pooled.pooled = pc.effects.effects.front();
      try {
        pc.p_value = wilcoxon_signed_rank(pc.effects.effects).p_value;
      } catch (const Error& e) {
        if (e.code() != ErrorCode::TooFewNonZero) throw;
      }
      if (pc.p_value && *pc.p_value < alpha) {
        pc.significant_for_a = pc.pooled.pooled > 0.0;
        pc.significant_for_b = pc.pooled.pooled < 0.0;
      }

      credits[pc.method_a] += std::accumulate(pc.credit_a.begin(), pc.credit_a.end(), 0.0);
      credits[pc.method_b] += std::accumulate(pc.credit_b.begin(), pc.credit_b.end(), 0.0);
      sig_wins[pc.method_a] += pc.significant_for_a ? 1 : 0;
      sig_wins[pc.method_b] += pc.significant_for_b ? 1 : 0;
      for (double e : pc.effects.effects) {
        pooled_effects[pc.method_a].push_back(e);
        pooled_effects[pc.method_b].push_back(-e);
      }
      board.pairs.push_back(std::move(pc));
    }

  const double comparisons = static_cast<double>((methods.size() - 1) * datasets.size());
  for (const auto& m : methods) {
    LeaderboardRow row;
    row.method = m;
    row.win_rate = 100.0 * credits[m] / comparisons;
    row.significant_wins = sig_wins[m];
    row.opponents = methods.size() - 1;
    const double med = median(pooled_effects[m]);
    row.median_effect = task == Task::Classification ? med : rmse_reduction_percent(med);
    board.rows.push_back(std::move(row));
  }
  std::stable_sort(board.rows.begin(), board.rows.end(), [](const LeaderboardRow& a, const LeaderboardRow& b) {
    if (a.win_rate != b.win_rate) return a.win_rate > b.win_rate;
    return a.significant_wins > b.significant_wins;
  });
  return board;
}

}  // namespace bolero
