#include "bolero/report.hpp"

#include <algorithm>

#include <fmt/format.h>

namespace bolero {

namespace {

std::string header_line(std::string_view config_hash) {
  return config_hash.empty() ? std::string{} : fmt::format("# bolero config_hash={}\n", config_hash);
}

std::string effect_text(double value, Task task) {
  return task == Task::Classification ? fmt::format("{:+.3f}", value) : fmt::format("{:+.1f}%", value);
}

std::string p_text(const std::optional<double>& p) { return p ? fmt::format("{:.4g}", *p) : std::string("n/a"); }

// Left-aligned first column, right-aligned rest.
std::string aligned(const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> width;
  for (const auto& row : rows)
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (width.size() <= c) width.push_back(0);
      width[c] = std::max(width[c], row[c].size());
    }
  std::string out;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    std::string line;
    for (std::size_t c = 0; c < rows[r].size(); ++c) {
      if (c > 0) line += "  ";
      line += c == 0 ? fmt::format("{:<{}}", rows[r][c], width[c]) : fmt::format("{:>{}}", rows[r][c], width[c]);
    }
    while (!line.empty() && line.back() == ' ') line.pop_back();
    out += line + "\n";
    if (r == 0) {
      std::size_t total = 0;
      for (std::size_t w : width) total += w;
      out += std::string(total + 2 * (width.size() - 1), '-') + "\n";
    }
  }
  return out;
}

struct OrderedPair {
  const PairwiseComparison* pc;
  bool flipped;
};

std::vector<OrderedPair> ordered_pairs(const Leaderboard& board) {
  std::vector<OrderedPair> out;
  for (const auto& pc : board.pairs) {
    out.push_back({&pc, false});
    out.push_back({&pc, true});
  }
  return out;
}

std::string pairwise_rows(const Leaderboard& board) {
  std::string out;
  for (const auto& [pc, flipped] : ordered_pairs(board)) {
    const double sign = flipped ? -1.0 : 1.0;
    const double pooled = sign * pc->pooled.pooled;
    const double half = pc->pooled.ci_half_width;
    out += fmt::format("{},{},{},{},{:.4f},{:.4f},{:.6g},{:.6g},{:.6g},{:.6g},{:.6g},{},{}\n",
                       flipped ? pc->method_b : pc->method_a, flipped ? pc->method_a : pc->method_b,
                       to_string(board.task), pc->datasets.size(), flipped ? pc->win_rate_b : pc->win_rate_a,
                       flipped ? pc->win_rate_a : pc->win_rate_b, sign * pc->median_effect, pooled, pooled - half,
                       pooled + half, pc->pooled.tau2, pc->p_value ? fmt::format("{:.6g}", *pc->p_value) : "",
                       (flipped ? pc->significant_for_b : pc->significant_for_a) ? 1 : 0);
  }
  return out;
}

}  // namespace

std::string leaderboard_csv(std::span<const Leaderboard> boards, std::string_view config_hash) {
  std::string out = header_line(config_hash);
  out += "method,task,win_rate,sig_wins,median_effect\n";
  for (const auto& board : boards)
    for (const auto& r : board.rows)
      out += fmt::format("{},{},{:.4f},{}/{},{:.6g}\n", r.method, to_string(board.task), r.win_rate,
                         r.significant_wins, r.opponents, r.median_effect);
  return out;
}

std::string pairwise_csv(std::span<const Leaderboard> boards, std::string_view config_hash) {
  std::string out = header_line(config_hash);
  out += "method_a,method_b,task,datasets,win_rate_a,win_rate_b,median_effect,pooled_effect,ci_low,ci_high,tau2,"
         "wilcoxon_p,significant\n";
  for (const auto& board : boards) out += pairwise_rows(board);
  return out;
}

std::string leaderboard_text(const Leaderboard& board) {
  std::vector<std::vector<std::string>> rows{
      {"Method", "Win rate", "Sig. wins", board.task == Task::Classification ? "Median effect (F1)"
                                                                               : "Median effect (RMSE red.)"}};
  for (const auto& r : board.rows)
    rows.push_back({r.method, fmt::format("{:.1f}%", r.win_rate), fmt::format("{}/{}", r.significant_wins, r.opponents),
                    effect_text(r.median_effect, board.task)});
  return fmt::format("{} leaderboard\n", to_string(board.task)) + aligned(rows);
}

std::string pairwise_text(const Leaderboard& board) {
  std::vector<std::vector<std::string>> rows{{"A vs B", "Win A", "Pooled", "95% CI", "tau2", "p"}};
  for (const auto& [pc, flipped] : ordered_pairs(board)) {
    const double sign = flipped ? -1.0 : 1.0;
    const double pooled = sign * pc->pooled.pooled;
    const double half = pc->pooled.ci_half_width;
    rows.push_back({fmt::format("{} vs {}", flipped ? pc->method_b : pc->method_a, flipped ? pc->method_a : pc->method_b),
                    fmt::format("{:.1f}%", flipped ? pc->win_rate_b : pc->win_rate_a), fmt::format("{:+.4f}", pooled),
                    fmt::format("[{:+.4f}, {:+.4f}]", pooled - half, pooled + half),
                    fmt::format("{:.3g}", pc->pooled.tau2), p_text(pc->p_value)});
  }
  return fmt::format("{} pairwise ({})\n", to_string(board.task),
                     board.task == Task::Classification ? "delta macro-F1" : "log RMSE ratio") +
         aligned(rows);
}

std::string friedman_note(const Leaderboard& board, double alpha) {
  if (!board.friedman) return fmt::format("{}: Friedman test skipped (needs >= 3 methods and >= 2 datasets)\n",
                                          to_string(board.task));
  const auto& f = *board.friedman;
  if (f.p_value < alpha)
    return fmt::format("{}: Friedman chi2={:.4f} p={:.4g} < {}; pairwise analysis follows\n", to_string(board.task),
                       f.statistic, f.p_value, alpha);
  return fmt::format("{}: WARNING Friedman chi2={:.4f} p={:.4g} >= {}; pairwise results are reported but not "
                     "licensed by the omnibus test\n",
                     to_string(board.task), f.statistic, f.p_value, alpha);
}

}  // namespace bolero
