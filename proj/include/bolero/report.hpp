#pragma once

#include <span>
#include <string>
#include <string_view>

#include "bolero/stats.hpp"

namespace bolero {

// Every report starts with a "# ... config_hash=<h>" comment line when a hash
// is given.

// method,task,win_rate,sig_wins,median_effect
std::string leaderboard_csv(std::span<const Leaderboard> boards, std::string_view config_hash = {});

// One row per ordered comparison (A over B) with win rates, median and pooled
// effects, CI, tau2 and the Wilcoxon p-value.
std::string pairwise_csv(std::span<const Leaderboard> boards, std::string_view config_hash = {});

// Aligned plain-text versions of the two tables above.
std::string leaderboard_text(const Leaderboard& board);
std::string pairwise_text(const Leaderboard& board);

// Friedman gate line: statistic, p-value and whether the pairwise analysis
// is licensed at `alpha`.
std::string friedman_note(const Leaderboard& board, double alpha);

}  // namespace bolero
