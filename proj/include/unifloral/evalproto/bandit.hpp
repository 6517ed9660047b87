#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "unifloral/evalproto/score_table.hpp"
#include "unifloral/numerics/rng.hpp"

namespace unifloral {

inline const double kDefaultExploration = std::sqrt(2.0);

// UCB1 over K arms; each pull is one recorded episode of the mapped policy.
struct BanditState {
  std::vector<std::int64_t> counts;
  std::vector<double> sums;
  std::int64_t total_pulls = 0;
  double exploration_coef = kDefaultExploration;

  static BanditState create(std::size_t arms, double exploration_coef = kDefaultExploration);
  std::size_t arms() const { return counts.size(); }
  double mean(std::size_t arm) const { return sums[arm] / static_cast<double>(counts[arm]); }
};

// Unpulled arms first (lowest index), then argmax of
// mean_i + c * sqrt(ln t / n_i) with ties to the lowest index.
std::size_t ucb_select(const BanditState& b);

// Draws one of the mapped policy's R scores uniformly with replacement and
// records it. Throws ContractError for an arm outside [0, K).
double bandit_pull(BanditState& b, const ScoreTable& table, std::span<const std::size_t> arm_map,
                   std::size_t arm, Rng& rng);

// Argmax empirical mean over pulled arms, ties to the lowest index.
// Throws ContractError before the first pull.
std::size_t estimated_best(const BanditState& b);

}  // namespace unifloral
