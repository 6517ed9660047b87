#include "unifloral/evalproto/bandit.hpp"

#include "unifloral/numerics/errors.hpp"

namespace unifloral {

BanditState BanditState::create(std::size_t arms, double exploration_coef) {
  if (arms == 0) throw ContractError("bandit needs at least one arm");
  if (!(exploration_coef >= 0.0) || !std::isfinite(exploration_coef))
    throw ContractError("exploration coefficient must be finite and non-negative");
  BanditState b;
  b.counts.assign(arms, 0);
  b.sums.assign(arms, 0.0);
  b.exploration_coef = exploration_coef;
  return b;
}

std::size_t ucb_select(const BanditState& b) {
  if (b.arms() == 0) throw ContractError("bandit has no arms");
  for (std::size_t i = 0; i < b.arms(); ++i)
    if (b.counts[i] == 0) return i;
  const double log_t = std::log(static_cast<double>(b.total_pulls));
  std::size_t best = 0;
  double best_value = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < b.arms(); ++i) {
    const double v = b.mean(i) + b.exploration_coef * std::sqrt(log_t / static_cast<double>(b.counts[i]));
    if (v > best_value) {
      best_value = v;
      best = i;
    }
  }
  return best;
}

double bandit_pull(BanditState& b, const ScoreTable& table, std::span<const std::size_t> arm_map,
                   std::size_t arm, Rng& rng) {
  if (arm >= b.arms()) throw ContractError("bandit arm " + std::to_string(arm) + " is out of range");
  if (arm_map.size() != b.arms()) throw ContractError("arm map size differs from the number of arms");
  const auto& row = table.scores.at(arm_map[arm]);
  const double v = row[rng.index(row.size())];
  ++b.counts[arm];
  b.sums[arm] += v;
  ++b.total_pulls;
  return v;
}

std::size_t estimated_best(const BanditState& b) {
  if (b.total_pulls == 0) throw ContractError("estimated_best before any pull");
  std::size_t best = 0;
  double best_mean = -std::numeric_limits<double>::infinity();
  bool found = false;
  for (std::size_t i = 0; i < b.arms(); ++i) {
    if (b.counts[i] == 0) continue;
    if (!found || b.mean(i) > best_mean) {
      best_mean = b.mean(i);
      best = i;
      found = true;
    }
  }
  return best;
}

}  // namespace unifloral
