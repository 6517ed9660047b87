#pragma once

#include <string>
#include <vector>

#include "unifloral/evalproto/bandit.hpp"

namespace unifloral {

struct TuningCurve {
  std::vector<std::int64_t> pulls;
  std::vector<double> mean_true_score;
  std::vector<double> ci95_low;
  std::vector<double> ci95_high;
  int bootstraps = 0;  // B
  int arms = 0;        // K
};

// Powers of two from 1 to 1024 plus K, sorted and deduplicated.
std::vector<std::int64_t> default_pull_schedule(int k);

inline constexpr int kCiResamples = 2000;

// B bandit rollouts. Rollout b draws from Rng(seed, b): it subsamples K
// usable policies without replacement (partial Fisher-Yates over the usable
// rows ordered by config_id, so results depend on policy identity rather than
// row order), then pulls up to the largest scheduled N and records the true
// mean of estimated_best at each scheduled N. The reported mean is over
// rollouts; the interval is the 2.5 and 97.5 percentiles of kCiResamples
// bootstrap means drawn from Rng(mix_seed(seed, B), 1). Rollouts run on
// `threads` workers with results identical to a sequential run.
TuningCurve simulate_tuning(const ScoreTable& table, int k, const std::vector<std::int64_t>& schedule,
                            int bootstraps, std::uint64_t seed, int threads = 1);

// Per-rollout true means at each scheduled N (rows = rollouts), the raw
// material of simulate_tuning.
std::vector<std::vector<double>> tuning_rollouts(const ScoreTable& table, int k,
                                                 const std::vector<std::int64_t>& schedule,
                                                 int bootstraps, std::uint64_t seed, int threads = 1);

void save_tuning_curve(const TuningCurve& c, const std::string& csv_path);  // pulls,mean,ci_low,ci_high

struct RankStats {
  std::size_t policy = 0;
  std::string config_id;
  double mean = 0, std = 0, min = 0, max = 0;  // std with ddof = 1 (0 when R = 1)
};

// Usable policies sorted by mean descending, ties by row index.
std::vector<RankStats> policy_rank_summary(const ScoreTable& table);
void save_rank_summary(const std::vector<RankStats>& s, const std::string& csv_path);

// Usable policies whose mean is below the median of usable means but whose
// maximum exceeds the maximum of the best-mean policy.
std::vector<std::size_t> automatic_distractors(const ScoreTable& table);

// Probability that the estimated best arm lies in `distractors` after each of
// the first max_pulls pulls of the enumeration phase. Trial t draws a random
// ordering of the usable policies and the pulled scores from Rng(seed, t).
// max_pulls may not exceed the number of usable policies.
std::vector<double> distractor_analysis(const ScoreTable& table,
                                        const std::vector<std::size_t>& distractors, int max_pulls,
                                        int trials, std::uint64_t seed, int threads = 1);
void save_distractor_curve(const std::vector<double>& p, const std::string& csv_path);  // pulls,probability

}  // namespace unifloral
