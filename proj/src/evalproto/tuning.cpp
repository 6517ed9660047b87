#include "unifloral/evalproto/tuning.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <thread>

#include "unifloral/numerics/errors.hpp"

namespace unifloral {

namespace {

// Runs fn(i) for i in [0, n) on up to `threads` workers, each taking a
// contiguous block. Results must be written to per-index slots.
template <typename Fn>
void parallel_for(std::size_t n, int threads, Fn fn) {
  const std::size_t workers = std::clamp<std::size_t>(static_cast<std::size_t>(std::max(threads, 1)), 1, std::max<std::size_t>(n, 1));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(workers);
  for (std::size_t w = 0; w < workers; ++w)
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = w * n / workers; i < (w + 1) * n / workers; ++i) fn(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

// Usable rows ordered by config id.
std::vector<std::size_t> canonical_rows(const ScoreTable& table) {
  auto rows = table.usable();
  std::stable_sort(rows.begin(), rows.end(), [&](std::size_t a, std::size_t b) {
    return table.config_ids[a] < table.config_ids[b];
  });
  return rows;
}

double percentile(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(pos);
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

void write_or_throw(std::ofstream& os, const std::string& path) {
  if (!os) throw IoError("failed writing " + path);
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

std::vector<std::int64_t> default_pull_schedule(int k) {
  std::vector<std::int64_t> s;
  for (std::int64_t n = 1; n <= 1024; n *= 2) s.push_back(n);
  s.push_back(k);
  std::sort(s.begin(), s.end());
  s.erase(std::unique(s.begin(), s.end()), s.end());
  return s;
}

std::vector<std::vector<double>> tuning_rollouts(const ScoreTable& table, int k,
                                                 const std::vector<std::int64_t>& schedule,
                                                 int bootstraps, std::uint64_t seed, int threads) {
  table.validate();
  const auto rows = canonical_rows(table);
  if (k < 1) throw ContractError("K must be at least 1");
  if (static_cast<std::size_t>(k) > rows.size())
    throw ContractError("K = " + std::to_string(k) + " exceeds the " + std::to_string(rows.size()) +
                        " usable policies");
  if (bootstraps < 1) throw ContractError("the number of bandit rollouts must be at least 1");
  if (schedule.empty() || schedule.front() < 1 || !std::is_sorted(schedule.begin(), schedule.end()) ||
      std::adjacent_find(schedule.begin(), schedule.end()) != schedule.end())
    throw ContractError("pull schedule must be strictly increasing positive counts");

  std::vector<double> means(table.num_policies(), 0.0);
  for (std::size_t p : rows) means[p] = table.true_mean(p);
  const std::int64_t horizon = schedule.back();
  std::vector<std::vector<double>> out(static_cast<std::size_t>(bootstraps));
  parallel_for(out.size(), threads, [&](std::size_t b) {
    Rng rng(seed, b);
    auto pool = rows;
    for (std::size_t i = 0; i < static_cast<std::size_t>(k); ++i)
      std::swap(pool[i], pool[i + rng.index(pool.size() - i)]);
    const std::vector<std::size_t> arm_map(pool.begin(), pool.begin() + k);
    auto bandit = BanditState::create(arm_map.size());
    std::vector<double> rec;
    std::size_t next = 0;
    for (std::int64_t t = 1; t <= horizon; ++t) {
      bandit_pull(bandit, table, arm_map, ucb_select(bandit), rng);
      if (t == schedule[next]) {
        rec.push_back(means[arm_map[estimated_best(bandit)]]);
        ++next;
      }
    }
    out[b] = std::move(rec);
  });
  return out;
}

TuningCurve simulate_tuning(const ScoreTable& table, int k, const std::vector<std::int64_t>& schedule,
                            int bootstraps, std::uint64_t seed, int threads) {
  const auto runs = tuning_rollouts(table, k, schedule, bootstraps, seed, threads);
  TuningCurve c;
  c.pulls = schedule;
  c.bootstraps = bootstraps;
  c.arms = k;
  const auto nb = static_cast<std::size_t>(bootstraps);
  Rng ci(mix_seed(seed, nb), 1);
  for (std::size_t s = 0; s < schedule.size(); ++s) {
    double sum = 0;
    for (const auto& r : runs) sum += r[s];
    c.mean_true_score.push_back(sum / static_cast<double>(nb));
    std::vector<double> resampled(kCiResamples);
    for (auto& m : resampled) {
      double acc = 0;
      for (std::size_t i = 0; i < nb; ++i) acc += runs[ci.index(nb)][s];
      m = acc / static_cast<double>(nb);
    }
    c.ci95_low.push_back(percentile(resampled, 0.025));
    c.ci95_high.push_back(percentile(resampled, 0.975));
  }
  return c;
}

void save_tuning_curve(const TuningCurve& c, const std::string& csv_path) {
  std::ofstream os(csv_path, std::ios::trunc);
  if (!os) throw IoError("cannot write " + csv_path);
  os << "pulls,mean,ci_low,ci_high\n";
  for (std::size_t i = 0; i < c.pulls.size(); ++i)
    os << c.pulls[i] << ',' << fmt(c.mean_true_score[i]) << ',' << fmt(c.ci95_low[i]) << ','
       << fmt(c.ci95_high[i]) << '\n';
  write_or_throw(os, csv_path);
}

std::vector<RankStats> policy_rank_summary(const ScoreTable& table) {
  table.validate();
  std::vector<RankStats> out;
  for (std::size_t p : table.usable()) {
    const auto& row = table.scores[p];
    RankStats s;
    s.policy = p;
    s.config_id = table.config_ids[p];
    s.mean = table.true_mean(p);
    double ss = 0;
    for (double v : row) ss += (v - s.mean) * (v - s.mean);
    s.std = row.size() > 1 ? std::sqrt(ss / static_cast<double>(row.size() - 1)) : 0.0;
    s.min = *std::min_element(row.begin(), row.end());
    s.max = *std::max_element(row.begin(), row.end());
    out.push_back(s);
  }
  std::stable_sort(out.begin(), out.end(), [](const RankStats& a, const RankStats& b) { return a.mean > b.mean; });
  return out;
}

void save_rank_summary(const std::vector<RankStats>& s, const std::string& csv_path) {
  std::ofstream os(csv_path, std::ios::trunc);
  if (!os) throw IoError("cannot write " + csv_path);
  os << "rank,policy,config_id,mean,std,min,max\n";
  for (std::size_t i = 0; i < s.size(); ++i)
    os << i + 1 << ',' << s[i].policy << ',' << s[i].config_id << ',' << fmt(s[i].mean) << ','
       << fmt(s[i].std) << ',' << fmt(s[i].min) << ',' << fmt(s[i].max) << '\n';
  write_or_throw(os, csv_path);
}

std::vector<std::size_t> automatic_distractors(const ScoreTable& table) {
  const auto ranks = policy_rank_summary(table);
  std::vector<double> means;
  for (const auto& r : ranks) means.push_back(r.mean);
  const double median = percentile(means, 0.5);
  const double best_max = ranks.front().max;
  std::vector<std::size_t> out;
  for (const auto& r : ranks)
    if (r.mean < median && r.max > best_max) out.push_back(r.policy);
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<double> distractor_analysis(const ScoreTable& table,
                                        const std::vector<std::size_t>& distractors, int max_pulls,
                                        int trials, std::uint64_t seed, int threads) {
  table.validate();
  const auto rows = canonical_rows(table);
  if (distractors.empty()) throw ContractError("distractor set is empty");
  std::vector<char> is_distractor(table.num_policies(), 0);
  for (std::size_t d : distractors) {
    if (d >= table.num_policies() || table.failed(d))
      throw ContractError("distractor " + std::to_string(d) + " is not a usable policy");
    is_distractor[d] = 1;
  }
  if (max_pulls < 1 || static_cast<std::size_t>(max_pulls) > rows.size())
    throw ContractError("max_pulls must lie within the enumeration phase (1 to the number of usable policies)");
  if (trials < 1) throw ContractError("trials must be at least 1");

  const auto n = static_cast<std::size_t>(max_pulls);
  std::vector<std::vector<char>> hits(static_cast<std::size_t>(trials));
  parallel_for(hits.size(), threads, [&](std::size_t t) {
    Rng rng(seed, t);
    auto order = rows;
    for (std::size_t i = order.size(); i-- > 1;) std::swap(order[i], order[rng.index(i + 1)]);
    std::vector<char> h(n);
    double best = -std::numeric_limits<double>::infinity();
    std::size_t best_policy = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const auto& row = table.scores[order[i]];
      const double v = row[rng.index(row.size())];
      if (v > best) {
        best = v;
        best_policy = order[i];
      }
      h[i] = is_distractor[best_policy];
    }
    hits[t] = std::move(h);
  });
  std::vector<double> p(n, 0.0);
  for (const auto& h : hits)
    for (std::size_t i = 0; i < n; ++i) p[i] += h[i];
  for (auto& x : p) x /= static_cast<double>(trials);
  return p;
}

void save_distractor_curve(const std::vector<double>& p, const std::string& csv_path) {
  std::ofstream os(csv_path, std::ios::trunc);
  if (!os) throw IoError("cannot write " + csv_path);
  os << "pulls,probability\n";
  for (std::size_t i = 0; i < p.size(); ++i) os << i + 1 << ',' << fmt(p[i]) << '\n';
  write_or_throw(os, csv_path);
}

}  // namespace unifloral
