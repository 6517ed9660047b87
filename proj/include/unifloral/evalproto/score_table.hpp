#pragma once

#include <string>
#include <vector>

#include <json.hpp>

namespace unifloral {

inline constexpr int kScoreTableFormatVersion = 1;

// P x R normalized episodic returns, one row per trained policy. A row whose
// training failed holds only NaN and is excluded from every analysis.
struct ScoreTable {
  std::string method_name;
  std::string env_name;
  std::vector<std::string> config_ids;
  std::vector<std::vector<double>> scores;
  nlohmann::json extra = nlohmann::json::object();  // free-form provenance for the sidecar

  std::size_t num_policies() const { return scores.size(); }
  std::size_t num_episodes() const { return scores.empty() ? 0 : scores[0].size(); }
  bool failed(std::size_t p) const;
  std::vector<std::size_t> usable() const;  // indices of non-failed rows
  std::size_t failed_count() const { return num_policies() - usable().size(); }
  double true_mean(std::size_t p) const;
  // Throws ContractError: P, R >= 1, rectangular, ids unique, every row either
  // all finite or all NaN, at least one usable row.
  void validate() const;

  friend bool operator==(const ScoreTable& a, const ScoreTable& b);
};

// CSV with header method,env,config_id,episode_0..episode_{R-1}; values are
// written with 17 significant digits. The sidecar (same path with the
// extension replaced by .json) records the format version, shape, failed rows
// and `extra`.
void save_score_table(const ScoreTable& t, const std::string& csv_path);
ScoreTable load_score_table(const std::string& csv_path);
std::string sidecar_path(const std::string& csv_path);

}  // namespace unifloral
