// Acceptance suite: one PASS/FAIL line per criterion. Tolerances and run
// budgets are pinned below.

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>

#include "support/bandit_oracle.hpp"
#include "support/checks.hpp"
#include "support/tables.hpp"
#include "unifloral/cli/commands.hpp"
#include "unifloral/core/trainer.hpp"
#include "unifloral/evalproto/tuning.hpp"
#include "unifloral/presets/presets.hpp"

using namespace unifloral;
namespace fs = std::filesystem;

namespace {

// 1: gradients
constexpr int kGradientSeeds = 20;
constexpr double kGradientTolerance = 1e-4;
// 2: preset oracles
constexpr int kOracleBatches = 10;
constexpr double kOracleTolerance = 1e-6;
// 3: expectile identity
constexpr int kExpectileFixtures = 20;
constexpr double kExpectileTolerance = 1e-7;
// 4: bandit convergence
constexpr int kBanditK = 8;
constexpr int kBanditB = 500;
constexpr double kBanditBestTolerance = 0.02;    // relative to 0.8 at N = 512
constexpr double kBanditOracleTolerance = 0.005;  // relative, every scheduled N
constexpr int kFreeStreamRollouts = 20000;
// 5: distractors
constexpr int kDistractorTrials = 100000;
// 6: end-to-end training
constexpr std::size_t kDatasetSize = 100000;
constexpr std::int64_t kTrainSteps = 50000;
constexpr int kFinalEpisodes = 100;
constexpr double kRebracMinScore = 90.0;
constexpr double kBcRandomBand = 10.0;
// 7: model-based pipeline
constexpr double kDynamicsMseFraction = 0.10;
constexpr std::size_t kDynamicsValidationSize = 10000;
// 8: MOReL threshold
constexpr int kMorelFixtures = 10;
constexpr std::size_t kMorelPoints = 50;
constexpr double kMorelTolerance = 1e-12;  // relative; summation order only
// 9, 10: protocol runs through the command-line tool
constexpr int kProtocolPolicies = 20;
constexpr int kProtocolEpisodes = 100;
constexpr std::int64_t kDeterminismSteps = 1000;
constexpr std::int64_t kProtocolSteps = 3000;

fs::path g_work = "acceptance_runs";
int g_workers = 1;

bool report(int n, bool pass, const std::string& what) {
  std::cout << (pass ? "PASS" : "FAIL") << " criterion " << n << ": " << what << std::endl;
  return pass;
}

void note(const std::string& s) { std::cout << "  " << s << std::endl; }

std::string num(double v, int digits = 6) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", digits, v);
  return buf;
}

double mean(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

int cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  if (code != 0) note("command failed (" + std::to_string(code) + "): " + err.str());
  return code;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

// Byte equality of every non-manifest file in two run directories.
bool same_outputs(const fs::path& a, const fs::path& b, std::size_t& files) {
  files = 0;
  for (const auto& e : fs::recursive_directory_iterator(a)) {
    if (!e.is_regular_file() || e.path().filename() == "manifest.json") continue;
    const auto rel = fs::relative(e.path(), a);
    if (!fs::exists(b / rel) || slurp(e.path()) != slurp(b / rel)) return false;
    ++files;
  }
  std::size_t other = 0;
  for (const auto& e : fs::recursive_directory_iterator(b))
    other += e.is_regular_file() && e.path().filename() != "manifest.json";
  return files > 0 && files == other;
}

const Dataset& point_reach(Behavior b) {
  static std::map<Behavior, Dataset> cache;
  auto it = cache.find(b);
  if (it == cache.end()) it = cache.emplace(b, generate_dataset(env_spec("point_reach"), b, kDatasetSize, 0)).first;
  return it->second;
}

// Midpoint preset at toy scale, trained and scored over kFinalEpisodes.
double train_and_score(const std::string& method, const Dataset& data, const DynamicsEnsemble* dyn = nullptr) {
  auto c = midpoint_config(preset(method));
  apply_toy_scale(c);
  c.num_train_steps = kTrainSteps;
  c.eval_interval = 10000;
  c.eval_episodes = 10;
  c.seed = 0;
  TrainOptions o;
  o.final_eval_episodes = kFinalEpisodes;
  o.dynamics = dyn;
  o.on_eval = [&](const EvalPoint& p) { note(method + " step " + std::to_string(p.step) + ": " + num(p.mean_score)); };
  const auto scores = train(c, data, env_spec("point_reach"), o).final_scores;
  const double m = mean(scores);
  double ss = 0;
  for (double x : scores) ss += (x - m) * (x - m);
  note(method + " final evaluation: mean " + num(m) + ", standard error " +
       num(std::sqrt(ss / static_cast<double>(scores.size() - 1) / static_cast<double>(scores.size())), 3) +
       " over " + std::to_string(scores.size()) + " episodes");
  return m;
}

bool criterion1() {
  bool ok = true;
  for (const auto& [family, label] : checks::families()) {
    double worst = 0;
    for (int s = 0; s < kGradientSeeds; ++s) worst = std::max(worst, checks::gradient_error(family, s));
    note(label + ": max relative error " + num(worst, 3));
    ok &= worst <= kGradientTolerance;
  }
  return report(1, ok, "analytic vs central-difference gradients, " + std::to_string(kGradientSeeds) +
                           " seeds per family, tolerance " + num(kGradientTolerance));
}

bool criterion2() {
  bool ok = true;
  for (const auto& name : checks::oracle_presets()) {
    double worst = 0;
    for (int s = 0; s < kOracleBatches; ++s) worst = std::max(worst, checks::preset_gap(name, s).worst());
    note(name + ": max absolute loss gap " + num(worst, 3));
    ok &= worst <= kOracleTolerance;
  }
  return report(2, ok, "unified losses equal hand-coded algorithms on " + std::to_string(kOracleBatches) +
                           " batches, tolerance " + num(kOracleTolerance));
}

bool criterion3() {
  double worst = 0;
  for (int s = 0; s < kExpectileFixtures; ++s) worst = std::max(worst, checks::expectile_half_gap(s));
  note("max |L_value - 0.5 MSE| " + num(worst, 3));
  return report(3, worst <= kExpectileTolerance, "expectile 0.5 value loss equals half the MSE, tolerance " +
                                                     num(kExpectileTolerance));
}

bool criterion4() {
  const auto table = tables::graded(8, 200, 0.1, 11);
  const auto schedule = default_pull_schedule(kBanditK);
  const auto curve = simulate_tuning(table, kBanditK, schedule, kBanditB, 0, g_workers);
  const auto at512 = static_cast<std::size_t>(std::find(schedule.begin(), schedule.end(), 512) - schedule.begin());
  const double best_gap = std::abs(curve.mean_true_score[at512] - 0.8) / 0.8;
  note("mean at N = 512: " + num(curve.mean_true_score[at512]) + " (relative gap " + num(best_gap, 3) + ")");

  const auto ref = oracle::column_means(oracle::tuning_rollouts(table.scores, kBanditK, schedule, kBanditB, 0));
  double oracle_gap = 0;
  for (std::size_t i = 0; i < schedule.size(); ++i)
    oracle_gap = std::max(oracle_gap, std::abs(curve.mean_true_score[i] - ref[i]) / std::abs(ref[i]));
  note("max relative gap to the matched-stream oracle: " + num(oracle_gap, 3));

  // Statistical cross-check with an unrelated generator at a large rollout count.
  const auto free = oracle::tuning_curve_free_stream(table.scores, kBanditK, schedule, kFreeStreamRollouts, 12345);
  const auto big = simulate_tuning(table, kBanditK, schedule, kFreeStreamRollouts, 1, g_workers);
  double free_gap = 0;
  for (std::size_t i = 0; i < schedule.size(); ++i)
    free_gap = std::max(free_gap, std::abs(big.mean_true_score[i] - free[i]) / free[i]);
  note("informational: with " + std::to_string(kFreeStreamRollouts) +
       " rollouts each, max relative gap to an unrelated-stream oracle: " + num(free_gap, 3));
  return report(4, best_gap <= kBanditBestTolerance && oracle_gap <= kBanditOracleTolerance,
                "bandit curve within " + num(100 * kBanditBestTolerance) + "% of 0.8 at N = 512 and within " +
                    num(100 * kBanditOracleTolerance) + "% of the oracle at every N");
}

bool strictly_increasing(const std::vector<double>& p) {
  for (std::size_t i = 1; i < p.size(); ++i)
    if (!(p[i] > p[i - 1])) return false;
  return true;
}

std::string series(const std::vector<double>& p) {
  std::string s;
  for (double x : p) s += (s.empty() ? "" : " ") + num(x, 4);
  return s;
}

bool criterion5() {
  const auto table = tables::distractor(true);
  const auto p = distractor_analysis(table, {0}, 8, kDistractorTrials, 0, g_workers);
  note("right-tailed distractor (mean 0.3, max 1.0, positive skew): " + series(p));
  note("P(distractor draw beats a consistent draw) = " + num(tables::beat_probability(table), 4) +
       "; pull 2 exceeds pull 1 only if this exceeds 0.5");
  const auto left = tables::distractor(false);
  const auto q = distractor_analysis(left, {0}, 8, kDistractorTrials, 0, g_workers);
  note("informational: collapse-prone distractor (mean 0.3, max 1.0, negative skew): " + series(q) +
       (strictly_increasing(q) ? " (strictly increasing)" : " (not strictly increasing)"));
  return report(5, strictly_increasing(p), "distractor preference strictly increasing over pulls 1..8, " +
                                               std::to_string(kDistractorTrials) + " orderings");
}

bool criterion6() {
  const double rebrac = train_and_score("rebrac", point_reach(Behavior::expert));
  note("rebrac on expert data: normalized score " + num(rebrac));
  const double bc = train_and_score("bc", point_reach(Behavior::random));
  note("bc on random data: normalized score " + num(bc));
  return report(6, rebrac >= kRebracMinScore && std::abs(bc) <= kBcRandomBand,
                "rebrac >= " + num(kRebracMinScore) + " on expert data; bc within +-" + num(kBcRandomBand) +
                    " of the random baseline");
}

bool criterion7() {
  const auto& data = point_reach(Behavior::medium);
  const auto spec = preset("mopo");
  const auto dyn = train_dynamics(data, dynamics_train_config(*spec.base.model_based, 0));
  const auto validation = generate_dataset(env_spec("point_reach"), Behavior::medium, kDynamicsValidationSize, 1);
  const auto [mse, var] = delta_mse_and_variance(dyn, validation.transitions);
  note("elite validation state-change MSE " + num(mse, 4) + ", target variance " + num(var, 4) + " (ratio " +
       num(mse / var, 3) + ")");
  const bool model_ok = mse < kDynamicsMseFraction * var;

  const auto obs = dynfix::cols(validation.transitions.obs, validation.transitions.obs_dim);
  const auto act = dynfix::cols(validation.transitions.action, validation.transitions.act_dim);
  bool monotone = true;
  Eigen::RowVectorXd prev = penalized_reward(dyn, obs, act, 0.0);
  for (double eta : {0.01, 0.1, 0.5, 1.0, 2.0, 5.0, 10.0}) {
    const auto r = penalized_reward(dyn, obs, act, eta);
    monotone &= ((r.array() <= prev.array()).all());
    prev = r;
  }
  note(std::string("penalized rewards non-increasing in eta on paired inputs: ") + (monotone ? "yes" : "no"));

  const double mobrac = train_and_score("mobrac", data, &dyn);
  note("mobrac on medium data: normalized score " + num(mobrac));
  const double bc = train_and_score("bc", data);
  note("bc on medium data: normalized score " + num(bc));
  return report(7, model_ok && monotone && mobrac > bc,
                "dynamics MSE < " + num(100 * kDynamicsMseFraction) +
                    "% of variance, monotone penalty, mobrac beats bc on medium data");
}

bool criterion8() {
  double worst = 0;
  int bitwise = 0;
  for (int s = 0; s < kMorelFixtures; ++s) {
    const auto [lib, brute] = checks::morel_pair(s, kMorelPoints);
    worst = std::max(worst, std::abs(lib - brute) / std::max(brute, 1e-300));
    bitwise += lib == brute;
  }
  note("max relative difference " + num(worst, 3) + "; bitwise equal on " + std::to_string(bitwise) + " of " +
       std::to_string(kMorelFixtures) + " fixtures");
  return report(8, worst <= kMorelTolerance, "MOReL threshold equals a brute-force triple loop on " +
                                                 std::to_string(kMorelPoints) + "-point fixtures");
}

// Runs the same command twice into sibling directories and compares outputs.
bool rerun_identical(const std::string& label, std::vector<std::string> args) {
  const auto a = (g_work / "c9" / (label + "_a")).string(), b = (g_work / "c9" / (label + "_b")).string();
  auto args_a = args, args_b = args;
  args_a.insert(args_a.end(), {"--out", a});
  args_b.insert(args_b.end(), {"--out", b});
  if (cli(args_a) != 0 || cli(args_b) != 0) return false;
  std::size_t files = 0;
  const bool same = same_outputs(a, b, files);
  note(label + ": " + std::to_string(files) + " output files " + (same ? "identical" : "DIFFER"));
  return same;
}

bool criterion9() {
  fs::remove_all(g_work / "c9");
  const auto dir = g_work / "c9";
  const std::string data = (dir / "data_a" / "dataset.bin").string();
  const std::string workers = std::to_string(g_workers);
  bool ok = rerun_identical("data", {"gen-data", "--env", "point_reach", "--behavior", "medium", "--transitions",
                                     "20000", "--seed", "0"});
  ok &= rerun_identical("train", {"train", "--method", "td3_awr", "--dataset", data, "--steps", "2000", "--seed", "1",
                                  "--eval-interval", "1000"});
  ok &= rerun_identical("dynamics", {"train-dynamics", "--dataset", data, "--members", "3", "--elites", "2",
                                     "--epochs", "5", "--seed", "2"});
  ok &= rerun_identical("train_mb", {"train", "--method", "mopo", "--dataset", data, "--dynamics",
                                     (dir / "dynamics_a").string(), "--steps", "1000", "--seed", "3"});
  ok &= rerun_identical("scores", {"collect-scores", "--method", "rebrac", "--dataset", data, "--policies",
                                   std::to_string(kProtocolPolicies), "--episodes", std::to_string(kProtocolEpisodes),
                                   "--steps", std::to_string(kDeterminismSteps), "--seed", "4", "--workers", workers});
  const std::string scores = (dir / "scores_a" / "scores.csv").string();
  ok &= rerun_identical("bandit", {"bandit-eval", "--scores", scores, "--K", "8", "--bootstraps", "500", "--seed",
                                   "5", "--workers", workers});
  ok &= rerun_identical("report", {"report", "--scores", scores, "--seed", "6", "--distractors", "0",
                                   "--trials", "20000"});
  return report(9, ok, "every command reruns byte-identically, including collect-scores at P = " +
                           std::to_string(kProtocolPolicies) + ", R = " + std::to_string(kProtocolEpisodes));
}

bool criterion10() {
  fs::remove_all(g_work / "c10");
  const auto dir = g_work / "c10";
  bool ok = cli({"gen-data", "--env", "point_reach", "--behavior", "medium", "--transitions",
                 std::to_string(kDatasetSize), "--seed", "0", "--out", (dir / "data").string()}) == 0;
  const std::string data = (dir / "data" / "dataset.bin").string();
  for (const std::string method : {"rebrac", "iql", "td3_awr"}) {
    if (!ok) break;
    const auto scores_dir = dir / (method + "_scores");
    ok &= cli({"collect-scores", "--method", method, "--dataset", data, "--policies",
               std::to_string(kProtocolPolicies), "--episodes", std::to_string(kProtocolEpisodes), "--steps",
               std::to_string(kProtocolSteps), "--seed", "0", "--workers", std::to_string(g_workers), "--out",
               scores_dir.string()}) == 0;
    if (!ok) break;
    const auto curve_dir = dir / (method + "_curve");
    ok &= cli({"bandit-eval", "--scores", (scores_dir / "scores.csv").string(), "--K", "8", "--bootstraps", "500",
               "--seed", "0", "--workers", std::to_string(g_workers), "--out", curve_dir.string()}) == 0;
    ok &= fs::exists(curve_dir / "tuning_curve.csv");
    if (!ok) break;
    const auto table = load_score_table((scores_dir / "scores.csv").string());
    const auto curve = simulate_tuning(table, 8, default_pull_schedule(8), 500, 0, g_workers);
    std::string line = method + ": failed " + std::to_string(table.failed_count()) + ", curve";
    for (std::size_t i = 0; i < curve.pulls.size(); ++i)
      line += " N=" + std::to_string(curve.pulls[i]) + ":" + num(curve.mean_true_score[i], 4);
    note(line);
    note("  tuning curve written to " + (curve_dir / "tuning_curve.csv").string());
  }
  return report(10, ok, "gen-data, collect-scores (P = " + std::to_string(kProtocolPolicies) +
                            ") and bandit-eval (K = 8, B = 500) complete for rebrac, iql and td3_awr");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  std::vector<int> criteria;
  std::string work = g_work.string();
  app.add_option("--criterion", criteria, "Criteria to run (default: all)")->check(CLI::Range(1, 10));
  app.add_option("--work-dir", work, "Directory for command-line runs")->capture_default_str();
  app.add_option("--workers", g_workers, "Threads for parallel sections")->capture_default_str();
  CLI11_PARSE(app, argc, argv);
  g_work = work;
  fs::create_directories(g_work);
  if (criteria.empty())
    for (int i = 1; i <= 10; ++i) criteria.push_back(i);

  const std::vector<std::function<bool()>> all{criterion1, criterion2, criterion3, criterion4, criterion5,
                                               criterion6, criterion7, criterion8, criterion9, criterion10};
  bool ok = true;
  for (int c : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    bool pass = false;
    try {
      pass = all[static_cast<std::size_t>(c - 1)]();
    } catch (const std::exception& e) {
      pass = report(c, false, std::string("raised: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    note("runtime " + num(secs, 4) + " s");
    ok &= pass;
  }
  return ok ? 0 : 1;
}
