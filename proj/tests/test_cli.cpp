#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "support/tables.hpp"
#include "unifloral/cli/commands.hpp"
#include "unifloral/cli/manifest.hpp"
#include "unifloral/evalproto/tuning.hpp"
#include "unifloral/presets/presets.hpp"

using namespace unifloral;
namespace fs = std::filesystem;

namespace {

const fs::path root = fs::temp_directory_path() / "unifloral_test_cli";

struct Result {
  int code;
  std::string out, err;
};

Result cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

std::string p(const std::string& rel) { return (root / rel).string(); }

std::string slurp(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

// Every file under a except manifest.json exists under b with the same bytes.
bool same_outputs(const fs::path& a, const fs::path& b) {
  std::size_t files = 0;
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

nlohmann::json manifest(const std::string& dir) { return nlohmann::json::parse(slurp(fs::path(dir) / "manifest.json")); }

// Shared small dataset.
const std::string& dataset() {
  static const std::string path = [] {
    fs::remove_all(root);
    fs::create_directories(root);
    const auto r = cli({"gen-data", "--env", "point_reach", "--behavior", "medium", "--transitions", "1500",
                        "--seed", "4", "--out", p("data")});
    REQUIRE(r.code == 0);
    return p("data/dataset.bin");
  }();
  return path;
}

}  // namespace

TEST_CASE("gen-data writes a dataset and manifest and reruns identically") {
  const auto& d = dataset();
  CHECK(fs::exists(d));
  const auto m = manifest(p("data"));
  CHECK(m["command"] == "gen-data");
  CHECK(m["args"]["behavior"] == "medium");
  CHECK(m["seed"] == 4);
  CHECK(m["outputs"] == nlohmann::json::array({"dataset.bin"}));
  CHECK(!m["started_at"].get<std::string>().empty());
  REQUIRE(cli({"gen-data", "--env", "point_reach", "--behavior", "medium", "--transitions", "1500", "--seed",
               "4", "--out", p("data2")})
              .code == 0);
  CHECK(same_outputs(p("data"), p("data2")));
}

TEST_CASE("usage errors exit with 2") {
  const auto r = cli({"gen-data", "--env", "point_reach", "--behavior", "sloppy"});
  CHECK(r.code == kExitUsage);
  CHECK(r.err.find("medium_replay") != std::string::npos);
  CHECK(cli({"gen-data", "--env", "moon", "--behavior", "random"}).code == kExitUsage);
  CHECK(cli({"no-such-command"}).code == kExitUsage);
  CHECK(cli({}).code == kExitUsage);
  CHECK(cli({"train", "--dataset", dataset(), "--profile", "huge", "--method", "bc"}).code == kExitUsage);
  CHECK(cli({"train", "--dataset", dataset()}).code == kExitUsage);  // no method
  CHECK(cli({"--help"}).code == kExitOk);
}

TEST_CASE("i/o errors exit with 4") {
  CHECK(cli({"train", "--method", "bc", "--dataset", p("missing.bin"), "--out", p("x")}).code == kExitIo);
  CHECK(cli({"report", "--scores", p("missing.csv"), "--out", p("x2")}).code == kExitIo);
}

TEST_CASE("train writes a checkpoint and metrics") {
  const auto r = cli({"train", "--method", "bc", "--dataset", dataset(), "--steps", "60", "--seed", "1",
                      "--eval-interval", "30", "--final-episodes", "2", "--out", p("bc")});
  REQUIRE(r.code == 0);
  CHECK(fs::exists(p("bc/checkpoint/checkpoint.json")));
  CHECK(fs::exists(p("bc/metrics.csv")));
  CHECK(fs::exists(p("bc/final_scores.csv")));
  const auto m = manifest(p("bc"));
  CHECK(m["input_hashes"][dataset()] == git_blob_sha1_of_file(dataset()));
  CHECK(m["results"]["steps"] == 60);
}

TEST_CASE("model-based training needs a dynamics checkpoint") {
  const auto r = cli({"train", "--method", "mopo", "--dataset", dataset(), "--out", p("mopo")});
  CHECK(r.code == kExitUsage);
  CHECK(r.err.find("--dynamics") != std::string::npos);
  CHECK(!fs::exists(p("mopo")));
}

TEST_CASE("config file matches the preset bit for bit") {
  save_method_file(preset("td3_awr"), p("td3_awr.json"));
  const std::vector<std::string> common{"--dataset", dataset(), "--steps", "40", "--seed", "2",
                                        "--final-episodes", "2"};
  auto a = std::vector<std::string>{"train", "--method", "td3_awr", "--out", p("awr_a")};
  auto b = std::vector<std::string>{"train", "--config-file", p("td3_awr.json"), "--out", p("awr_b")};
  a.insert(a.end(), common.begin(), common.end());
  b.insert(b.end(), common.begin(), common.end());
  REQUIRE(cli(a).code == 0);
  REQUIRE(cli(b).code == 0);
  CHECK(same_outputs(p("awr_a"), p("awr_b")));
}

TEST_CASE("train-dynamics and a model-based run") {
  const std::vector<std::string> args{"train-dynamics", "--dataset", dataset(), "--members", "3", "--elites", "2",
                                      "--epochs", "4", "--width", "16", "--layers", "2", "--seed", "3"};
  auto a = args, b = args;
  a.insert(a.end(), {"--out", p("dyn_a")});
  b.insert(b.end(), {"--out", p("dyn_b")});
  REQUIRE(cli(a).code == 0);
  REQUIRE(cli(b).code == 0);
  CHECK(same_outputs(p("dyn_a"), p("dyn_b")));
  CHECK(manifest(p("dyn_a"))["results"]["morel_threshold"].get<double>() > 0.0);

  const auto r = cli({"train", "--method", "mobrac", "--dataset", dataset(), "--dynamics", p("dyn_a"), "--steps",
                      "20", "--final-episodes", "1", "--out", p("mobrac")});
  CHECK(r.code == 0);

  REQUIRE(cli({"gen-data", "--env", "point_reach", "--behavior", "random", "--transitions", "50", "--out",
               p("tiny")})
              .code == 0);
  CHECK(cli({"train-dynamics", "--dataset", p("tiny/dataset.bin"), "--out", p("dyn_tiny")}).code == kExitUsage);
}

TEST_CASE("collect-scores shape, rerun determinism and worker invariance") {
  const std::vector<std::string> args{"collect-scores", "--method", "rebrac", "--dataset", dataset(),
                                      "--policies", "2", "--episodes", "3", "--steps", "10", "--seed", "5"};
  auto a = args, b = args;
  a.insert(a.end(), {"--out", p("col_a")});
  b.insert(b.end(), {"--out", p("col_b"), "--workers", "2"});
  REQUIRE(cli(a).code == 0);
  REQUIRE(cli(b).code == 0);
  CHECK(same_outputs(p("col_a"), p("col_b")));
  const auto t = load_score_table(p("col_a/scores.csv"));
  CHECK(t.num_policies() == 2);
  CHECK(t.num_episodes() == 3);
  CHECK(cli({"collect-scores", "--method", "dqn", "--dataset", dataset(), "--out", p("col_c")}).code == kExitUsage);
}

TEST_CASE("bandit-eval wraps simulate_tuning exactly") {
  auto t = tables::graded(10, 40, 0.2, 6);
  t.method_name = "synthetic";
  save_score_table(t, p("graded.csv"));
  REQUIRE(cli({"bandit-eval", "--scores", p("graded.csv"), "--K", "8", "--bootstraps", "500", "--seed", "9",
               "--workers", "2", "--out", p("bandit")})
              .code == 0);
  save_tuning_curve(simulate_tuning(load_score_table(p("graded.csv")), 8, default_pull_schedule(8), 500, 9),
                    p("library_curve.csv"));
  CHECK(slurp(p("bandit/tuning_curve.csv")) == slurp(p("library_curve.csv")));
  CHECK(cli({"bandit-eval", "--scores", p("graded.csv"), "--K", "11", "--out", p("bandit2")}).code == kExitUsage);
  REQUIRE(cli({"bandit-eval", "--scores", p("graded.csv"), "--K", "3", "--pulls", "1,3,10", "--bootstraps", "20",
               "--out", p("bandit3")})
              .code == 0);
  CHECK(slurp(p("bandit3/tuning_curve.csv")).find("\n10,") != std::string::npos);
}

TEST_CASE("report reproduces the rank summary") {
  const auto t = tables::from_rows({{0.1, 0.2}, {0.8, 0.9}, {0.6, 0.7}, {-0.5, 1.0}, {0.5, 0.6}});
  save_score_table(t, p("fixture.csv"));
  REQUIRE(cli({"report", "--scores", p("fixture.csv"), "--trials", "2000", "--out", p("report")}).code == 0);
  save_rank_summary(policy_rank_summary(t), p("library_ranks.csv"));
  CHECK(slurp(p("report/rank_summary.csv")) == slurp(p("library_ranks.csv")));
  save_distractor_curve(distractor_analysis(t, {3}, 5, 2000, 0), p("library_distractors.csv"));
  CHECK(slurp(p("report/distractor_curve.csv")) == slurp(p("library_distractors.csv")));
  CHECK(manifest(p("report"))["results"]["distractors"] == nlohmann::json::array({3}));
}

TEST_CASE("default run directories live under the output root") {
  save_score_table(tables::graded(4, 5, 0.1, 1), p("small.csv"));
  setenv(kOutputRootVariable, p("root").c_str(), 1);
  const std::vector<std::string> args{"bandit-eval", "--scores", p("small.csv"), "--K", "2", "--bootstraps", "5"};
  REQUIRE(cli(args).code == 0);
  auto workers = args;
  workers.insert(workers.end(), {"--workers", "2"});
  REQUIRE(cli(workers).code == 0);  // same directory: workers do not change outputs
  auto other = args;
  other.insert(other.end(), {"--seed", "1"});
  REQUIRE(cli(other).code == 0);
  unsetenv(kOutputRootVariable);
  std::size_t dirs = 0;
  for (const auto& e : fs::directory_iterator(p("root"))) {
    CHECK(e.path().filename().string().rfind("bandit-eval-", 0) == 0);
    CHECK(fs::exists(e.path() / "manifest.json"));
    ++dirs;
  }
  CHECK(dirs == 2);
}

TEST_CASE("git blob hash") {
  // Known value of `git hash-object` for the bytes "hello\n".
  CHECK(git_blob_sha1("hello\n") == "ce013625030ba8dba906f756967f9e9ca394464a");
  CHECK(sha1_hex("abc") == "a9993e364706816aba3e25717850c26c9cd0d89d");
}
