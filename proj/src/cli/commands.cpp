#include "unifloral/cli/commands.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <ostream>

#include "unifloral/cli/manifest.hpp"
#include "unifloral/core/checkpoint.hpp"
#include "unifloral/evalproto/collect.hpp"
#include "unifloral/evalproto/tuning.hpp"
#include "unifloral/numerics/errors.hpp"

namespace unifloral {

namespace {

namespace fs = std::filesystem;

// Options excluded from the argument hash that names default run directories.
bool affects_outputs(const std::string& name) { return name != "out" && name != "workers"; }

nlohmann::json option_map(const CLI::App& app, bool outputs_only) {
  nlohmann::json j = nlohmann::json::object();
  for (const CLI::Option* opt : app.get_options()) {
    const std::string name = opt->get_single_name();
    if (name == "help" || (outputs_only && !affects_outputs(name))) continue;
    if (opt->count() == 0) {
      j[name] = opt->get_default_str();
    } else {
      std::string joined;
      for (const auto& r : opt->results()) joined += (joined.empty() ? "" : ",") + r;
      j[name] = joined;
    }
  }
  return j;
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// A run in progress: resolves the directory and gathers the manifest.
struct Run {
  RunManifest manifest;
  fs::path dir;

  void input(const std::string& path) { manifest.input_hashes[path] = git_blob_sha1_of_file(path); }
  std::string output(const std::string& name) {
    manifest.outputs.push_back(name);
    return (dir / name).string();
  }
};

Run start_run(const CLI::App& sub, const std::string& out, std::uint64_t seed) {
  Run run;
  run.manifest.command = sub.get_name();
  run.manifest.args = option_map(sub, false);
  run.manifest.seed = seed;
  run.manifest.started_at = utc_timestamp();
  if (!out.empty()) {
    run.dir = out;
  } else {
    const char* root = std::getenv(kOutputRootVariable);
    const std::string key = sha1_hex(option_map(sub, true).dump()).substr(0, 12);
    run.dir = fs::path(root && *root ? root : "runs") / (sub.get_name() + "-" + key);
  }
  std::error_code ec;
  fs::create_directories(run.dir, ec);
  if (ec) throw IoError("cannot create run directory " + run.dir.string() + ": " + ec.message());
  return run;
}

void finish_run(Run& run, std::ostream& out) {
  run.manifest.finished_at = utc_timestamp();
  write_manifest(run.dir.string(), run.manifest);
  out << "wrote " << run.dir.string() << '\n';
}

// --method or --config-file, exactly one.
MethodSpec resolve_method(const std::string& method, const std::string& config_file) {
  if (method.empty() == config_file.empty())
    throw ConfigError("pass exactly one of --method and --config-file");
  return method.empty() ? load_method_file(config_file) : preset(method);
}

void apply_profile(UnifloralConfig& c, const std::string& profile) {
  if (profile == "toy") apply_toy_scale(c);
}

// Accepts a dynamics file or a train-dynamics run directory.
std::string dynamics_file(const std::string& path) {
  return fs::is_directory(path) ? (fs::path(path) / "dynamics.bin").string() : path;
}

const EnvSpec& dataset_env(const Dataset& d, const std::string& env_flag) {
  return env_spec(env_flag.empty() ? d.source_env : env_flag);
}

void write_scores_csv(const std::vector<double>& scores, const std::string& path) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("cannot write " + path);
  os << "episode,score\n";
  for (std::size_t i = 0; i < scores.size(); ++i) os << i << ',' << fmt(scores[i]) << '\n';
  if (!os) throw IoError("failed writing " + path);
}

struct Common {
  std::string out;
  std::uint64_t seed = 0;
};

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--out", c.out, "Run directory (default: <output root>/<command>-<argument hash>)");
  sub->add_option("--seed", c.seed, "Seed for all randomness")->capture_default_str();
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Offline RL training and pre-deployment tuning evaluation", "unifloral"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kToolVersion);
  app.footer(std::string("Default run directories live under $") + kOutputRootVariable + " (or ./runs).");

  std::function<void()> action;
  const std::vector<std::string> profiles{"toy", "full"};

  // gen-data
  struct {
    Common c;
    std::string env, behavior;
    std::size_t transitions = 100000;
  } gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "Generate an offline dataset on a bundled environment");
  gen_cmd->add_option("--env", gen.env, "Environment name")->required();
  gen_cmd->add_option("--behavior", gen.behavior, "Behavior policy tag")->required();
  gen_cmd->add_option("--transitions", gen.transitions, "Number of transitions")->capture_default_str();
  add_common(gen_cmd, gen.c);
  gen_cmd->callback([&] {
    action = [&] {
      const auto& env = env_spec(gen.env);
      const auto behavior = parse_behavior(gen.behavior);
      if (gen.transitions == 0) throw ConfigError("--transitions must be positive");
      auto run = start_run(*gen_cmd, gen.c.out, gen.c.seed);
      const auto d = generate_dataset(env, behavior, gen.transitions, gen.c.seed);
      save_dataset(d, run.output("dataset.bin"));
      run.manifest.results = {{"transitions", d.size()}, {"env", d.source_env}, {"behavior", d.behavior_tag}};
      finish_run(run, out);
    };
  });

  // train
  struct {
    Common c;
    std::string method, config_file, dataset, env, dynamics, profile = "toy";
    std::optional<std::int64_t> steps, sample;
    std::optional<int> eval_interval, eval_episodes;
    int final_episodes = 10;
  } tr;
  auto* train_cmd = app.add_subcommand("train", "Train one policy");
  train_cmd->add_option("--method", tr.method, "Preset name");
  train_cmd->add_option("--config-file", tr.config_file, "JSON method file");
  train_cmd->add_option("--dataset", tr.dataset, "Dataset file")->required();
  train_cmd->add_option("--env", tr.env, "Environment (default: the dataset's)");
  train_cmd->add_option("--dynamics", tr.dynamics, "Dynamics checkpoint (required for model-based methods)");
  train_cmd->add_option("--steps", tr.steps, "Training steps (default: the method's)");
  train_cmd->add_option("--sample", tr.sample, "Draw ranged hyperparameters with this seed instead of midpoints");
  train_cmd->add_option("--eval-interval", tr.eval_interval, "Steps between evaluations");
  train_cmd->add_option("--eval-episodes", tr.eval_episodes, "Episodes per evaluation");
  train_cmd->add_option("--final-episodes", tr.final_episodes, "Episodes of the final evaluation")
      ->capture_default_str();
  train_cmd->add_option("--profile", tr.profile, "toy caps widths and batch size")
      ->check(CLI::IsMember(profiles))
      ->capture_default_str();
  add_common(train_cmd, tr.c);
  train_cmd->callback([&] {
    action = [&] {
      const auto spec = resolve_method(tr.method, tr.config_file);
      auto config = tr.sample ? sample_config(spec, static_cast<std::uint64_t>(*tr.sample)) : midpoint_config(spec);
      config.seed = tr.c.seed;
      apply_profile(config, tr.profile);
      if (tr.steps) config.num_train_steps = *tr.steps;
      if (tr.eval_interval) config.eval_interval = *tr.eval_interval;
      if (tr.eval_episodes) config.eval_episodes = *tr.eval_episodes;
      if (tr.final_episodes < 0) throw ConfigError("--final-episodes must be >= 0");
      config.validate();
      if (config.model_based && tr.dynamics.empty())
        throw ConfigError("method '" + spec.name +
                          "' is model-based; pass --dynamics with a train-dynamics checkpoint");

      auto run = start_run(*train_cmd, tr.c.out, tr.c.seed);
      run.input(tr.dataset);
      if (!tr.config_file.empty()) run.input(tr.config_file);
      const auto dataset = load_dataset(tr.dataset);
      const auto& env = dataset_env(dataset, tr.env);
      DynamicsEnsemble dynamics;
      TrainOptions options;
      if (!tr.dynamics.empty()) {
        const auto path = dynamics_file(tr.dynamics);
        run.input(path);
        dynamics = load_dynamics(path);
        options.dynamics = &dynamics;
      }
      options.final_eval_episodes = tr.final_episodes;
      options.metrics_path = run.output("metrics.csv");
      options.checkpoint_dir = run.output("checkpoint");
      {
        std::ofstream os(run.output("config.json"), std::ios::trunc);
        os << config_to_json(config).dump(2) << '\n';
        if (!os) throw IoError("cannot write config.json");
      }
      const auto result = train(config, dataset, env, options);
      nlohmann::json summary = {{"steps", config.num_train_steps}};
      if (!result.eval_curve.empty()) summary["last_eval_score"] = result.eval_curve.back().mean_score;
      if (!result.final_scores.empty()) {
        write_scores_csv(result.final_scores, run.output("final_scores.csv"));
        double sum = 0;
        for (double s : result.final_scores) sum += s;
        summary["final_mean_score"] = sum / static_cast<double>(result.final_scores.size());
      }
      run.manifest.results = summary;
      finish_run(run, out);
    };
  });

  // train-dynamics
  struct {
    Common c;
    std::string dataset;
    DynamicsTrainConfig config;
  } dyn;
  auto* dyn_cmd = app.add_subcommand("train-dynamics", "Train a dynamics ensemble");
  dyn_cmd->add_option("--dataset", dyn.dataset, "Dataset file")->required();
  dyn_cmd->add_option("--members", dyn.config.num_members, "Ensemble size")->capture_default_str();
  dyn_cmd->add_option("--elites", dyn.config.num_elites, "Elite members")->capture_default_str();
  dyn_cmd->add_option("--epochs", dyn.config.max_epochs, "Maximum epochs")->capture_default_str();
  dyn_cmd->add_option("--width", dyn.config.hidden_width, "Hidden width")->capture_default_str();
  dyn_cmd->add_option("--layers", dyn.config.hidden_layers, "Hidden layers")->capture_default_str();
  add_common(dyn_cmd, dyn.c);
  dyn_cmd->callback([&] {
    action = [&] {
      dyn.config.seed = dyn.c.seed;
      dyn.config.validate();
      auto run = start_run(*dyn_cmd, dyn.c.out, dyn.c.seed);
      run.input(dyn.dataset);
      const auto dataset = load_dataset(dyn.dataset);
      const auto e = train_dynamics(dataset, dyn.config);
      save_dynamics(e, run.output("dynamics.bin"));
      const auto [mse, var] = delta_mse_and_variance(e, dataset.transitions);
      run.manifest.results = {{"morel_threshold", e.morel_threshold},
                              {"elites", e.elites},
                              {"validation_nll", e.validation_nll},
                              {"delta_mse", mse},
                              {"delta_variance", var}};
      finish_run(run, out);
    };
  });

  // collect-scores
  struct {
    Common c;
    std::string method, config_file, dataset, env, dynamics, profile = "toy";
    int policies = 20, episodes = 100, workers = 1;
    std::optional<std::int64_t> steps;
  } col;
  auto* col_cmd = app.add_subcommand("collect-scores", "Train sampled configurations and record episode scores");
  col_cmd->add_option("--method", col.method, "Preset name");
  col_cmd->add_option("--config-file", col.config_file, "JSON method file");
  col_cmd->add_option("--dataset", col.dataset, "Dataset file")->required();
  col_cmd->add_option("--env", col.env, "Environment (default: the dataset's)");
  col_cmd->add_option("--dynamics", col.dynamics, "Dynamics checkpoint shared by model-based runs");
  col_cmd->add_option("--policies", col.policies, "Number of sampled configurations P")->capture_default_str();
  col_cmd->add_option("--episodes", col.episodes, "Recorded episodes per policy R")->capture_default_str();
  col_cmd->add_option("--steps", col.steps, "Training steps per policy (default: the method's)");
  col_cmd->add_option("--workers", col.workers, "Concurrent trainings")->capture_default_str();
  col_cmd->add_option("--profile", col.profile, "toy caps widths and batch size")
      ->check(CLI::IsMember(profiles))
      ->capture_default_str();
  add_common(col_cmd, col.c);
  col_cmd->callback([&] {
    action = [&] {
      const auto spec = resolve_method(col.method, col.config_file);
      auto run = start_run(*col_cmd, col.c.out, col.c.seed);
      run.input(col.dataset);
      if (!col.config_file.empty()) run.input(col.config_file);
      const auto dataset = load_dataset(col.dataset);
      const auto& env = dataset_env(dataset, col.env);
      CollectOptions o;
      o.policies = col.policies;
      o.episodes = col.episodes;
      o.master_seed = col.c.seed;
      o.workers = col.workers;
      o.toy_scale = col.profile == "toy";
      o.train_steps = col.steps;
      DynamicsEnsemble dynamics;
      if (!col.dynamics.empty()) {
        const auto path = dynamics_file(col.dynamics);
        run.input(path);
        dynamics = load_dynamics(path);
        o.dynamics = &dynamics;
      }
      o.on_done = [&](std::size_t p, bool ok) {
        out << "policy " << p << (ok ? " done" : " failed") << '\n';
      };
      const auto table = collect_scores(spec, dataset, env, o);
      save_score_table(table, run.output("scores.csv"));
      run.manifest.outputs.push_back("scores.json");
      run.manifest.results = {{"policies", table.num_policies()},
                              {"episodes", table.num_episodes()},
                              {"failed", table.failed_count()}};
      finish_run(run, out);
    };
  });

  // bandit-eval
  struct {
    Common c;
    std::string scores;
    int k = 8, bootstraps = 500, workers = 1;
    std::vector<std::int64_t> pulls;
  } band;
  auto* band_cmd = app.add_subcommand("bandit-eval", "Simulate the tuning bandit on a score table");
  band_cmd->add_option("--scores", band.scores, "Score table CSV")->required();
  band_cmd->add_option("--K", band.k, "Policies subsampled per rollout")->capture_default_str();
  band_cmd->add_option("--pulls", band.pulls, "Comma-separated pull counts (default: 1, 2, 4, ..., 1024 and K)")
      ->delimiter(',');
  band_cmd->add_option("--bootstraps", band.bootstraps, "Bandit rollouts B")->capture_default_str();
  band_cmd->add_option("--workers", band.workers, "Threads for the rollouts")->capture_default_str();
  add_common(band_cmd, band.c);
  band_cmd->callback([&] {
    action = [&] {
      if (band.workers < 1) throw ConfigError("--workers must be at least 1");
      auto run = start_run(*band_cmd, band.c.out, band.c.seed);
      run.input(band.scores);
      const auto table = load_score_table(band.scores);
      const auto schedule = band.pulls.empty() ? default_pull_schedule(band.k) : band.pulls;
      const auto curve = simulate_tuning(table, band.k, schedule, band.bootstraps, band.c.seed, band.workers);
      save_tuning_curve(curve, run.output("tuning_curve.csv"));
      run.manifest.results = {{"excluded_failed_policies", table.failed_count()},
                              {"final_mean", curve.mean_true_score.back()}};
      finish_run(run, out);
    };
  });

  // report
  struct {
    Common c;
    std::string scores;
    std::vector<std::size_t> distractors;
    std::optional<int> max_pulls;
    int trials = 100000, workers = 1;
  } rep;
  auto* rep_cmd = app.add_subcommand("report", "Rank summary and distractor analysis of a score table");
  rep_cmd->add_option("--scores", rep.scores, "Score table CSV")->required();
  rep_cmd->add_option("--distractors", rep.distractors, "Comma-separated policy rows (default: automatic)")
      ->delimiter(',');
  rep_cmd->add_option("--max-pulls", rep.max_pulls, "Enumeration pulls analysed (default: min(8, usable P))");
  rep_cmd->add_option("--trials", rep.trials, "Random orderings")->capture_default_str();
  rep_cmd->add_option("--workers", rep.workers, "Threads for the trials")->capture_default_str();
  add_common(rep_cmd, rep.c);
  rep_cmd->callback([&] {
    action = [&] {
      auto run = start_run(*rep_cmd, rep.c.out, rep.c.seed);
      run.input(rep.scores);
      const auto table = load_score_table(rep.scores);
      save_rank_summary(policy_rank_summary(table), run.output("rank_summary.csv"));
      const auto set = rep.distractors.empty() ? automatic_distractors(table) : rep.distractors;
      run.manifest.results = {{"distractors", set}, {"excluded_failed_policies", table.failed_count()}};
      if (!set.empty()) {
        const int usable = static_cast<int>(table.usable().size());
        const auto p = distractor_analysis(table, set, rep.max_pulls.value_or(std::min(8, usable)), rep.trials,
                                           rep.c.seed, rep.workers);
        save_distractor_curve(p, run.output("distractor_curve.csv"));
      } else {
        out << "no distractor policies found; distractor_curve.csv not written\n";
      }
      finish_run(run, out);
    };
  });

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::Success& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kExitUsage;
  }

  try {
    action();
    return kExitOk;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ContractError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const NumericError& e) {
    err << "numeric failure: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const IoError& e) {
    err << "i/o error: " << e.what() << '\n';
    return kExitIo;
  } catch (const FormatError& e) {
    err << "bad file: " << e.what() << '\n';
    return kExitIo;
  } catch (const fs::filesystem_error& e) {
    err << "i/o error: " << e.what() << '\n';
    return kExitIo;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }
}

}  // namespace unifloral
