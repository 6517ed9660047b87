#include "unifloral/evalproto/collect.hpp"

#include <atomic>
#include <cstdio>
#include <limits>
#include <mutex>
#include <thread>

#include "unifloral/numerics/errors.hpp"

namespace unifloral {

namespace {

std::string config_id(std::size_t p) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "cfg%05zu", p);
  return buf;
}

}  // namespace

UnifloralConfig collect_config(const MethodSpec& spec, const CollectOptions& options, std::size_t p) {
  auto c = sample_config(spec, mix_seed(options.master_seed, p));
  if (options.toy_scale) apply_toy_scale(c);
  if (options.train_steps) c.num_train_steps = *options.train_steps;
  c.eval_interval = static_cast<int>(std::max<std::int64_t>(1, c.num_train_steps));
  c.eval_episodes = 1;
  return c;
}

ScoreTable collect_scores(const MethodSpec& spec, const Dataset& dataset, const EnvSpec& env,
                          const CollectOptions& options) {
  spec.validate();
  if (options.policies < 1) throw ContractError("collect_scores: policies must be at least 1");
  if (options.episodes < 1) throw ContractError("collect_scores: episodes must be at least 1");
  if (options.workers < 1) throw ContractError("collect_scores: workers must be at least 1");
  if (options.train_steps && *options.train_steps < 0)
    throw ContractError("collect_scores: train_steps must be >= 0");

  const auto n = static_cast<std::size_t>(options.policies);
  std::vector<UnifloralConfig> configs;
  for (std::size_t p = 0; p < n; ++p) {
    configs.push_back(collect_config(spec, options, p));
    configs.back().validate();
  }

  // One shared ensemble keeps rows comparable and avoids P retrainings.
  DynamicsEnsemble owned;
  const DynamicsEnsemble* dynamics = options.dynamics;
  if (spec.model_based && !dynamics) {
    owned = train_dynamics(dataset, dynamics_train_config(*spec.base.model_based,
                                                          mix_seed(options.master_seed, 0xD1A)));
    dynamics = &owned;
  }

  ScoreTable table;
  table.method_name = spec.name;
  table.env_name = env.name;
  table.scores.assign(n, {});
  for (std::size_t p = 0; p < n; ++p) table.config_ids.push_back(config_id(p));

  std::mutex done_mutex;
  auto run = [&](std::size_t p) {
    bool ok = true;
    try {
      TrainOptions to;
      to.dynamics = dynamics;
      to.final_eval_episodes = options.episodes;
      table.scores[p] = train(configs[p], dataset, env, to).final_scores;
    } catch (const NumericError&) {
      ok = false;
      table.scores[p].assign(static_cast<std::size_t>(options.episodes),
                             std::numeric_limits<double>::quiet_NaN());
    }
    if (options.on_done) {
      std::lock_guard lock(done_mutex);
      options.on_done(p, ok);
    }
  };

  const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(options.workers), n);
  if (workers == 1) {
    for (std::size_t p = 0; p < n; ++p) run(p);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(workers);
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w)
      pool.emplace_back([&, w] {
        try {
          for (std::size_t p; (p = next.fetch_add(1)) < n;) run(p);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    for (auto& t : pool) t.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }

  nlohmann::json cfgs = nlohmann::json::array();
  for (const auto& c : configs) cfgs.push_back(config_to_json(c));
  table.extra["master_seed"] = options.master_seed;
  table.extra["toy_scale"] = options.toy_scale;
  table.extra["configs"] = std::move(cfgs);
  return table;
}

}  // namespace unifloral
