#include "unifloral/core/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "unifloral/core/checkpoint.hpp"
#include "unifloral/dynamics/rollout.hpp"
#include "unifloral/numerics/errors.hpp"

namespace unifloral {

namespace {

// Stream ids derived from config.seed. Streams 0 and 1 belong to init_agent.
constexpr std::uint64_t kBatchStream = 2;
constexpr std::uint64_t kRolloutStream = 3;
constexpr std::uint64_t kFinalEvalIndex = 0xF1A1E7A1ULL;

void check_finite(double v, const char* op) {
  if (!std::isfinite(v)) throw NumericError(op);
}

double component(const LossResult<float>& r, const std::string& name) {
  for (const auto& [k, v] : r.components)
    if (k == name) return v;
  return 0.0;
}

ad::Matrix<float> draw_normal(Eigen::Index rows, Eigen::Index cols, Rng& rng, bool needed) {
  if (!needed) return ad::Matrix<float>::Zero(rows, cols);
  return standard_normal<float>(rows, cols, rng);
}

Eigen::MatrixXd gather_obs(const TransitionBatch& t, std::span<const std::size_t> idx) {
  Eigen::MatrixXd m(t.obs_dim, static_cast<Eigen::Index>(idx.size()));
  for (std::size_t j = 0; j < idx.size(); ++j)
    for (int i = 0; i < t.obs_dim; ++i)
      m(i, static_cast<Eigen::Index>(j)) = t.obs[idx[j] * static_cast<std::size_t>(t.obs_dim) + static_cast<std::size_t>(i)];
  return m;
}

Eigen::MatrixXd transform_cols(const ObsTransform& tf, const Eigen::MatrixXd& obs) {
  if (tf.mean.empty()) return obs;
  Eigen::MatrixXd out(obs.rows(), obs.cols());
  for (Eigen::Index j = 0; j < obs.cols(); ++j)
    for (Eigen::Index i = 0; i < obs.rows(); ++i)
      out(i, j) = (obs(i, j) - tf.mean[static_cast<std::size_t>(i)]) / tf.std[static_cast<std::size_t>(i)];
  return out;
}

void transform_rows(const ObsTransform& tf, std::vector<float>& rows, int dim) {
  if (tf.mean.empty()) return;
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const std::size_t i = k % static_cast<std::size_t>(dim);
    rows[k] = static_cast<float>((static_cast<double>(rows[k]) - tf.mean[i]) / tf.std[i]);
  }
}

class MetricsWriter {
 public:
  explicit MetricsWriter(const std::string& path) {
    if (path.empty()) return;
    os_.open(path, std::ios::trunc);
    if (!os_) throw IoError("cannot open metrics file: " + path);
    os_ << "step,critic_loss,bellman_loss,diversity_loss,value_loss,actor_loss,q_loss,bc_loss,"
           "entropy,eval_score\n";
  }

  void row(std::int64_t step, const StepMetrics& m, const std::optional<double>& score) {
    if (!os_.is_open()) return;
    char buf[512];
    std::snprintf(buf, sizeof buf, "%lld,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,",
                  static_cast<long long>(step), m.critic_loss, m.bellman_loss, m.diversity_loss,
                  m.value_loss, m.actor_loss, m.q_loss, m.bc_loss, m.entropy);
    os_ << buf;
    if (score) {
      std::snprintf(buf, sizeof buf, "%.9g", *score);
      os_ << buf;
    }
    os_ << '\n';
    os_.flush();
    if (!os_) throw IoError("failed writing metrics");
  }

 private:
  std::ofstream os_;
};

}  // namespace

StepMetrics train_step(const UnifloralConfig& config, AgentState& agent,
                       std::span<const TransitionBatch> batches) {
  const int updates = config.critic_updates_per_step;
  if (batches.empty() || (batches.size() != 1 && batches.size() != static_cast<std::size_t>(updates)))
    throw ContractError("train_step: expected 1 or critic_updates_per_step batches");
  const Architectures& archs = agent.archs;
  StepMetrics m;

  for (int k = 0; k < updates; ++k) {
    const auto b = to_batch<float>(batches[batches.size() == 1 ? 0 : static_cast<std::size_t>(k)]);
    if (agent.value) {
      auto r = value_loss<float>(config, archs, net_params(agent), b);
      check_finite(r.value, "value_loss");
      adam_step(*agent.value_opt, *agent.value, r.grads[0]);
      m.value_loss = r.value;
    }
    if (!agent.critics.empty()) {
      const bool noisy = config.stochastic() || config.policy_noise > 0.0;
      const auto eps = draw_normal(archs.act_dim, b.size(), agent.rng, noisy);
      const auto p = net_params(agent);
      const auto vt = compute_value_target<float>(config, archs, p, b, eps);
      const auto y = bellman_target<float>(config, augment_value_target<float>(config, vt, b.next_action), b);
      auto r = critic_loss<float>(config, archs, p, b, y);
      check_finite(r.value, "critic_loss");
      for (std::size_t n = 0; n < agent.critics.size(); ++n) {
        adam_step(agent.critic_opts[n], agent.critics[n], r.grads[n]);
        polyak_update_inplace(agent.critic_targets[n], agent.critics[n], config.polyak_step);
      }
      m.critic_loss = r.value;
      m.bellman_loss = component(r, "bellman");
      m.diversity_loss = component(r, "diversity");
    }
  }

  const auto b = to_batch<float>(batches.back());
  const auto eps = draw_normal(archs.act_dim, b.size(), agent.rng, config.stochastic());
  auto r = actor_loss<float>(config, archs, net_params(agent), b, eps);
  check_finite(r.value, "actor_loss");
  adam_step(agent.actor_opt, agent.actor, r.grads[0]);
  polyak_update_inplace(agent.actor_target, agent.actor, config.polyak_step);
  m.actor_loss = r.value;
  m.q_loss = component(r, "q");
  m.bc_loss = component(r, "bc");
  m.entropy = component(r, "entropy");
  ++agent.step;
  return m;
}

std::vector<double> ObsTransform::apply(std::span<const double> obs) const {
  std::vector<double> out(obs.begin(), obs.end());
  if (mean.empty()) return out;
  if (mean.size() != obs.size()) throw ContractError("ObsTransform: dimension mismatch");
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = (out[i] - mean[i]) / std[i];
  return out;
}

std::vector<double> evaluate_policy(const UnifloralConfig& config, const AgentState& agent,
                                    const EnvSpec& env, const ObsTransform& transform,
                                    int episodes, std::uint64_t seed) {
  if (episodes < 1) throw ContractError("evaluate_policy: episodes must be positive");
  Rng reset_rng(seed, 0), act_rng(seed, 1);
  const auto n = static_cast<std::size_t>(episodes);
  std::vector<EnvState> states;
  for (std::size_t e = 0; e < n; ++e) states.push_back(env_reset(env, reset_rng));
  std::vector<double> returns(n, 0.0);
  std::vector<std::size_t> active(n);
  for (std::size_t e = 0; e < n; ++e) active[e] = e;

  for (int t = 0; t < env.horizon && !active.empty(); ++t) {
    Eigen::MatrixXd obs(env.obs_dim, static_cast<Eigen::Index>(active.size()));
    for (std::size_t j = 0; j < active.size(); ++j) {
      const auto o = transform.apply(env_observe(env, states[active[j]]));
      for (int i = 0; i < env.obs_dim; ++i) obs(i, static_cast<Eigen::Index>(j)) = o[static_cast<std::size_t>(i)];
    }
    const Eigen::MatrixXd act = policy_action(config, agent.archs, agent.actor, obs, PolicyMode::eval, act_rng);
    std::vector<std::size_t> still;
    for (std::size_t j = 0; j < active.size(); ++j) {
      const Eigen::VectorXd a = act.col(static_cast<Eigen::Index>(j));
      auto res = env_step(env, states[active[j]], std::span<const double>(a.data(), static_cast<std::size_t>(a.size())));
      returns[active[j]] += res.reward;
      states[active[j]] = std::move(res.next);
      if (!res.terminated) still.push_back(active[j]);
    }
    active = std::move(still);
  }
  std::vector<double> scores;
  for (double r : returns) scores.push_back(normalized_score(env, r));
  return scores;
}

DynamicsTrainConfig dynamics_train_config(const DynamicsSamplingConfig& sampling, std::uint64_t seed) {
  DynamicsTrainConfig d;
  d.num_members = sampling.num_members;
  d.num_elites = sampling.num_elites;
  d.seed = seed;
  return d;
}

TrainResult train(const UnifloralConfig& config, const Dataset& dataset, const EnvSpec& env,
                  const TrainOptions& options) {
  config.validate();
  if (dataset.source_env != env.name)
    throw ConfigError("dataset was generated on '" + dataset.source_env + "', not '" + env.name + "'");
  if (dataset.transitions.obs_dim != env.obs_dim || dataset.transitions.act_dim != env.act_dim)
    throw ContractError("dataset dimensions do not match the environment");
  if (dataset.size() == 0) throw ContractError("train: empty dataset");

  const Dataset raw = dataset.normalized ? denormalize_observations(dataset) : dataset;
  const Dataset data = config.normalize_obs ? normalize_observations(raw) : raw;

  TrainResult result;
  if (config.normalize_obs) result.transform = {data.obs_mean, data.obs_std};
  const ObsTransform& tf = result.transform;
  result.agent = init_agent(config, make_architectures(config, env));
  AgentState& agent = result.agent;

  std::optional<DynamicsEnsemble> owned;
  const DynamicsEnsemble* dyn = options.dynamics;
  std::optional<SyntheticBuffer> buffer;
  if (config.model_based) {
    if (!dyn) {
      owned = train_dynamics(raw, dynamics_train_config(*config.model_based, config.seed));
      dyn = &*owned;
    }
    if (dyn->obs_dim != env.obs_dim || dyn->act_dim != env.act_dim)
      throw ContractError("dynamics ensemble dimensions do not match the environment");
    buffer.emplace(env.obs_dim, env.act_dim,
                   static_cast<std::size_t>(config.model_based->synthetic_buffer_capacity));
  }

  Rng batch_rng(config.seed, kBatchStream);
  Rng rollout_rng(config.seed, kRolloutStream);
  MetricsWriter metrics(options.metrics_path);
  const auto bsz = static_cast<std::size_t>(config.batch_size);
  const int per_step = config.critic_updates_per_step;
  std::vector<TransitionBatch> batches(static_cast<std::size_t>(per_step));

  auto rollout = [&] {
    const auto& mb = *config.model_based;
    std::vector<std::size_t> idx(static_cast<std::size_t>(mb.rollout_batch));
    for (auto& i : idx) i = rollout_rng.index(raw.size());
    const Eigen::MatrixXd start = gather_obs(raw.transitions, idx);
    BatchPolicy policy = [&](const Eigen::MatrixXd& obs) {
      return policy_action(config, agent.archs, agent.actor, transform_cols(tf, obs),
                           PolicyMode::train_sample, rollout_rng);
    };
    TransitionBatch syn = synthetic_rollout(*dyn, policy, start, mb, env.termination, rollout_rng);
    transform_rows(tf, syn.obs, syn.obs_dim);
    transform_rows(tf, syn.next_obs, syn.obs_dim);
    buffer->add(syn);
  };

  StepMetrics last;
  try {
    for (std::int64_t step = 0; step < config.num_train_steps; ++step) {
      if (buffer && step % config.model_based->rollout_interval == 0) rollout();
      for (auto& b : batches) {
        b = buffer && buffer->size() > 0
                ? mix_batches(data.transitions, buffer->data(), config.model_based->real_ratio, bsz, batch_rng)
                : sample_batch(data.transitions, bsz, batch_rng);
      }
      last = train_step(config, agent, batches);

      const std::int64_t done = step + 1;
      const bool at_interval = config.eval_interval > 0 && done % config.eval_interval == 0;
      if (at_interval || done == config.num_train_steps) {
        std::optional<double> score;
        if (config.eval_episodes > 0) {
          const auto s = evaluate_policy(config, agent, env, tf, config.eval_episodes,
                                         mix_seed(config.seed, static_cast<std::uint64_t>(done)));
          double sum = 0.0;
          for (double v : s) sum += v;
          score = sum / static_cast<double>(s.size());
          EvalPoint p{done, *score};
          result.eval_curve.push_back(p);
          if (options.on_eval) options.on_eval(p);
        }
        metrics.row(done, last, score);
      }
    }
  } catch (const NumericError& e) {
    if (!options.checkpoint_dir.empty())
      save_checkpoint(options.checkpoint_dir + "/nan_snapshot",
                      {config, env.name, dataset.behavior_tag, agent, tf});
    throw NumericError(e.op(), "training diverged at step " + std::to_string(agent.step) + ": " + e.what());
  }

  if (options.final_eval_episodes > 0)
    result.final_scores = evaluate_policy(config, agent, env, tf, options.final_eval_episodes,
                                          mix_seed(config.seed, kFinalEvalIndex));
  if (!options.checkpoint_dir.empty())
    save_checkpoint(options.checkpoint_dir, {config, env.name, dataset.behavior_tag, agent, tf});
  return result;
}

}  // namespace unifloral
