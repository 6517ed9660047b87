#include "unifloral/core/agent.hpp"

#include "unifloral/numerics/errors.hpp"

namespace unifloral {

Architectures make_architectures(const UnifloralConfig& config, int obs_dim, int act_dim,
                                 std::span<const double> action_low,
                                 std::span<const double> action_high) {
  if (obs_dim < 1 || act_dim < 1) throw ContractError("make_architectures: bad dimensions");
  if (action_low.size() != static_cast<std::size_t>(act_dim) || action_high.size() != action_low.size())
    throw ContractError("make_architectures: action bound dimension mismatch");
  Architectures a;
  a.obs_dim = obs_dim;
  a.act_dim = act_dim;

  a.actor.input_dim = obs_dim;
  a.actor.hidden_widths.assign(static_cast<std::size_t>(config.actor_layers), config.actor_hidden);
  a.actor.use_layer_norm = config.actor_layer_norm;
  if (config.deterministic_policy) {
    a.actor.output_dim = act_dim;
    a.actor.final_activation = FinalActivation::tanh;
  } else {
    a.separate_log_std = config.learn_std;
    a.actor.output_dim = config.learn_std ? act_dim : 2 * act_dim;
  }

  a.critic.input_dim = obs_dim + act_dim;
  a.critic.hidden_widths.assign(static_cast<std::size_t>(config.critic_layers), config.critic_hidden);
  a.critic.output_dim = 1;
  a.critic.use_layer_norm = config.critic_layer_norm;

  a.value = a.critic;
  a.value.input_dim = obs_dim;

  for (int i = 0; i < act_dim; ++i) {
    const double lo = action_low[static_cast<std::size_t>(i)], hi = action_high[static_cast<std::size_t>(i)];
    if (!(lo < hi)) throw ContractError("make_architectures: action_low must be below action_high");
    a.action_center.push_back(0.5 * (lo + hi));
    a.action_half.push_back(0.5 * (hi - lo));
  }
  return a;
}

Architectures make_architectures(const UnifloralConfig& config, const EnvSpec& env) {
  return make_architectures(config, env.obs_dim, env.act_dim, env.action_low, env.action_high);
}

AgentState init_agent(const UnifloralConfig& config, const Architectures& archs) {
  config.validate();
  AgentState s;
  s.archs = archs;
  Rng init(config.seed, 0);
  s.actor = init_params(archs.actor, init);
  if (archs.separate_log_std) s.actor.insert(s.actor.end(), static_cast<std::size_t>(archs.act_dim), 0.0f);
  s.actor_target = s.actor;
  for (int n = 0; n < config.num_critics; ++n) {
    s.critics.push_back(init_params(archs.critic, init));
    s.critic_opts.push_back(AdamState::create(s.critics.back().size(), config.critic_lr));
  }
  s.critic_targets = s.critics;
  if (config.has_value_net()) {
    s.value = init_params(archs.value, init);
    s.value_opt = AdamState::create(s.value->size(), config.critic_lr);
  }
  s.actor_opt = AdamState::create(s.actor.size(), config.actor_lr, config.lr_schedule,
                                  std::max<std::int64_t>(1, config.num_train_steps));
  s.rng = Rng(config.seed, 1);
  return s;
}

}  // namespace unifloral
