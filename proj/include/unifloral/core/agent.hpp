#pragma once

#include <optional>
#include <vector>

#include "unifloral/core/config.hpp"
#include "unifloral/envdata/env.hpp"
#include "unifloral/numerics/adam.hpp"
#include "unifloral/numerics/mlp.hpp"

namespace unifloral {

// Network shapes and the action-space affine map derived from a config.
//
// Actor parameter layout: the MLP parameters, followed by act_dim
// state-independent log-std values when the policy is stochastic with
// learn_std. A stochastic actor without learn_std outputs (mean, log_std).
// Critics map (obs, action) to a scalar; the value network maps obs to a scalar.
struct Architectures {
  int obs_dim = 0;
  int act_dim = 0;
  MlpArch actor;
  MlpArch critic;
  MlpArch value;
  bool separate_log_std = false;
  std::vector<double> action_center;
  std::vector<double> action_half;

  std::size_t actor_param_count() const {
    return actor.param_count() + (separate_log_std ? static_cast<std::size_t>(act_dim) : 0);
  }
};

Architectures make_architectures(const UnifloralConfig& config, int obs_dim, int act_dim,
                                 std::span<const double> action_low,
                                 std::span<const double> action_high);
Architectures make_architectures(const UnifloralConfig& config, const EnvSpec& env);

// Parameters, target copies, optimizer states and the training RNG.
struct AgentState {
  Architectures archs;
  ParamVector actor;
  ParamVector actor_target;
  std::vector<ParamVector> critics;
  std::vector<ParamVector> critic_targets;
  std::optional<ParamVector> value;
  AdamState actor_opt;
  std::vector<AdamState> critic_opts;
  std::optional<AdamState> value_opt;
  std::int64_t step = 0;
  Rng rng{0};

  friend bool operator==(const AgentState& a, const AgentState& b) {
    return a.actor == b.actor && a.actor_target == b.actor_target && a.critics == b.critics &&
           a.critic_targets == b.critic_targets && a.value == b.value && a.step == b.step &&
           a.rng == b.rng;
  }
};

// Initializes all networks from config.seed; targets start equal to online nets.
AgentState init_agent(const UnifloralConfig& config, const Architectures& archs);

}  // namespace unifloral
