#pragma once

#include "unifloral/core/agent.hpp"

namespace unifloral {

// Actor parameters bound to a tape.
template <typename T>
struct ActorVars {
  MlpVars<T> mlp;
  ad::Var<T> log_std;  // valid only with a separate log-std vector
};

template <typename T>
ActorVars<T> bind_actor(ad::Tape<T>& tape, const Architectures& archs, std::span<const T> params,
                        bool trainable);

template <typename T>
Params<T> flatten_actor_grads(const Architectures& archs, const ActorVars<T>& vars,
                              std::span<const ad::Var<T>> grads);

// Leaves of the actor in layout order (for Tape::gradients).
template <typename T>
std::vector<ad::Var<T>> actor_leaves(const ActorVars<T>& vars);

template <typename T>
struct PolicyOutput {
  ad::Var<T> action;    // act_dim x B, inside the action bounds
  ad::Var<T> log_prob;  // 1 x B; valid only for stochastic policies sampled with noise
};

// Deterministic policy: center + half * tanh(f(s)).
// Stochastic policy (eps = standard normal draws, act_dim x B):
//   tanh_mean = false: u = mu + exp(log_std) * eps, action = center + half * tanh(u),
//     log_prob = log N(u; mu, std) - sum log(1 - tanh(u)^2 + 1e-6) - sum log(half).
//   tanh_mean = true: m = center + half * tanh(mu), x = m + exp(log_std) * eps,
//     action = clip(x, low, high), log_prob = log N(x; m, std).
// log_std is clamped to [log_std_min, log_std_max]. With eps == nullptr a
// stochastic policy returns its mean action.
template <typename T>
PolicyOutput<T> policy_forward(ad::Tape<T>& tape, const UnifloralConfig& config,
                               const Architectures& archs, const ActorVars<T>& actor,
                               const ad::Var<T>& obs, const ad::Matrix<T>* eps);

// log pi(a | s) of given in-bounds actions (stochastic policies only). 1 x B.
template <typename T>
ad::Var<T> policy_log_prob(ad::Tape<T>& tape, const UnifloralConfig& config,
                           const Architectures& archs, const ActorVars<T>& actor,
                           const ad::Var<T>& obs, const ad::Matrix<T>& actions);

enum class PolicyMode { train_sample, eval };

// obs: obs_dim x B (already normalized if training used normalized inputs).
// Eval mode returns the mean action when deterministic_eval is set; otherwise
// stochastic policies sample fresh noise from rng.
Eigen::MatrixXd policy_action(const UnifloralConfig& config, const Architectures& archs,
                              std::span<const float> actor_params, const Eigen::MatrixXd& obs,
                              PolicyMode mode, Rng& rng);

template <typename T>
ad::Matrix<T> standard_normal(Eigen::Index rows, Eigen::Index cols, Rng& rng);

}  // namespace unifloral
