#pragma once

// The unified critic, value and actor objectives.
//
// Every loss is available at two levels: a tape-level function over bound
// network variables (used for composition and for stop-gradient checks), and
// a wrapper that binds parameter vectors and returns the loss value with its
// exact gradient. Random draws are explicit standard-normal matrices so that
// results are reproducible and comparable against independent oracles.

#include <optional>
#include <vector>

#include "unifloral/core/policy.hpp"
#include "unifloral/envdata/dataset.hpp"

namespace unifloral {

// Feature-major batch: obs_dim x B, act_dim x B, and 1 x B rows.
template <typename T>
struct Batch {
  ad::Matrix<T> obs, action, reward, next_obs, next_action, done;
  Eigen::Index size() const { return obs.cols(); }
};

template <typename T>
Batch<T> to_batch(const TransitionBatch& t);

// Read-only views of every network's parameters.
template <typename T>
struct NetParams {
  std::span<const T> actor;
  std::span<const T> actor_target;
  std::vector<std::span<const T>> critics;
  std::vector<std::span<const T>> critic_targets;
  std::span<const T> value;  // empty without a value network
};

NetParams<float> net_params(const AgentState& agent);

// ---- tape level -----------------------------------------------------------

template <typename T>
std::vector<MlpVars<T>> bind_critics(ad::Tape<T>& tape, const Architectures& archs,
                                     const std::vector<std::span<const T>>& params, bool trainable);

// q_n(s, a) for every critic, each 1 x B.
template <typename T>
std::vector<ad::Var<T>> ensemble_q(const Architectures& archs, const std::vector<MlpVars<T>>& critics,
                                   const ad::Var<T>& obs, const ad::Var<T>& action);

template <typename T>
ad::Var<T> aggregate_q(const std::vector<ad::Var<T>>& qs, QAggregation how);

template <typename T>
struct TapeValueTarget {
  ad::Var<T> v_next;         // 1 x B
  ad::Var<T> next_action;    // act_dim x B, the (target-)actor action at s'
  ad::Var<T> next_log_prob;  // 1 x B, stochastic policies only
};

// Branch 1 (use_value_target): v(s'). Branch 2: min_n q'_n(s', a~) with
// a~ = clip(pi(s') + clip(sigma * half * eps, -c * half, c * half), low, high)
// for deterministic policies, or a reparameterized sample for stochastic ones.
// pi is the target actor when use_target_actor, else the online actor.
template <typename T>
TapeValueTarget<T> value_target_on_tape(ad::Tape<T>& tape, const UnifloralConfig& config,
                                        const Architectures& archs, const ActorVars<T>& next_actor,
                                        const std::vector<MlpVars<T>>& target_critics,
                                        const MlpVars<T>* value_net, const ad::Var<T>& next_obs,
                                        const ad::Matrix<T>& next_eps);

// v_hat = v_next - critic_bc_coef * |a~ - a'|^2 + critic_entropy_coef * H,
// with H = -log pi(a~ | s') when the entropy terms are active.
template <typename T>
ad::Var<T> augment_on_tape(ad::Tape<T>& tape, const UnifloralConfig& config,
                           const TapeValueTarget<T>& vt, const ad::Matrix<T>& next_action_data);

template <typename T>
struct CriticTerms {
  ad::Var<T> total, bellman, diversity;
};

// L_v = sum_n mean_b (q_n - y)^2 with y detached;
// diversity = coef / (N - 1) * mean_b sum_{i != j} <grad_a q_i, grad_a q_j>.
template <typename T>
CriticTerms<T> critic_loss_on_tape(ad::Tape<T>& tape, const UnifloralConfig& config,
                                   const Architectures& archs, const std::vector<MlpVars<T>>& critics,
                                   const ad::Matrix<T>& obs, const ad::Matrix<T>& action,
                                   const ad::Var<T>& target);

// ---- parameter level ------------------------------------------------------

template <typename T>
struct ValueTarget {
  ad::Matrix<T> v_next;
  ad::Matrix<T> next_action;
  ad::Matrix<T> next_log_prob;  // empty for deterministic policies
};

template <typename T>
ValueTarget<T> compute_value_target(const UnifloralConfig& config, const Architectures& archs,
                                    const NetParams<T>& p, const Batch<T>& batch,
                                    const ad::Matrix<T>& next_eps);

template <typename T>
ad::Matrix<T> augment_value_target(const UnifloralConfig& config, const ValueTarget<T>& vt,
                                   const ad::Matrix<T>& next_action_data);

// r + (1 - d) * gamma * v_hat
template <typename T>
ad::Matrix<T> bellman_target(const UnifloralConfig& config, const ad::Matrix<T>& v_hat,
                             const Batch<T>& batch);

template <typename T>
struct LossResult {
  T value = 0;
  std::vector<std::pair<std::string, T>> components;
  std::vector<Params<T>> grads;  // one per trained network
};

// Gradients for every online critic. `target` is the Bellman target (1 x B).
template <typename T>
LossResult<T> critic_loss(const UnifloralConfig& config, const Architectures& archs,
                          const NetParams<T>& p, const Batch<T>& batch, const ad::Matrix<T>& target);

// Expectile regression of v(s) toward min_n q'_n(s, a). Gradient for the value net.
template <typename T>
LossResult<T> value_loss(const UnifloralConfig& config, const Architectures& archs,
                         const NetParams<T>& p, const Batch<T>& batch);

// beta_q L_q + beta_BC L_BC - beta_H H. Gradient for the actor.
// actor_eps: standard normal draws (act_dim x B) for the policy sample at s.
template <typename T>
LossResult<T> actor_loss(const UnifloralConfig& config, const Architectures& archs,
                         const NetParams<T>& p, const Batch<T>& batch, const ad::Matrix<T>& actor_eps);

// The clipped advantage weights min(A_max, exp(eta (min_n q'_n(s,a) - v(s)))), 1 x B.
template <typename T>
ad::Matrix<T> awr_weights(const UnifloralConfig& config, const Architectures& archs,
                          const NetParams<T>& p, const Batch<T>& batch);

}  // namespace unifloral
