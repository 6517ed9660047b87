#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include <json.hpp>

#include "unifloral/dynamics/config.hpp"
#include "unifloral/numerics/adam.hpp"

namespace unifloral {

enum class QAggregation { min, mean, first };

// Enum conversions reject unknown strings with ConfigError.
void to_json(nlohmann::json& j, QAggregation q);
void from_json(const nlohmann::json& j, QAggregation& q);
void to_json(nlohmann::json& j, LrSchedule s);
void from_json(const nlohmann::json& j, LrSchedule& s);

// The unified hyperparameter space. Field names double as JSON keys.
struct UnifloralConfig {
  // Model design
  int batch_size = 256;
  double actor_lr = 3e-4;
  double critic_lr = 3e-4;          // also used by the value network
  LrSchedule lr_schedule = LrSchedule::constant;  // applied to the actor optimizer
  double gamma = 0.99;
  double polyak_step = 0.005;
  bool normalize_obs = false;
  int actor_layers = 3;
  int actor_hidden = 256;
  int critic_layers = 3;
  int critic_hidden = 256;
  bool actor_layer_norm = false;
  bool critic_layer_norm = false;

  // Policy head
  bool deterministic_policy = true;
  bool deterministic_eval = true;
  bool tanh_mean = false;
  bool learn_std = false;
  double log_std_min = -5.0;
  double log_std_max = 2.0;

  // Critic objective
  int num_critics = 2;
  double critic_bc_coef = 0.0;
  int critic_updates_per_step = 1;
  double diversity_coef = 0.0;
  double policy_noise = 0.0;        // target smoothing std, in units of the action half-range
  double noise_clip = 0.0;
  bool use_target_actor = false;
  double critic_entropy_coef = 0.0;
  bool use_value_target = false;
  double value_expectile = 0.7;

  // Actor objective
  double actor_bc_coef = 0.0;
  double actor_q_coef = 1.0;
  bool use_q_target_in_actor = false;
  bool normalize_q_loss = false;
  QAggregation q_aggregation = QAggregation::min;
  bool use_awr = false;
  double awr_temperature = 3.0;
  double awr_clip = 100.0;
  bool use_entropy_loss = false;
  double actor_entropy_coef = 0.0;

  // Run
  std::int64_t num_train_steps = 1000000;
  int eval_interval = 5000;
  int eval_episodes = 10;
  std::uint64_t seed = 0;

  // Dynamics modelling (model-based methods only)
  std::optional<DynamicsSamplingConfig> model_based;

  bool has_value_net() const { return use_value_target || use_awr; }
  bool has_critics() const { return num_critics > 0; }
  bool stochastic() const { return !deterministic_policy; }
  bool entropy_in_actor() const { return use_entropy_loss && stochastic(); }
  bool entropy_in_critic() const { return use_entropy_loss && stochastic(); }

  // Throws ConfigError describing the first violated constraint.
  void validate() const;

  friend bool operator==(const UnifloralConfig&, const UnifloralConfig&) = default;
};

void to_json(nlohmann::json& j, const UnifloralConfig& c);
// Missing keys keep their defaults; unknown keys are rejected with ConfigError.
void from_json(const nlohmann::json& j, UnifloralConfig& c);

UnifloralConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const UnifloralConfig& c);

}  // namespace unifloral
