#include "unifloral/core/config.hpp"

#include <cmath>

#include "unifloral/numerics/errors.hpp"

namespace unifloral {

namespace {

#define UNIFLORAL_CONFIG_FIELDS(X)                                                          \
  X(batch_size) X(actor_lr) X(critic_lr) X(lr_schedule) X(gamma) X(polyak_step)              \
  X(normalize_obs) X(actor_layers) X(actor_hidden) X(critic_layers) X(critic_hidden)         \
  X(actor_layer_norm) X(critic_layer_norm) X(deterministic_policy) X(deterministic_eval)     \
  X(tanh_mean) X(learn_std) X(log_std_min) X(log_std_max) X(num_critics) X(critic_bc_coef)   \
  X(critic_updates_per_step) X(diversity_coef) X(policy_noise) X(noise_clip)                 \
  X(use_target_actor) X(critic_entropy_coef) X(use_value_target) X(value_expectile)          \
  X(actor_bc_coef) X(actor_q_coef) X(use_q_target_in_actor) X(normalize_q_loss)              \
  X(q_aggregation) X(use_awr) X(awr_temperature) X(awr_clip) X(use_entropy_loss)             \
  X(actor_entropy_coef) X(num_train_steps) X(eval_interval) X(eval_episodes) X(seed)

void require(bool ok, const std::string& what) {
  if (!ok) throw ConfigError(what);
}

}  // namespace

void to_json(nlohmann::json& j, QAggregation q) {
  j = q == QAggregation::min ? "min" : q == QAggregation::mean ? "mean" : "first";
}

void from_json(const nlohmann::json& j, QAggregation& q) {
  const auto s = j.get<std::string>();
  if (s == "min") q = QAggregation::min;
  else if (s == "mean") q = QAggregation::mean;
  else if (s == "first") q = QAggregation::first;
  else throw ConfigError("unknown q_aggregation '" + s + "' (valid: min, mean, first)");
}

void to_json(nlohmann::json& j, LrSchedule s) { j = s == LrSchedule::constant ? "constant" : "cosine"; }

void from_json(const nlohmann::json& j, LrSchedule& s) {
  const auto v = j.get<std::string>();
  if (v == "constant") s = LrSchedule::constant;
  else if (v == "cosine") s = LrSchedule::cosine;
  else throw ConfigError("unknown lr_schedule '" + v + "' (valid: constant, cosine)");
}

void UnifloralConfig::validate() const {
  auto finite = [](double x) { return std::isfinite(x); };
  require(batch_size >= 1, "batch_size must be >= 1");
  require(finite(actor_lr) && actor_lr >= 0.0, "actor_lr must be >= 0");
  require(finite(critic_lr) && critic_lr >= 0.0, "critic_lr must be >= 0");
  require(gamma > 0.0 && gamma <= 1.0, "gamma must be in (0, 1]");
  require(polyak_step > 0.0 && polyak_step <= 1.0, "polyak_step must be in (0, 1]");
  require(actor_layers >= 1 && actor_hidden >= 1, "actor needs at least one hidden layer");
  require(critic_layers >= 1 && critic_hidden >= 1, "critic needs at least one hidden layer");
  require(finite(log_std_min) && finite(log_std_max) && log_std_min < log_std_max,
          "log_std_min must be below log_std_max");
  require(num_critics >= 0, "num_critics must be >= 0");
  require(critic_updates_per_step >= 1, "critic_updates_per_step must be >= 1");
  require(finite(diversity_coef) && diversity_coef >= 0.0, "diversity_coef must be >= 0");
  require(!(diversity_coef > 0.0 && num_critics < 2),
          "diversity_coef > 0 requires num_critics >= 2");
  require(finite(policy_noise) && policy_noise >= 0.0, "policy_noise must be >= 0");
  require(finite(noise_clip) && noise_clip >= 0.0, "noise_clip must be >= 0");
  require(finite(critic_bc_coef) && finite(critic_entropy_coef), "critic coefficients must be finite");
  require(value_expectile > 0.0 && value_expectile < 1.0, "value_expectile must be in (0, 1)");
  require(finite(actor_bc_coef) && finite(actor_q_coef) && finite(actor_entropy_coef),
          "actor coefficients must be finite");
  require(awr_temperature > 0.0 && finite(awr_temperature), "awr_temperature must be positive");
  require(awr_clip > 0.0 && finite(awr_clip), "awr_clip must be positive");
  require(num_train_steps >= 0, "num_train_steps must be >= 0");
  require(eval_interval >= 1, "eval_interval must be >= 1");
  require(eval_episodes >= 1, "eval_episodes must be >= 1");
  const bool needs_critics = actor_q_coef != 0.0 || use_awr || use_value_target ||
                             diversity_coef > 0.0 || model_based.has_value();
  require(!(needs_critics && num_critics < 1),
          "actor_q_coef, AWR, value targets and model-based training require num_critics >= 1");
  if (model_based) model_based->validate();
}

void to_json(nlohmann::json& j, const UnifloralConfig& c) {
  j = nlohmann::json::object();
#define X(f) j[#f] = c.f;
  UNIFLORAL_CONFIG_FIELDS(X)
#undef X
  j["model_based"] = c.model_based ? nlohmann::json(*c.model_based) : nlohmann::json(nullptr);
}

void from_json(const nlohmann::json& j, UnifloralConfig& c) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  const nlohmann::json reference = UnifloralConfig{};
  for (const auto& [key, value] : j.items())
    if (!reference.contains(key)) throw ConfigError("unknown config key '" + key + "'");
  try {
#define X(f) \
  if (j.contains(#f)) j.at(#f).get_to(c.f);
    UNIFLORAL_CONFIG_FIELDS(X)
#undef X
    if (j.contains("model_based")) {
      const auto& mb = j.at("model_based");
      if (mb.is_null()) {
        c.model_based.reset();
      } else {
        const nlohmann::json mb_ref = DynamicsSamplingConfig{};
        for (const auto& [key, value] : mb.items())
          if (!mb_ref.contains(key)) throw ConfigError("unknown model_based key '" + key + "'");
        c.model_based = mb.get<DynamicsSamplingConfig>();
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("invalid config value: ") + e.what());
  }
}

UnifloralConfig config_from_json(const nlohmann::json& j) {
  UnifloralConfig c;
  from_json(j, c);
  return c;
}

nlohmann::json config_to_json(const UnifloralConfig& c) { return c; }

}  // namespace unifloral
