#include "unifloral/numerics/adam.hpp"

#include <cmath>
#include <numbers>

namespace unifloral {

AdamState AdamState::create(std::size_t num_params, double lr, LrSchedule schedule,
                            std::int64_t total_steps) {
  if (!(lr >= 0.0)) throw ContractError("Adam: learning rate must be non-negative");
  if (total_steps < 1) throw ContractError("Adam: total_steps must be positive");
  AdamState s;
  s.first_moment.assign(num_params, 0.0f);
  s.second_moment.assign(num_params, 0.0f);
  s.base_lr = lr;
  s.schedule = schedule;
  s.total_steps = total_steps;
  return s;
}

double AdamState::effective_lr() const {
  if (schedule == LrSchedule::constant) return base_lr;
  const double t = static_cast<double>(std::min(step_count, total_steps)) /
                   static_cast<double>(total_steps);
  return base_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * t));
}

void adam_step(AdamState& state, std::span<float> params, std::span<const float> grad) {
  const std::size_t n = params.size();
  if (grad.size() != n || state.first_moment.size() != n || state.second_moment.size() != n)
    throw ContractError("adam_step: length mismatch");
  for (float g : grad)
    if (!std::isfinite(g)) throw NumericError("adam_step", "adam_step: non-finite gradient");

  const double lr = state.effective_lr();
  const double t = static_cast<double>(state.step_count + 1);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  const float b1 = static_cast<float>(state.beta1), b2 = static_cast<float>(state.beta2);
  for (std::size_t i = 0; i < n; ++i) {
    float& m = state.first_moment[i];
    float& v = state.second_moment[i];
    m = b1 * m + (1.0f - b1) * grad[i];
    v = b2 * v + (1.0f - b2) * grad[i] * grad[i];
    const double m_hat = m / c1;
    const double v_hat = v / c2;
    params[i] -= static_cast<float>(lr * m_hat / (std::sqrt(v_hat) + state.eps));
  }
  ++state.step_count;
}

void polyak_update_inplace(std::span<float> target, std::span<const float> online,
                           double step_size) {
  if (!(step_size >= 0.0 && step_size <= 1.0))
    throw ContractError("polyak_update: step size must lie in [0, 1]");
  if (target.size() != online.size()) throw ContractError("polyak_update: length mismatch");
  if (step_size == 1.0) {
    std::copy(online.begin(), online.end(), target.begin());
    return;
  }
  const float a = static_cast<float>(step_size);
  for (std::size_t i = 0; i < target.size(); ++i)
    target[i] = (1.0f - a) * target[i] + a * online[i];
}

ParamVector polyak_update(std::span<const float> target, std::span<const float> online,
                          double step_size) {
  ParamVector out(target.begin(), target.end());
  polyak_update_inplace(out, online, step_size);
  return out;
}

}  // namespace unifloral
