#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "unifloral/numerics/mlp.hpp"

namespace unifloral {

enum class LrSchedule { constant, cosine };

struct AdamState {
  std::vector<float> first_moment;
  std::vector<float> second_moment;
  std::int64_t step_count = 0;
  double base_lr = 1e-3;
  LrSchedule schedule = LrSchedule::constant;
  std::int64_t total_steps = 1;  // cosine horizon
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  static AdamState create(std::size_t num_params, double lr,
                          LrSchedule schedule = LrSchedule::constant,
                          std::int64_t total_steps = 1);

  // Learning rate used by the next step: base_lr, or
  // base_lr * 0.5 * (1 + cos(pi * min(step, total) / total)) under cosine.
  double effective_lr() const;
};

// Bias-corrected Adam update, in place. Throws NumericError on a non-finite
// gradient and ContractError on length mismatch.
void adam_step(AdamState& state, std::span<float> params, std::span<const float> grad);

// (1 - step_size) * target + step_size * online
ParamVector polyak_update(std::span<const float> target, std::span<const float> online,
                          double step_size);
void polyak_update_inplace(std::span<float> target, std::span<const float> online,
                           double step_size);

}  // namespace unifloral
