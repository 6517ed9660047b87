#pragma once

#include <functional>
#include <optional>
#include <string>

#include "unifloral/core/trainer.hpp"
#include "unifloral/evalproto/score_table.hpp"
#include "unifloral/presets/presets.hpp"

namespace unifloral {

struct CollectOptions {
  int policies = 1;          // P
  int episodes = 1;          // R
  std::uint64_t master_seed = 0;
  int workers = 1;
  bool toy_scale = true;     // apply_toy_scale to every sampled config
  std::optional<std::int64_t> train_steps;  // overrides num_train_steps
  const DynamicsEnsemble* dynamics = nullptr;  // trained once from the dataset when absent
  std::function<void(std::size_t policy, bool ok)> on_done;
};

// Config p is sample_config(spec, mix_seed(master_seed, p)); each is trained
// and evaluated over R final episodes. A training abort (NumericError) leaves
// a NaN row. Evaluation during training is limited to the final step.
// Parallel workers reproduce the sequential table exactly.
ScoreTable collect_scores(const MethodSpec& spec, const Dataset& dataset, const EnvSpec& env,
                          const CollectOptions& options);

// The config used for row p.
UnifloralConfig collect_config(const MethodSpec& spec, const CollectOptions& options, std::size_t p);

}  // namespace unifloral
