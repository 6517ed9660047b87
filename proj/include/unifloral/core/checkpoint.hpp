#pragma once

#include <string>

#include "unifloral/core/trainer.hpp"

namespace unifloral {

// Checkpoint directory layout:
//   checkpoint.json          config, env, dataset tag, step, rng state,
//                            observation statistics, optimizer counters
//   actor.bin, actor_target.bin, critic_<n>.bin, critic_target_<n>.bin,
//   value.bin                parameter files (see param_io.hpp)
// Optimizer moments are not stored; a loaded agent evaluates identically but
// resumes with fresh moments.
struct Checkpoint {
  UnifloralConfig config;
  std::string env;
  std::string dataset_tag;
  AgentState agent;
  ObsTransform transform;
};

void save_checkpoint(const std::string& dir, const Checkpoint& c);
Checkpoint load_checkpoint(const std::string& dir);

}  // namespace unifloral
