#pragma once

#include <cstdint>

#include <json.hpp>

namespace unifloral {

// How a trained ensemble is used during policy optimization.
struct DynamicsSamplingConfig {
  int num_members = 7;
  int num_elites = 5;
  double pessimism_coef = 1.0;     // reward penalty scale on ensemble disagreement
  int rollout_length = 5;
  int rollout_batch = 1000;        // start states per rollout round
  int rollout_interval = 1000;     // train steps between rollout rounds
  double real_ratio = 0.05;        // share of real transitions in each mixed batch
  bool use_morel_halt = false;
  double morel_pessimism = 1.0;    // multiplier on the halting threshold
  int synthetic_buffer_capacity = 100000;

  void validate() const;  // throws ConfigError
  friend bool operator==(const DynamicsSamplingConfig&, const DynamicsSamplingConfig&) = default;
};

// Maximum-likelihood ensemble training.
struct DynamicsTrainConfig {
  int num_members = 7;
  int num_elites = 5;
  int hidden_width = 64;
  int hidden_layers = 3;
  double lr = 1e-3;
  int batch_size = 256;
  int max_epochs = 50;
  int patience = 5;              // epochs without validation improvement
  double holdout_fraction = 0.1;
  double logvar_min = -10.0;
  double logvar_max = 1.0;
  std::uint64_t seed = 0;

  void validate() const;
  friend bool operator==(const DynamicsTrainConfig&, const DynamicsTrainConfig&) = default;
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(DynamicsSamplingConfig, num_members, num_elites,
                                                pessimism_coef, rollout_length, rollout_batch,
                                                rollout_interval, real_ratio, use_morel_halt,
                                                morel_pessimism, synthetic_buffer_capacity)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(DynamicsTrainConfig, num_members, num_elites,
                                                hidden_width, hidden_layers, lr, batch_size,
                                                max_epochs, patience, holdout_fraction, logvar_min,
                                                logvar_max, seed)

}  // namespace unifloral
