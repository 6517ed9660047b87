#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "unifloral/core/losses.hpp"
#include "unifloral/dynamics/ensemble.hpp"

namespace unifloral {

// Loss values of the most recent updates within one train_step.
struct StepMetrics {
  double critic_loss = 0.0;
  double bellman_loss = 0.0;
  double diversity_loss = 0.0;
  double value_loss = 0.0;
  double actor_loss = 0.0;
  double q_loss = 0.0;
  double bc_loss = 0.0;
  double entropy = 0.0;
};

// One optimization step. `batches` holds either one batch, reused for every
// critic update, or exactly critic_updates_per_step batches. Each critic
// update performs a value update (when a value network exists), a critic
// update and a Polyak update of the critic targets; then the actor is updated
// once on the last batch and the target actor is Polyak-averaged.
// Throws NumericError if any loss is non-finite.
StepMetrics train_step(const UnifloralConfig& config, AgentState& agent,
                       std::span<const TransitionBatch> batches);

// Observation statistics applied to raw environment observations before the
// policy sees them. Empty vectors mean identity.
struct ObsTransform {
  std::vector<float> mean;
  std::vector<float> std;
  std::vector<double> apply(std::span<const double> obs) const;
};

// Per-episode normalized scores of the policy over `episodes` episodes run in
// lockstep. Resets draw from Rng(seed, 0); stochastic actions from Rng(seed, 1).
std::vector<double> evaluate_policy(const UnifloralConfig& config, const AgentState& agent,
                                    const EnvSpec& env, const ObsTransform& transform,
                                    int episodes, std::uint64_t seed);

struct EvalPoint {
  std::int64_t step = 0;
  double mean_score = 0.0;
};

struct TrainOptions {
  // Pretrained ensemble for model-based configs. When absent, one is trained
  // from the dataset with default settings and the config's member counts.
  const DynamicsEnsemble* dynamics = nullptr;
  int final_eval_episodes = 0;        // 0 skips the final evaluation
  std::string metrics_path;           // empty: no CSV
  std::string checkpoint_dir;         // empty: no checkpoint
  std::function<void(const EvalPoint&)> on_eval;
};

struct TrainResult {
  AgentState agent;
  ObsTransform transform;
  std::vector<EvalPoint> eval_curve;
  std::vector<double> final_scores;  // final_eval_episodes normalized scores
};

// Trains for num_train_steps, evaluating every eval_interval steps (and after
// the last step) over eval_episodes episodes. The dataset's source_env must
// match env.name. A non-finite loss aborts with NumericError after writing a
// diagnostic snapshot to <checkpoint_dir>/nan_snapshot when a directory is set.
TrainResult train(const UnifloralConfig& config, const Dataset& dataset, const EnvSpec& env,
                  const TrainOptions& options = {});

// Default dynamics settings used for model-based training.
DynamicsTrainConfig dynamics_train_config(const DynamicsSamplingConfig& sampling, std::uint64_t seed);

}  // namespace unifloral
