#pragma once

#include <functional>

#include "unifloral/dynamics/ensemble.hpp"

namespace unifloral {

// Maps raw observations (obs_dim x B) to actions (act_dim x B).
using BatchPolicy = std::function<Eigen::MatrixXd(const Eigen::MatrixXd& obs)>;

struct RolloutStats {
  std::size_t transitions = 0;
  std::size_t terminated = 0;
  std::size_t halted = 0;
};

// Autoregressive model rollouts from start_obs (obs_dim x B, raw). At each
// step a uniformly drawn elite supplies the state change sample; rewards are
// penalized; done comes from the termination predicate or, with MOReL
// halting, from elite disagreement reaching morel_pessimism * threshold (the
// halting transition itself is emitted with done = 1). next_action is the
// rollout policy's action at next_obs.
TransitionBatch synthetic_rollout(const DynamicsEnsemble& e, const BatchPolicy& policy,
                                  const Eigen::MatrixXd& start_obs,
                                  const DynamicsSamplingConfig& config,
                                  const TerminationFn& termination, Rng& rng,
                                  RolloutStats* stats = nullptr);

// Fixed-capacity FIFO of synthetic transitions.
class SyntheticBuffer {
 public:
  SyntheticBuffer(int obs_dim, int act_dim, std::size_t capacity);
  void add(const TransitionBatch& batch);
  std::size_t size() const { return data_.size(); }
  std::size_t capacity() const { return capacity_; }
  const TransitionBatch& data() const { return data_; }

 private:
  TransitionBatch data_;
  std::size_t capacity_;
  std::size_t next_ = 0;  // overwrite position once full
};

// round(real_ratio * batch_size) real samples, the rest synthetic, shuffled.
TransitionBatch mix_batches(const TransitionBatch& real, const TransitionBatch& synthetic,
                            double real_ratio, std::size_t batch_size, Rng& rng);

}  // namespace unifloral
