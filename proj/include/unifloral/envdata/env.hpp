#pragma once

// Bundled deterministic continuous-control environments.
//
// point_reach: 2D double integrator. obs = (pos, vel, goal) in R^6, actions in
//   [-1, 1]^2 are accelerations. pos' = pos + dt * vel, vel' = vel + dt * a with
//   dt = 0.05. Reward -|pos' - goal|. Terminates once |pos' - goal| < 0.05.
//   Reset: pos uniform in [-1, 1]^2, vel = 0, goal uniform on the circle of
//   radius 2 around the origin. Horizon 100.
// pendulum: torque-limited swing-up. State (theta, theta_dot) with theta = 0
//   upright; obs = (cos theta, sin theta, theta_dot), torque in [-2, 2].
//   theta_dot' = clip(theta_dot + dt * (15 sin theta + 3 u), -8, 8),
//   theta' = theta + dt * theta_dot', dt = 0.05.
//   Reward -(wrap(theta)^2 + 0.1 theta_dot^2 + 0.001 u^2). Reset: theta uniform
//   in [-pi, pi], theta_dot uniform in [-1, 1]. Horizon 200, no termination.

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "unifloral/numerics/rng.hpp"

namespace unifloral {

// Pure predicate over (obs, action, next_obs); shared with model rollouts.
using TerminationFn =
    std::function<bool(std::span<const double>, std::span<const double>, std::span<const double>)>;

struct EnvSpec {
  std::string name;
  int obs_dim = 0;
  int act_dim = 0;
  std::vector<double> action_low;
  std::vector<double> action_high;
  int horizon = 0;
  TerminationFn termination;
  // Reference mean episodic returns of the uniform-random policy and of the
  // scripted expert, frozen from simulate_reference_returns(spec, 10000, 0).
  double random_return = 0.0;
  double expert_return = 0.0;
};

const EnvSpec& env_spec(const std::string& name);  // throws ConfigError
std::vector<std::string> env_names();

// Internal simulator state. For point_reach this equals the observation; for
// pendulum it is (theta, theta_dot).
struct EnvState {
  std::vector<double> x;
};

struct StepResult {
  EnvState next;
  double reward = 0.0;
  bool terminated = false;
};

EnvState env_reset(const EnvSpec& spec, Rng& rng);
std::vector<double> env_observe(const EnvSpec& spec, const EnvState& state);
// Clips the action to bounds. Throws NumericError on a non-finite action.
StepResult env_step(const EnvSpec& spec, const EnvState& state, std::span<const double> action);

std::vector<double> clip_action(const EnvSpec& spec, std::span<const double> action);

// Scripted controller of near-optimal quality, as a function of the observation.
std::vector<double> expert_action(const EnvSpec& spec, std::span<const double> obs);

// 100 * (ret - random) / (expert - random)
double normalized_score(const EnvSpec& spec, double episode_return);

// Runs one episode to termination or the horizon.
using ObsPolicy = std::function<std::vector<double>(std::span<const double> obs)>;
double run_episode(const EnvSpec& spec, const ObsPolicy& policy, Rng& rng);

struct ReferenceReturns {
  double random_mean = 0.0;
  double expert_mean = 0.0;
};
// Resets come from Rng(seed, 0) for both policies; random actions from Rng(seed, 1).
ReferenceReturns simulate_reference_returns(const EnvSpec& spec, int episodes, std::uint64_t seed);

}  // namespace unifloral
