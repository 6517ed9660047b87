#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "unifloral/envdata/env.hpp"

namespace unifloral {

// Row-major arrays, one row per transition. Viewed column-major as
// (dim x count) they are the feature-major matrices used by the networks.
//
// next_action holds the behavior policy's action at next_obs (the action
// actually taken next within an episode, or a fresh query of the behavior
// policy at an episode boundary). The critic-side behavior-cloning penalty
// consumes it.
struct TransitionBatch {
  int obs_dim = 0;
  int act_dim = 0;
  std::vector<float> obs;
  std::vector<float> action;
  std::vector<float> reward;
  std::vector<float> next_obs;
  std::vector<float> next_action;
  std::vector<float> done;  // 1 on environment termination, 0 otherwise (including timeouts)

  std::size_t size() const { return reward.size(); }
  void reserve(std::size_t n);
  void append(const TransitionBatch& other, std::size_t index);
  // Throws ContractError on inconsistent lengths.
  void check_consistent() const;

  friend bool operator==(const TransitionBatch&, const TransitionBatch&) = default;
};

enum class Behavior { random, medium, expert, medium_replay };

Behavior parse_behavior(const std::string& tag);  // throws ConfigError listing valid tags
std::string behavior_tag(Behavior b);
std::vector<std::string> behavior_tags();

struct Dataset {
  TransitionBatch transitions;
  std::vector<float> obs_mean;
  std::vector<float> obs_std;
  bool normalized = false;
  std::string source_env;
  std::string behavior_tag;

  std::size_t size() const { return transitions.size(); }
  friend bool operator==(const Dataset&, const Dataset&) = default;
};

inline constexpr double kMinObsStd = 1e-6;
inline constexpr int kDatasetFormatVersion = 1;

// Noise levels as fractions of the action range. medium_replay concatenates
// four equal segments with the listed fractions, noisiest first.
inline constexpr double kMediumNoise = 0.3;
inline constexpr double kReplayNoise[] = {0.6, 0.45, 0.3, 0.15};

// Behavior policy as an observation -> action map drawing noise from `rng`.
ObsPolicy behavior_policy(const EnvSpec& spec, Behavior behavior, double noise_fraction, Rng& rng);

// Exactly n transitions from complete or truncated episodes. Statistics of
// the raw observations are stored; the dataset is not normalized.
Dataset generate_dataset(const EnvSpec& spec, Behavior behavior, std::size_t n, std::uint64_t seed);

// Mean episodic return of the behavior over `episodes` episodes.
double behavior_mean_return(const EnvSpec& spec, Behavior behavior, int episodes,
                            std::uint64_t seed);

// Per-dimension mean and population std of obs, std floored at kMinObsStd.
void compute_obs_stats(const TransitionBatch& t, std::vector<float>& mean, std::vector<float>& std);

// Shifts and scales obs and next_obs by the stored statistics (recomputed
// from obs). Throws ContractError if already normalized.
Dataset normalize_observations(const Dataset& d);
Dataset denormalize_observations(const Dataset& d);
std::vector<double> normalize_obs(const Dataset& d, std::span<const double> obs);

// Uniform sampling with replacement. Throws ContractError on an empty dataset.
TransitionBatch sample_batch(const TransitionBatch& t, std::size_t batch_size, Rng& rng);
TransitionBatch gather(const TransitionBatch& t, std::span<const std::size_t> indices);

// File: 8-byte magic "UFDATA01", u64 LE header length, JSON header, then LE
// float32 arrays in order obs_mean, obs_std, obs, action, reward, next_obs,
// next_action, done. See docs/dataset_format.md.
void write_dataset(std::ostream& os, const Dataset& d);
Dataset read_dataset(std::istream& is);
void save_dataset(const Dataset& d, const std::string& path);
Dataset load_dataset(const std::string& path);

}  // namespace unifloral
