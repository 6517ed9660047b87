#pragma once

#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "unifloral/core/config.hpp"
#include "unifloral/numerics/rng.hpp"

namespace unifloral {

// Sampling range of one hyperparameter.
//   fixed        value
//   uniform      low + (high - low) * u
//   log_uniform  exp(uniform(log low, log high)); low > 0
//   int_uniform  integer uniform on [low, high], inclusive
//   choice       one of options, uniformly
// For uniform and log_uniform, zero_probability > 0 first returns exactly 0
// with that probability.
struct HyperRange {
  enum class Kind { fixed, uniform, log_uniform, int_uniform, choice };
  Kind kind = Kind::fixed;
  double low = 0.0;
  double high = 0.0;
  double zero_probability = 0.0;
  nlohmann::json value;                  // fixed
  std::vector<nlohmann::json> options;   // choice

  static HyperRange fixed_value(nlohmann::json v);
  static HyperRange uniform(double lo, double hi, double zero_probability = 0.0);
  static HyperRange log_uniform(double lo, double hi, double zero_probability = 0.0);
  static HyperRange int_uniform(long long lo, long long hi);
  static HyperRange choice(std::vector<nlohmann::json> options);

  void validate() const;  // throws ConfigError
  nlohmann::json sample(Rng& rng) const;
  friend bool operator==(const HyperRange&, const HyperRange&) = default;
};

// A method: a config template plus ranges keyed by config field name. Keys of
// the form "model_based.<field>" address the dynamics sampling settings.
struct MethodSpec {
  std::string name;
  UnifloralConfig base;
  std::map<std::string, HyperRange> ranges;
  bool model_based = false;

  void validate() const;  // every ranged key exists; model_based matches base
  friend bool operator==(const MethodSpec&, const MethodSpec&) = default;
};

// Names accepted by preset(), in table order.
std::vector<std::string> preset_names();
MethodSpec preset(const std::string& name);  // throws ConfigError listing valid names

// Draws every ranged hyperparameter (in key order) from Rng(seed, 0); the
// training seed is mix_seed(seed, 1).
UnifloralConfig sample_config(const MethodSpec& spec, std::uint64_t seed);

// The config with every range replaced by its midpoint (the geometric
// midpoint for log_uniform, the first option for choice).
UnifloralConfig midpoint_config(const MethodSpec& spec);

// Caps network width and batch size for single-core runs; everything else is
// left as configured.
inline constexpr int kToyHidden = 64;
inline constexpr int kToyBatch = 256;
void apply_toy_scale(UnifloralConfig& c);

// JSON method files.
void to_json(nlohmann::json& j, const HyperRange& r);
void from_json(const nlohmann::json& j, HyperRange& r);
nlohmann::json method_to_json(const MethodSpec& m);
MethodSpec method_from_json(const nlohmann::json& j);
MethodSpec load_method_file(const std::string& path);
void save_method_file(const MethodSpec& m, const std::string& path);

// Markdown table of every preset's fixed values and ranges.
std::string preset_cross_reference();

}  // namespace unifloral
