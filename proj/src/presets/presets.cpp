#include "unifloral/presets/presets.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "unifloral/numerics/errors.hpp"

namespace unifloral {

using nlohmann::json;
using Kind = HyperRange::Kind;

namespace {

const char* kind_name(Kind k) {
  switch (k) {
    case Kind::fixed: return "fixed";
    case Kind::uniform: return "uniform";
    case Kind::log_uniform: return "log_uniform";
    case Kind::int_uniform: return "int_uniform";
    case Kind::choice: return "choice";
  }
  return "fixed";
}

Kind parse_kind(const std::string& s) {
  for (Kind k : {Kind::fixed, Kind::uniform, Kind::log_uniform, Kind::int_uniform, Kind::choice})
    if (s == kind_name(k)) return k;
  throw ConfigError("unknown range kind '" + s +
                    "' (valid: fixed, uniform, log_uniform, int_uniform, choice)");
}

// Values shared by every column of the hyperparameter table, including the
// entries that are inactive for a given method.
UnifloralConfig table_defaults() {
  UnifloralConfig c;
  c.batch_size = 256;
  c.actor_lr = 3e-4;
  c.critic_lr = 3e-4;
  c.lr_schedule = LrSchedule::constant;
  c.gamma = 0.99;
  c.polyak_step = 0.005;
  c.actor_hidden = 256;
  c.critic_hidden = 256;
  c.log_std_min = -5.0;
  c.log_std_max = 2.0;
  c.awr_temperature = 1.0;
  c.awr_clip = 100.0;
  c.value_expectile = 0.8;
  c.use_q_target_in_actor = false;
  return c;
}

MethodSpec bc() {
  MethodSpec m;
  m.name = "bc";
  m.base = table_defaults();
  m.base.actor_layers = 3;
  m.base.deterministic_policy = true;
  m.base.num_critics = 0;
  m.base.actor_bc_coef = 1.0;
  m.base.actor_q_coef = 0.0;
  return m;
}

MethodSpec iql() {
  MethodSpec m;
  m.name = "iql";
  auto& c = m.base = table_defaults();
  c.lr_schedule = LrSchedule::cosine;
  c.normalize_obs = true;
  c.actor_layers = 2;
  c.deterministic_policy = false;
  c.deterministic_eval = true;
  c.tanh_mean = true;
  c.learn_std = true;
  c.log_std_min = -20.0;
  c.num_critics = 2;
  c.critic_layers = 2;
  c.actor_bc_coef = 1.0;
  c.actor_q_coef = 0.0;
  c.q_aggregation = QAggregation::min;
  c.use_awr = true;
  c.use_value_target = true;  // the table lists False; see README
  m.ranges["awr_temperature"] = HyperRange::uniform(0.5, 10.0);
  m.ranges["value_expectile"] = HyperRange::uniform(0.5, 0.9);
  return m;
}

MethodSpec sac_n() {
  MethodSpec m;
  m.name = "sac_n";
  auto& c = m.base = table_defaults();
  c.actor_layers = 3;
  c.deterministic_policy = false;
  c.deterministic_eval = false;
  c.tanh_mean = false;
  c.learn_std = false;
  c.num_critics = 10;
  c.critic_layers = 3;
  c.actor_q_coef = 1.0;
  c.q_aggregation = QAggregation::min;
  c.use_entropy_loss = true;
  c.actor_entropy_coef = 1.0;
  c.critic_entropy_coef = 1.0;
  m.ranges["num_critics"] = HyperRange::int_uniform(5, 200);
  return m;
}

MethodSpec edac() {
  MethodSpec m = sac_n();
  m.name = "edac";
  m.ranges["num_critics"] = HyperRange::int_uniform(10, 50);
  m.ranges["diversity_coef"] = HyperRange::log_uniform(1.0, 1e3, 0.1);
  return m;
}

MethodSpec td3_bc() {
  MethodSpec m;
  m.name = "td3_bc";
  auto& c = m.base = table_defaults();
  c.normalize_obs = true;
  c.actor_layers = 2;
  c.deterministic_policy = true;
  c.deterministic_eval = false;
  c.tanh_mean = true;
  c.num_critics = 2;
  c.critic_layers = 2;
  c.actor_bc_coef = 1.0;
  c.actor_q_coef = 2.5;
  c.normalize_q_loss = true;
  c.q_aggregation = QAggregation::first;
  c.critic_updates_per_step = 2;
  c.policy_noise = 0.2;
  c.noise_clip = 0.5;
  c.use_target_actor = true;
  m.ranges["actor_q_coef"] = HyperRange::uniform(1.0, 4.0);
  return m;
}

MethodSpec rebrac() {
  MethodSpec m;
  m.name = "rebrac";
  auto& c = m.base = table_defaults();
  c.batch_size = 1024;
  c.actor_lr = 1e-3;
  c.critic_lr = 1e-3;
  c.actor_layers = 3;
  c.actor_layer_norm = true;
  c.deterministic_policy = true;
  c.deterministic_eval = false;
  c.tanh_mean = true;
  c.num_critics = 2;
  c.critic_layers = 3;
  c.critic_layer_norm = true;
  c.actor_q_coef = 1.0;
  c.normalize_q_loss = true;
  c.q_aggregation = QAggregation::min;
  c.critic_updates_per_step = 2;
  c.policy_noise = 0.2;
  c.noise_clip = 0.5;
  c.use_target_actor = true;
  m.ranges["actor_bc_coef"] = HyperRange::log_uniform(5e-4, 1.0);
  m.ranges["critic_bc_coef"] = HyperRange::uniform(0.0, 0.1);
  return m;
}

MethodSpec td3_awr() {
  MethodSpec m = rebrac();
  m.name = "td3_awr";
  m.base.use_awr = true;
  m.base.awr_clip = 100.0;
  m.ranges["awr_temperature"] = HyperRange::uniform(0.5, 10.0);
  return m;
}

void add_mopo_dynamics(MethodSpec& m) {
  m.model_based = true;
  m.base.model_based = DynamicsSamplingConfig{};
  m.base.model_based->real_ratio = 0.05;
  m.ranges["model_based.pessimism_coef"] = HyperRange::log_uniform(0.1, 10.0);
  m.ranges["model_based.rollout_length"] = HyperRange::choice({1, 5});
}

MethodSpec mopo() {
  MethodSpec m = sac_n();
  m.name = "mopo";
  m.ranges.erase("num_critics");
  m.base.num_critics = 10;
  add_mopo_dynamics(m);
  return m;
}

MethodSpec morel() {
  MethodSpec m = mopo();
  m.name = "morel";
  m.base.model_based->use_morel_halt = true;
  m.ranges["model_based.morel_pessimism"] = HyperRange::uniform(0.5, 2.0);
  m.ranges["model_based.rollout_length"] = HyperRange::choice({25, 50});
  return m;
}

MethodSpec mobrac() {
  MethodSpec m = rebrac();
  m.name = "mobrac";
  add_mopo_dynamics(m);
  return m;
}

struct Entry {
  const char* name;
  MethodSpec (*make)();
};

constexpr Entry kPresets[] = {
    {"bc", bc},         {"td3_bc", td3_bc}, {"rebrac", rebrac}, {"iql", iql},
    {"sac_n", sac_n},   {"edac", edac},     {"mopo", mopo},     {"morel", morel},
    {"td3_awr", td3_awr}, {"mobrac", mobrac},
};

// Splits "model_based.x" into ("model_based", "x").
std::pair<std::string, std::string> split_key(const std::string& key) {
  const auto dot = key.find('.');
  if (dot == std::string::npos) return {key, ""};
  return {key.substr(0, dot), key.substr(dot + 1)};
}

void set_key(json& config, const std::string& key, const json& value) {
  auto [head, tail] = split_key(key);
  if (tail.empty()) {
    config[head] = value;
  } else {
    if (!config.contains(head) || config[head].is_null())
      throw ConfigError("range '" + key + "' needs a model_based template");
    config[head][tail] = value;
  }
}

std::string number(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

std::string describe(const HyperRange& r) {
  switch (r.kind) {
    case Kind::fixed: return r.value.dump();
    case Kind::uniform:
      return "U[" + number(r.low) + ", " + number(r.high) + "]" +
             (r.zero_probability > 0 ? " or 0 (p=" + number(r.zero_probability) + ")" : "");
    case Kind::log_uniform:
      return "logU[" + number(r.low) + ", " + number(r.high) + "]" +
             (r.zero_probability > 0 ? " or 0 (p=" + number(r.zero_probability) + ")" : "");
    case Kind::int_uniform: return "int[" + number(r.low) + ", " + number(r.high) + "]";
    case Kind::choice: {
      std::string s = "{";
      for (std::size_t i = 0; i < r.options.size(); ++i) s += (i ? ", " : "") + r.options[i].dump();
      return s + "}";
    }
  }
  return "";
}

}  // namespace

HyperRange HyperRange::fixed_value(json v) {
  HyperRange r;
  r.kind = Kind::fixed;
  r.value = std::move(v);
  return r;
}

HyperRange HyperRange::uniform(double lo, double hi, double zero_probability) {
  HyperRange r;
  r.kind = Kind::uniform;
  r.low = lo;
  r.high = hi;
  r.zero_probability = zero_probability;
  return r;
}

HyperRange HyperRange::log_uniform(double lo, double hi, double zero_probability) {
  HyperRange r = uniform(lo, hi, zero_probability);
  r.kind = Kind::log_uniform;
  return r;
}

HyperRange HyperRange::int_uniform(long long lo, long long hi) {
  HyperRange r;
  r.kind = Kind::int_uniform;
  r.low = static_cast<double>(lo);
  r.high = static_cast<double>(hi);
  return r;
}

HyperRange HyperRange::choice(std::vector<json> options) {
  HyperRange r;
  r.kind = Kind::choice;
  r.options = std::move(options);
  return r;
}

void HyperRange::validate() const {
  if (!(zero_probability >= 0.0 && zero_probability < 1.0))
    throw ConfigError("zero_probability must be in [0, 1)");
  switch (kind) {
    case Kind::fixed:
      if (value.is_null()) throw ConfigError("fixed range needs a value");
      break;
    case Kind::uniform:
      if (!(std::isfinite(low) && std::isfinite(high) && low <= high))
        throw ConfigError("uniform range needs finite low <= high");
      break;
    case Kind::log_uniform:
      if (!(low > 0.0 && std::isfinite(high) && low <= high))
        throw ConfigError("log_uniform range needs 0 < low <= high");
      break;
    case Kind::int_uniform:
      if (!(low <= high) || low != std::floor(low) || high != std::floor(high))
        throw ConfigError("int_uniform range needs integer low <= high");
      break;
    case Kind::choice:
      if (options.empty()) throw ConfigError("choice range needs at least one option");
      break;
  }
}

json HyperRange::sample(Rng& rng) const {
  switch (kind) {
    case Kind::fixed: return value;
    case Kind::uniform:
    case Kind::log_uniform: {
      if (zero_probability > 0.0 && rng.uniform() < zero_probability) return 0.0;
      const double u = rng.uniform();
      if (kind == Kind::uniform) return low + (high - low) * u;
      return std::exp(std::log(low) + (std::log(high) - std::log(low)) * u);
    }
    case Kind::int_uniform: {
      const auto lo = static_cast<long long>(low);
      const auto span = static_cast<std::size_t>(static_cast<long long>(high) - lo + 1);
      return lo + static_cast<long long>(rng.index(span));
    }
    case Kind::choice: return options[rng.index(options.size())];
  }
  return value;
}

void MethodSpec::validate() const {
  if (name.empty()) throw ConfigError("method needs a name");
  if (model_based != base.model_based.has_value())
    throw ConfigError("method '" + name + "': model_based flag does not match the template");
  const json cfg = config_to_json(base);
  for (const auto& [key, range] : ranges) {
    auto [head, tail] = split_key(key);
    const bool known = tail.empty() ? cfg.contains(head) && head != "model_based"
                                    : head == "model_based" && !cfg[head].is_null() &&
                                          cfg[head].contains(tail);
    if (!known) throw ConfigError("method '" + name + "': unknown ranged key '" + key + "'");
    range.validate();
  }
  base.validate();
}

std::vector<std::string> preset_names() {
  std::vector<std::string> out;
  for (const auto& e : kPresets) out.emplace_back(e.name);
  return out;
}

MethodSpec preset(const std::string& name) {
  for (const auto& e : kPresets)
    if (name == e.name) return e.make();
  std::string valid;
  for (const auto& n : preset_names()) valid += (valid.empty() ? "" : ", ") + n;
  throw ConfigError("unknown method '" + name + "' (valid: " + valid + ")");
}

UnifloralConfig sample_config(const MethodSpec& spec, std::uint64_t seed) {
  spec.validate();
  Rng rng(seed, 0);
  json cfg = config_to_json(spec.base);
  for (const auto& [key, range] : spec.ranges) set_key(cfg, key, range.sample(rng));
  UnifloralConfig c = config_from_json(cfg);
  c.seed = mix_seed(seed, 1);
  c.validate();
  return c;
}

UnifloralConfig midpoint_config(const MethodSpec& spec) {
  spec.validate();
  json cfg = config_to_json(spec.base);
  for (const auto& [key, r] : spec.ranges) {
    json v;
    switch (r.kind) {
      case Kind::fixed: v = r.value; break;
      case Kind::uniform: v = 0.5 * (r.low + r.high); break;
      case Kind::log_uniform: v = std::sqrt(r.low * r.high); break;
      case Kind::int_uniform: v = static_cast<long long>(r.low + r.high) / 2; break;
      case Kind::choice: v = r.options.front(); break;
    }
    set_key(cfg, key, v);
  }
  UnifloralConfig c = config_from_json(cfg);
  c.validate();
  return c;
}

void apply_toy_scale(UnifloralConfig& c) {
  c.actor_hidden = std::min(c.actor_hidden, kToyHidden);
  c.critic_hidden = std::min(c.critic_hidden, kToyHidden);
  c.batch_size = std::min(c.batch_size, kToyBatch);
}

void to_json(json& j, const HyperRange& r) {
  j = json::object();
  j["kind"] = kind_name(r.kind);
  switch (r.kind) {
    case Kind::fixed: j["value"] = r.value; break;
    case Kind::uniform:
    case Kind::log_uniform:
      j["low"] = r.low;
      j["high"] = r.high;
      if (r.zero_probability > 0.0) j["zero_probability"] = r.zero_probability;
      break;
    case Kind::int_uniform:
      j["low"] = static_cast<long long>(r.low);
      j["high"] = static_cast<long long>(r.high);
      break;
    case Kind::choice: j["options"] = r.options; break;
  }
}

void from_json(const json& j, HyperRange& r) {
  if (!j.is_object()) throw ConfigError("range must be a JSON object");
  try {
    r = HyperRange{};
    r.kind = parse_kind(j.at("kind").get<std::string>());
    for (const auto& [key, v] : j.items())
      if (key != "kind" && key != "value" && key != "low" && key != "high" && key != "options" &&
          key != "zero_probability")
        throw ConfigError("unknown range key '" + key + "'");
    switch (r.kind) {
      case Kind::fixed: r.value = j.at("value"); break;
      case Kind::uniform:
      case Kind::log_uniform:
      case Kind::int_uniform:
        r.low = j.at("low").get<double>();
        r.high = j.at("high").get<double>();
        r.zero_probability = j.value("zero_probability", 0.0);
        break;
      case Kind::choice: r.options = j.at("options").get<std::vector<json>>(); break;
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("invalid range: ") + e.what());
  }
  r.validate();
}

json method_to_json(const MethodSpec& m) {
  json j;
  j["name"] = m.name;
  j["model_based"] = m.model_based;
  j["base"] = config_to_json(m.base);
  j["ranges"] = json::object();
  for (const auto& [key, r] : m.ranges) j["ranges"][key] = r;
  return j;
}

MethodSpec method_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("method file must hold a JSON object");
  for (const auto& [key, v] : j.items())
    if (key != "name" && key != "model_based" && key != "base" && key != "ranges")
      throw ConfigError("unknown method key '" + key + "'");
  MethodSpec m;
  try {
    m.name = j.at("name").get<std::string>();
    m.base = config_from_json(j.at("base"));
    m.model_based = j.value("model_based", m.base.model_based.has_value());
    if (j.contains("ranges"))
      for (const auto& [key, r] : j.at("ranges").items()) m.ranges[key] = r.get<HyperRange>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("invalid method file: ") + e.what());
  }
  m.validate();
  return m;
}

MethodSpec load_method_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open method file: " + path);
  json j;
  try {
    j = json::parse(is);
  } catch (const json::exception& e) {
    throw ConfigError("method file " + path + " is not valid JSON: " + e.what());
  }
  return method_from_json(j);
}

void save_method_file(const MethodSpec& m, const std::string& path) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("cannot write method file: " + path);
  os << method_to_json(m).dump(2) << '\n';
  if (!os) throw IoError("failed writing method file: " + path);
}

std::string preset_cross_reference() {
  std::vector<MethodSpec> specs;
  for (const auto& n : preset_names()) specs.push_back(preset(n));
  std::vector<std::string> keys;
  const json defaults = config_to_json(UnifloralConfig{});
  const json dyn_defaults = DynamicsSamplingConfig{};
  for (const auto& [k, v] : defaults.items())
    if (k != "model_based" && k != "seed" && k != "num_train_steps" && k != "eval_interval" &&
        k != "eval_episodes")
      keys.push_back(k);
  for (const auto& [k, v] : dyn_defaults.items()) keys.push_back("model_based." + k);

  std::ostringstream os;
  os << "| hyperparameter |";
  for (const auto& s : specs) os << ' ' << s.name << " |";
  os << "\n|---|";
  for (std::size_t i = 0; i < specs.size(); ++i) os << "---|";
  os << '\n';
  for (const auto& key : keys) {
    os << "| " << key << " |";
    for (const auto& s : specs) {
      std::string cell;
      if (auto it = s.ranges.find(key); it != s.ranges.end()) {
        cell = "**" + describe(it->second) + "**";
      } else {
        const json cfg = config_to_json(s.base);
        auto [head, tail] = split_key(key);
        if (tail.empty()) cell = cfg[head].dump();
        else cell = cfg[head].is_null() ? "" : cfg[head][tail].dump();
      }
      os << ' ' << cell << " |";
    }
    os << '\n';
  }
  return os.str();
}

}  // namespace unifloral
