#include "unifloral/core/checkpoint.hpp"

#include <filesystem>
#include <fstream>

#include "unifloral/numerics/errors.hpp"
#include "unifloral/numerics/param_io.hpp"

namespace unifloral {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kCheckpointVersion = 1;

// The actor file holds the MLP part; a separate log-std vector goes to the manifest.
void save_actor(const fs::path& path, const Architectures& archs, const ParamVector& p, json& log_std) {
  const std::size_t n = archs.actor.param_count();
  save_params(path.string(), archs.actor, std::span<const float>(p).first(n));
  log_std = std::vector<float>(p.begin() + static_cast<std::ptrdiff_t>(n), p.end());
}

ParamVector load_actor(const fs::path& path, const Architectures& archs, const json& log_std) {
  auto loaded = load_params(path.string());
  if (!(loaded.arch == archs.actor)) throw FormatError("actor architecture does not match the config");
  auto extra = log_std.get<std::vector<float>>();
  if (extra.size() != (archs.separate_log_std ? static_cast<std::size_t>(archs.act_dim) : 0))
    throw FormatError("actor log-std length does not match the config");
  loaded.params.insert(loaded.params.end(), extra.begin(), extra.end());
  return loaded.params;
}

ParamVector load_net(const fs::path& path, const MlpArch& arch) {
  auto loaded = load_params(path.string());
  if (!(loaded.arch == arch)) throw FormatError("architecture mismatch in " + path.string());
  return loaded.params;
}

std::string critic_file(const char* prefix, std::size_t n) {
  return std::string(prefix) + "_" + std::to_string(n) + ".bin";
}

}  // namespace

void save_checkpoint(const std::string& dir, const Checkpoint& c) {
  const fs::path root(dir);
  std::error_code ec;
  fs::create_directories(root, ec);
  if (ec) throw IoError("cannot create checkpoint directory " + dir + ": " + ec.message());
  const AgentState& a = c.agent;

  json m;
  m["format_version"] = kCheckpointVersion;
  m["config"] = config_to_json(c.config);
  m["env"] = c.env;
  m["dataset_tag"] = c.dataset_tag;
  m["step"] = a.step;
  m["rng_state"] = a.rng.state();
  m["obs_mean"] = c.transform.mean;
  m["obs_std"] = c.transform.std;
  m["actor_opt_steps"] = a.actor_opt.step_count;
  save_actor(root / "actor.bin", a.archs, a.actor, m["actor_log_std"]);
  save_actor(root / "actor_target.bin", a.archs, a.actor_target, m["actor_target_log_std"]);
  for (std::size_t n = 0; n < a.critics.size(); ++n) {
    save_params((root / critic_file("critic", n)).string(), a.archs.critic, a.critics[n]);
    save_params((root / critic_file("critic_target", n)).string(), a.archs.critic, a.critic_targets[n]);
  }
  if (a.value) save_params((root / "value.bin").string(), a.archs.value, *a.value);

  std::ofstream os(root / "checkpoint.json", std::ios::trunc);
  if (!os) throw IoError("cannot write checkpoint manifest in " + dir);
  os << m.dump(2) << '\n';
  if (!os) throw IoError("failed writing checkpoint manifest in " + dir);
}

Checkpoint load_checkpoint(const std::string& dir) {
  const fs::path root(dir);
  std::ifstream is(root / "checkpoint.json");
  if (!is) throw IoError("no checkpoint manifest in " + dir);
  json m;
  try {
    m = json::parse(is);
  } catch (const json::exception& e) {
    throw FormatError(std::string("bad checkpoint manifest: ") + e.what());
  }
  if (m.value("format_version", 0) != kCheckpointVersion)
    throw VersionError("unsupported checkpoint version in " + dir);

  Checkpoint c;
  try {
    c.config = config_from_json(m.at("config"));
    c.env = m.at("env").get<std::string>();
    c.dataset_tag = m.at("dataset_tag").get<std::string>();
    c.transform.mean = m.at("obs_mean").get<std::vector<float>>();
    c.transform.std = m.at("obs_std").get<std::vector<float>>();
    const EnvSpec& env = env_spec(c.env);
    c.agent = init_agent(c.config, make_architectures(c.config, env));
    AgentState& a = c.agent;
    a.step = m.at("step").get<std::int64_t>();
    a.rng.set_state(m.at("rng_state").get<std::string>());
    a.actor_opt.step_count = m.at("actor_opt_steps").get<std::int64_t>();
    a.actor = load_actor(root / "actor.bin", a.archs, m.at("actor_log_std"));
    a.actor_target = load_actor(root / "actor_target.bin", a.archs, m.at("actor_target_log_std"));
    for (std::size_t n = 0; n < a.critics.size(); ++n) {
      a.critics[n] = load_net(root / critic_file("critic", n), a.archs.critic);
      a.critic_targets[n] = load_net(root / critic_file("critic_target", n), a.archs.critic);
    }
    if (a.value) a.value = load_net(root / "value.bin", a.archs.value);
  } catch (const json::exception& e) {
    throw FormatError(std::string("bad checkpoint manifest: ") + e.what());
  }
  return c;
}

}  // namespace unifloral
