#include "unifloral/envdata/dataset.hpp"

#include <cmath>
#include <fstream>

#include "unifloral/numerics/errors.hpp"
#include "unifloral/numerics/param_io.hpp"

namespace unifloral {

namespace {

constexpr std::string_view kDatasetMagic = "UFDATA01";

template <typename V>
void append_row(V& dst, const V& src, std::size_t index, int width) {
  const auto w = static_cast<std::size_t>(width);
  dst.insert(dst.end(), src.begin() + static_cast<std::ptrdiff_t>(index * w),
             src.begin() + static_cast<std::ptrdiff_t>((index + 1) * w));
}

void push(std::vector<float>& dst, std::span<const double> v) {
  for (double x : v) dst.push_back(static_cast<float>(x));
}

}  // namespace

void TransitionBatch::reserve(std::size_t n) {
  obs.reserve(n * static_cast<std::size_t>(obs_dim));
  next_obs.reserve(n * static_cast<std::size_t>(obs_dim));
  action.reserve(n * static_cast<std::size_t>(act_dim));
  next_action.reserve(n * static_cast<std::size_t>(act_dim));
  reward.reserve(n);
  done.reserve(n);
}

void TransitionBatch::append(const TransitionBatch& other, std::size_t index) {
  append_row(obs, other.obs, index, obs_dim);
  append_row(action, other.action, index, act_dim);
  append_row(reward, other.reward, index, 1);
  append_row(next_obs, other.next_obs, index, obs_dim);
  append_row(next_action, other.next_action, index, act_dim);
  append_row(done, other.done, index, 1);
}

void TransitionBatch::check_consistent() const {
  const std::size_t n = reward.size();
  const auto od = static_cast<std::size_t>(obs_dim), ad = static_cast<std::size_t>(act_dim);
  if (obs.size() != n * od || next_obs.size() != n * od || action.size() != n * ad ||
      next_action.size() != n * ad || done.size() != n)
    throw ContractError("transition arrays have inconsistent lengths");
}

Behavior parse_behavior(const std::string& tag) {
  if (tag == "random") return Behavior::random;
  if (tag == "medium") return Behavior::medium;
  if (tag == "expert") return Behavior::expert;
  if (tag == "medium_replay" || tag == "medium-replay") return Behavior::medium_replay;
  throw ConfigError("unknown behavior '" + tag + "' (valid: random, medium, expert, medium_replay)");
}

std::string behavior_tag(Behavior b) {
  switch (b) {
    case Behavior::random: return "random";
    case Behavior::medium: return "medium";
    case Behavior::expert: return "expert";
    case Behavior::medium_replay: return "medium_replay";
  }
  return "";
}

std::vector<std::string> behavior_tags() { return {"random", "medium", "expert", "medium_replay"}; }

ObsPolicy behavior_policy(const EnvSpec& spec, Behavior behavior, double noise_fraction, Rng& rng) {
  if (behavior == Behavior::random) {
    return [&spec, &rng](std::span<const double>) {
      std::vector<double> a(static_cast<std::size_t>(spec.act_dim));
      for (std::size_t i = 0; i < a.size(); ++i)
        a[i] = rng.uniform(spec.action_low[i], spec.action_high[i]);
      return a;
    };
  }
  if (behavior == Behavior::expert) noise_fraction = 0.0;
  return [&spec, &rng, noise_fraction](std::span<const double> obs) {
    auto a = expert_action(spec, obs);
    if (noise_fraction > 0.0) {
      for (std::size_t i = 0; i < a.size(); ++i)
        a[i] += noise_fraction * (spec.action_high[i] - spec.action_low[i]) * rng.normal();
    }
    return clip_action(spec, a);
  };
}

namespace {

// Appends `count` transitions collected with `policy`, starting fresh episodes.
void collect(const EnvSpec& spec, const ObsPolicy& policy, std::size_t count, Rng& reset_rng,
             TransitionBatch& out) {
  std::size_t collected = 0;
  while (collected < count) {
    EnvState st = env_reset(spec, reset_rng);
    auto obs = env_observe(spec, st);
    auto act = policy(obs);
    for (int t = 0; t < spec.horizon && collected < count; ++t) {
      auto res = env_step(spec, st, act);
      auto next_obs = env_observe(spec, res.next);
      auto next_act = policy(next_obs);
      push(out.obs, obs);
      push(out.action, act);
      out.reward.push_back(static_cast<float>(res.reward));
      push(out.next_obs, next_obs);
      push(out.next_action, next_act);
      out.done.push_back(res.terminated ? 1.0f : 0.0f);
      ++collected;
      if (res.terminated) break;
      st = std::move(res.next);
      obs = std::move(next_obs);
      act = std::move(next_act);
    }
  }
}

}  // namespace

Dataset generate_dataset(const EnvSpec& spec, Behavior behavior, std::size_t n, std::uint64_t seed) {
  if (n < 1) throw ContractError("generate_dataset: need at least one transition");
  Rng reset_rng(seed, 0), noise_rng(seed, 1);
  Dataset d;
  d.source_env = spec.name;
  d.behavior_tag = behavior_tag(behavior);
  d.transitions.obs_dim = spec.obs_dim;
  d.transitions.act_dim = spec.act_dim;
  d.transitions.reserve(n);
  if (behavior == Behavior::medium_replay) {
    const std::size_t segments = std::size(kReplayNoise);
    for (std::size_t k = 0; k < segments; ++k) {
      const std::size_t count = k + 1 < segments ? n / segments : n - (segments - 1) * (n / segments);
      if (count == 0) continue;
      auto policy = behavior_policy(spec, Behavior::medium, kReplayNoise[k], noise_rng);
      collect(spec, policy, count, reset_rng, d.transitions);
    }
  } else {
    auto policy = behavior_policy(spec, behavior, kMediumNoise, noise_rng);
    collect(spec, policy, n, reset_rng, d.transitions);
  }
  compute_obs_stats(d.transitions, d.obs_mean, d.obs_std);
  return d;
}

double behavior_mean_return(const EnvSpec& spec, Behavior behavior, int episodes,
                            std::uint64_t seed) {
  Rng reset_rng(seed, 0), noise_rng(seed, 1);
  double total = 0.0;
  for (int e = 0; e < episodes; ++e) {
    double noise = kMediumNoise;
    if (behavior == Behavior::medium_replay)
      noise = kReplayNoise[static_cast<std::size_t>(e) * std::size(kReplayNoise) /
                           static_cast<std::size_t>(episodes)];
    auto policy = behavior_policy(spec, behavior, noise, noise_rng);
    total += run_episode(spec, policy, reset_rng);
  }
  return total / episodes;
}

void compute_obs_stats(const TransitionBatch& t, std::vector<float>& mean, std::vector<float>& std) {
  const auto od = static_cast<std::size_t>(t.obs_dim);
  const std::size_t n = t.size();
  std::vector<double> m(od, 0.0), v(od, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < od; ++j) m[j] += t.obs[i * od + j];
  for (auto& x : m) x /= static_cast<double>(std::max<std::size_t>(n, 1));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < od; ++j) {
      const double e = t.obs[i * od + j] - m[j];
      v[j] += e * e;
    }
  mean.assign(od, 0.0f);
  std.assign(od, 1.0f);
  for (std::size_t j = 0; j < od; ++j) {
    mean[j] = static_cast<float>(m[j]);
    const double s = std::sqrt(v[j] / static_cast<double>(std::max<std::size_t>(n, 1)));
    std[j] = static_cast<float>(std::max(s, kMinObsStd));
  }
}

namespace {

void affine_obs(std::vector<float>& data, const std::vector<float>& mean,
                const std::vector<float>& std, bool forward) {
  const std::size_t od = mean.size();
  for (std::size_t i = 0; i < data.size(); ++i) {
    const std::size_t j = i % od;
    const double x = data[i];
    data[i] = static_cast<float>(forward ? (x - mean[j]) / std[j] : x * std[j] + mean[j]);
  }
}

}  // namespace

Dataset normalize_observations(const Dataset& d) {
  if (d.normalized) throw ContractError("dataset is already normalized");
  Dataset out = d;
  compute_obs_stats(out.transitions, out.obs_mean, out.obs_std);
  affine_obs(out.transitions.obs, out.obs_mean, out.obs_std, true);
  affine_obs(out.transitions.next_obs, out.obs_mean, out.obs_std, true);
  out.normalized = true;
  return out;
}

Dataset denormalize_observations(const Dataset& d) {
  if (!d.normalized) throw ContractError("dataset is not normalized");
  Dataset out = d;
  affine_obs(out.transitions.obs, out.obs_mean, out.obs_std, false);
  affine_obs(out.transitions.next_obs, out.obs_mean, out.obs_std, false);
  out.normalized = false;
  return out;
}

std::vector<double> normalize_obs(const Dataset& d, std::span<const double> obs) {
  std::vector<double> out(obs.begin(), obs.end());
  if (!d.normalized) return out;
  for (std::size_t j = 0; j < out.size(); ++j)
    out[j] = (out[j] - static_cast<double>(d.obs_mean[j])) / static_cast<double>(d.obs_std[j]);
  return out;
}

TransitionBatch gather(const TransitionBatch& t, std::span<const std::size_t> indices) {
  TransitionBatch out;
  out.obs_dim = t.obs_dim;
  out.act_dim = t.act_dim;
  out.reserve(indices.size());
  for (std::size_t i : indices) {
    if (i >= t.size()) throw ContractError("gather: index out of range");
    out.append(t, i);
  }
  return out;
}

TransitionBatch sample_batch(const TransitionBatch& t, std::size_t batch_size, Rng& rng) {
  if (t.size() == 0) throw ContractError("sample_batch: empty dataset");
  if (batch_size < 1) throw ContractError("sample_batch: batch_size must be positive");
  std::vector<std::size_t> idx(batch_size);
  for (auto& i : idx) i = rng.index(t.size());
  return gather(t, idx);
}

void write_dataset(std::ostream& os, const Dataset& d) {
  const auto& t = d.transitions;
  t.check_consistent();
  nlohmann::json header{{"format_version", kDatasetFormatVersion},
                        {"obs_dim", t.obs_dim},
                        {"act_dim", t.act_dim},
                        {"count", t.size()},
                        {"normalized", d.normalized},
                        {"source_env", d.source_env},
                        {"behavior_tag", d.behavior_tag},
                        {"fields", {"obs_mean", "obs_std", "obs", "action", "reward", "next_obs",
                                    "next_action", "done"}}};
  std::vector<float> payload;
  payload.reserve(2 * d.obs_mean.size() + t.obs.size() * 2 + t.action.size() * 2 + 2 * t.size());
  for (const auto* v : {&d.obs_mean, &d.obs_std, &t.obs, &t.action, &t.reward, &t.next_obs,
                        &t.next_action, &t.done})
    payload.insert(payload.end(), v->begin(), v->end());
  binio::write_frame(os, kDatasetMagic, header, payload);
}

Dataset read_dataset(std::istream& is) {
  auto frame = binio::read_frame(is, kDatasetMagic, [](const nlohmann::json& h) {
    if (h.at("format_version").get<int>() != kDatasetFormatVersion)
      throw VersionError("unsupported dataset format version");
    const auto od = h.at("obs_dim").get<std::size_t>(), ad = h.at("act_dim").get<std::size_t>();
    const auto n = h.at("count").get<std::size_t>();
    if (od == 0 || ad == 0) throw FormatError("dataset dimensions must be positive");
    return 2 * od + n * (2 * od + 2 * ad + 2);
  });
  const auto& h = frame.header;
  Dataset d;
  auto& t = d.transitions;
  try {
    t.obs_dim = h.at("obs_dim").get<int>();
    t.act_dim = h.at("act_dim").get<int>();
    d.normalized = h.at("normalized").get<bool>();
    d.source_env = h.at("source_env").get<std::string>();
    d.behavior_tag = h.at("behavior_tag").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed dataset header: ") + e.what());
  }
  for (float v : frame.payload)
    if (!std::isfinite(v)) throw NonFiniteDataError("non-finite value in dataset");
  const auto n = h.at("count").get<std::size_t>();
  const auto od = static_cast<std::size_t>(t.obs_dim), ad = static_cast<std::size_t>(t.act_dim);
  auto it = frame.payload.begin();
  auto take = [&](std::vector<float>& dst, std::size_t count) {
    dst.assign(it, it + static_cast<std::ptrdiff_t>(count));
    it += static_cast<std::ptrdiff_t>(count);
  };
  take(d.obs_mean, od);
  take(d.obs_std, od);
  take(t.obs, n * od);
  take(t.action, n * ad);
  take(t.reward, n);
  take(t.next_obs, n * od);
  take(t.next_action, n * ad);
  take(t.done, n);
  return d;
}

void save_dataset(const Dataset& d, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open '" + path + "' for writing");
  write_dataset(os, d);
}

Dataset load_dataset(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open '" + path + "'");
  return read_dataset(is);
}

}  // namespace unifloral
