#include "unifloral/envdata/env.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "unifloral/numerics/errors.hpp"

namespace unifloral {

namespace {

constexpr double kDt = 0.05;
constexpr double kGoalRadius = 0.05;
constexpr double kMaxSpeed = 8.0;
constexpr double kGoalRadiusFromOrigin = 2.0;

double wrap_angle(double th) {
  return std::remainder(th, 2.0 * std::numbers::pi);  // [-pi, pi]
}

EnvSpec make_point_reach() {
  EnvSpec s;
  s.name = "point_reach";
  s.obs_dim = 6;
  s.act_dim = 2;
  s.action_low = {-1.0, -1.0};
  s.action_high = {1.0, 1.0};
  s.horizon = 100;
  s.termination = [](std::span<const double>, std::span<const double>,
                     std::span<const double> next) {
    return std::hypot(next[0] - next[4], next[1] - next[5]) < kGoalRadius;
  };
  s.random_return = -213.67699148246948;
  s.expert_return = -56.518420958924466;
  return s;
}

EnvSpec make_pendulum() {
  EnvSpec s;
  s.name = "pendulum";
  s.obs_dim = 3;
  s.act_dim = 1;
  s.action_low = {-2.0};
  s.action_high = {2.0};
  s.horizon = 200;
  s.termination = [](std::span<const double>, std::span<const double>, std::span<const double>) {
    return false;
  };
  s.random_return = -1229.66228861062;
  s.expert_return = -151.50683567690373;
  return s;
}

const std::vector<EnvSpec>& registry() {
  static const std::vector<EnvSpec> specs{make_point_reach(), make_pendulum()};
  return specs;
}

}  // namespace

std::vector<std::string> env_names() {
  std::vector<std::string> names;
  for (const auto& s : registry()) names.push_back(s.name);
  return names;
}

const EnvSpec& env_spec(const std::string& name) {
  for (const auto& s : registry())
    if (s.name == name) return s;
  std::string valid;
  for (const auto& n : env_names()) valid += (valid.empty() ? "" : ", ") + n;
  throw ConfigError("unknown environment '" + name + "' (valid: " + valid + ")");
}

EnvState env_reset(const EnvSpec& spec, Rng& rng) {
  EnvState st;
  if (spec.name == "point_reach") {
    const double px = rng.uniform(-1.0, 1.0), py = rng.uniform(-1.0, 1.0);
    const double phi = rng.uniform(-std::numbers::pi, std::numbers::pi);
    st.x = {px, py, 0.0, 0.0, kGoalRadiusFromOrigin * std::cos(phi),
            kGoalRadiusFromOrigin * std::sin(phi)};
  } else if (spec.name == "pendulum") {
    const double th = rng.uniform(-std::numbers::pi, std::numbers::pi);
    const double thd = rng.uniform(-1.0, 1.0);
    st.x = {th, thd};
  } else {
    throw ConfigError("unknown environment '" + spec.name + "'");
  }
  return st;
}

std::vector<double> env_observe(const EnvSpec& spec, const EnvState& state) {
  if (spec.name == "pendulum") return {std::cos(state.x[0]), std::sin(state.x[0]), state.x[1]};
  return state.x;
}

std::vector<double> clip_action(const EnvSpec& spec, std::span<const double> action) {
  if (action.size() != static_cast<std::size_t>(spec.act_dim))
    throw ContractError("action dimension mismatch for '" + spec.name + "'");
  std::vector<double> a(action.begin(), action.end());
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!std::isfinite(a[i])) throw NumericError("env_step", "non-finite action");
    a[i] = std::clamp(a[i], spec.action_low[i], spec.action_high[i]);
  }
  return a;
}

StepResult env_step(const EnvSpec& spec, const EnvState& state, std::span<const double> action) {
  const auto a = clip_action(spec, action);
  StepResult r;
  if (spec.name == "point_reach") {
    const auto& x = state.x;
    r.next.x = {x[0] + kDt * x[2], x[1] + kDt * x[3], x[2] + kDt * a[0], x[3] + kDt * a[1],
                x[4], x[5]};
    r.reward = -std::hypot(r.next.x[0] - x[4], r.next.x[1] - x[5]);
    r.terminated = spec.termination(x, a, r.next.x);
  } else if (spec.name == "pendulum") {
    const double th = state.x[0], thd = state.x[1];
    const double u = a[0];
    const double thd2 = std::clamp(thd + kDt * (15.0 * std::sin(th) + 3.0 * u), -kMaxSpeed, kMaxSpeed);
    r.next.x = {th + kDt * thd2, thd2};
    const double w = wrap_angle(th);
    r.reward = -(w * w + 0.1 * thd * thd + 0.001 * u * u);
  } else {
    throw ConfigError("unknown environment '" + spec.name + "'");
  }
  return r;
}

std::vector<double> expert_action(const EnvSpec& spec, std::span<const double> obs) {
  if (spec.name == "point_reach") {
    constexpr double kp = 6.0, kd = 4.0;
    std::vector<double> a(2);
    for (int i = 0; i < 2; ++i) a[i] = kp * (obs[4 + i] - obs[i]) - kd * obs[2 + i];
    return clip_action(spec, a);
  }
  if (spec.name == "pendulum") {
    const double th = std::atan2(obs[1], obs[0]);
    const double thd = obs[2];
    double u;
    if (std::cos(th) > 0.9) {
      u = -(10.0 * th + 2.0 * thd);  // stabilize near the top
    } else {
      // Energy pumping: dE/dt = 3 u thd with E = thd^2 / 2 + 15 cos(th).
      const double energy = 0.5 * thd * thd + 15.0 * std::cos(th);
      u = 2.0 * (15.0 - energy) * (thd >= 0.0 ? 1.0 : -1.0);
    }
    std::vector<double> a{u};
    return clip_action(spec, a);
  }
  throw ConfigError("unknown environment '" + spec.name + "'");
}

double normalized_score(const EnvSpec& spec, double episode_return) {
  return 100.0 * (episode_return - spec.random_return) / (spec.expert_return - spec.random_return);
}

double run_episode(const EnvSpec& spec, const ObsPolicy& policy, Rng& rng) {
  EnvState st = env_reset(spec, rng);
  double ret = 0.0;
  for (int t = 0; t < spec.horizon; ++t) {
    const auto obs = env_observe(spec, st);
    const auto a = policy(obs);
    auto res = env_step(spec, st, a);
    ret += res.reward;
    st = std::move(res.next);
    if (res.terminated) break;
  }
  return ret;
}

}  // namespace unifloral

namespace unifloral {

ReferenceReturns simulate_reference_returns(const EnvSpec& spec, int episodes, std::uint64_t seed) {
  Rng reset_rng(seed, 0), action_rng(seed, 1);
  ReferenceReturns out;
  auto random_policy = [&](std::span<const double>) {
    std::vector<double> a(static_cast<std::size_t>(spec.act_dim));
    for (std::size_t i = 0; i < a.size(); ++i)
      a[i] = action_rng.uniform(spec.action_low[i], spec.action_high[i]);
    return a;
  };
  for (int i = 0; i < episodes; ++i) out.random_mean += run_episode(spec, random_policy, reset_rng);
  Rng expert_rng(seed, 0);
  auto expert = [&](std::span<const double> obs) { return expert_action(spec, obs); };
  for (int i = 0; i < episodes; ++i) out.expert_mean += run_episode(spec, expert, expert_rng);
  out.random_mean /= episodes;
  out.expert_mean /= episodes;
  return out;
}

}  // namespace unifloral
