#pragma once

// Random loss fixtures shared by the core tests and the acceptance checks.

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "support/oracles.hpp"
#include "unifloral/core/losses.hpp"
#include "unifloral/presets/presets.hpp"

namespace fixture {

using namespace unifloral;

inline std::vector<double> perturbed(const ParamVector& base, Rng& rng, double s) {
  std::vector<double> out(base.size());
  for (std::size_t i = 0; i < base.size(); ++i) out[i] = static_cast<double>(base[i]) + s * rng.normal();
  return out;
}

struct LossFixture {
  UnifloralConfig config;
  Architectures archs;
  std::vector<double> actor, actor_target, value;
  std::vector<std::vector<double>> critics, critic_targets;
  Batch<double> batch;
  ad::Matrix<double> next_eps, actor_eps;
  oracle::Space space;

  NetParams<double> params() const {
    NetParams<double> p;
    p.actor = actor;
    p.actor_target = actor_target;
    for (const auto& c : critics) p.critics.emplace_back(c);
    for (const auto& c : critic_targets) p.critic_targets.emplace_back(c);
    p.value = value;
    return p;
  }

  oracle::Net net(const MlpArch& arch, const std::vector<double>& p) const {
    return {arch, std::vector<double>(p.begin(), p.begin() + static_cast<std::ptrdiff_t>(arch.param_count()))};
  }
  std::vector<oracle::Net> nets(const std::vector<std::vector<double>>& ps) const {
    std::vector<oracle::Net> out;
    for (const auto& p : ps) out.push_back(net(archs.critic, p));
    return out;
  }
  std::vector<double> actor_log_std() const {
    return {actor.end() - archs.act_dim, actor.end()};
  }

  std::vector<oracle::Sample> samples() const {
    std::vector<oracle::Sample> out;
    const auto col = [](const ad::Matrix<double>& m, Eigen::Index j) {
      return std::vector<double>(m.col(j).data(), m.col(j).data() + m.rows());
    };
    for (Eigen::Index j = 0; j < batch.size(); ++j) {
      oracle::Sample s;
      s.s = col(batch.obs, j);
      s.a = col(batch.action, j);
      s.r = batch.reward(0, j);
      s.s2 = col(batch.next_obs, j);
      s.a2 = col(batch.next_action, j);
      s.done = batch.done(0, j);
      s.eps_next = col(next_eps, j);
      s.eps_now = col(actor_eps, j);
      out.push_back(std::move(s));
    }
    return out;
  }
};

// Random networks (targets are perturbed copies of the online networks) and a
// random batch with actions strictly inside asymmetric bounds.
inline LossFixture make(const UnifloralConfig& config, std::uint64_t seed, int obs_dim = 3,
                        int act_dim = 2, int batch = 16) {
  LossFixture f;
  f.config = config;
  f.space.low = {-1.0, -2.0, -0.5};
  f.space.high = {1.0, 0.5, 1.5};
  f.space.low.resize(static_cast<std::size_t>(act_dim));
  f.space.high.resize(static_cast<std::size_t>(act_dim));
  f.archs = make_architectures(config, obs_dim, act_dim, f.space.low, f.space.high);
  Rng rng(seed, 7);
  auto actor = init_params(f.archs.actor, rng);
  if (f.archs.separate_log_std) actor.resize(f.archs.actor_param_count(), 0.0f);
  f.actor = perturbed(actor, rng, 0.2);
  if (f.archs.separate_log_std)
    for (int i = 0; i < act_dim; ++i) f.actor[f.actor.size() - 1 - static_cast<std::size_t>(i)] = rng.uniform(-1.5, 0.5);
  f.actor_target = f.actor;
  for (auto& x : f.actor_target) x += 0.05 * rng.normal();
  for (int n = 0; n < config.num_critics; ++n) {
    f.critics.push_back(perturbed(init_params(f.archs.critic, rng), rng, 0.2));
    f.critic_targets.push_back(f.critics.back());
    for (auto& x : f.critic_targets.back()) x += 0.05 * rng.normal();
  }
  if (config.has_value_net()) f.value = perturbed(init_params(f.archs.value, rng), rng, 0.2);

  const auto normal = [&](int rows) {
    ad::Matrix<double> m(rows, batch);
    for (Eigen::Index j = 0; j < batch; ++j)
      for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = rng.normal();
    return m;
  };
  const auto inside = [&]() {
    ad::Matrix<double> m(act_dim, batch);
    for (Eigen::Index j = 0; j < batch; ++j)
      for (Eigen::Index i = 0; i < act_dim; ++i) {
        const auto k = static_cast<std::size_t>(i);
        m(i, j) = f.space.center(k) + f.space.half(k) * rng.uniform(-0.95, 0.95);
      }
    return m;
  };
  f.batch.obs = normal(obs_dim);
  f.batch.action = inside();
  f.batch.reward = normal(1);
  f.batch.next_obs = normal(obs_dim);
  f.batch.next_action = inside();
  f.batch.done.resize(1, batch);
  for (Eigen::Index j = 0; j < batch; ++j) f.batch.done(0, j) = rng.uniform() < 0.2 ? 1.0 : 0.0;
  f.next_eps = normal(act_dim);
  f.actor_eps = normal(act_dim);
  return f;
}

// Preset config at the range midpoints with networks shrunk for oracle work.
inline UnifloralConfig small_preset(const std::string& name, int width = 8, int max_critics = 3) {
  UnifloralConfig c = midpoint_config(preset(name));
  c.actor_hidden = width;
  c.critic_hidden = width;
  c.num_critics = std::min(c.num_critics, max_critics);
  return c;
}

// The unified critic loss on the fixture (target computation included).
inline LossResult<double> unified_critic(const LossFixture& f) {
  const auto p = f.params();
  const auto vt = compute_value_target(f.config, f.archs, p, f.batch, f.next_eps);
  const auto v_hat = augment_value_target(f.config, vt, f.batch.next_action);
  const auto y = bellman_target(f.config, v_hat, f.batch);
  return critic_loss(f.config, f.archs, p, f.batch, y);
}

// Central finite differences of f at x with step h.
inline std::vector<double> central_difference(const std::function<double(const std::vector<double>&)>& fn,
                                              std::vector<double> x, double h) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double x0 = x[i];
    x[i] = x0 + h;
    const double up = fn(x);
    x[i] = x0 - h;
    const double down = fn(x);
    x[i] = x0;
    g[i] = (up - down) / (2 * h);
  }
  return g;
}

// |a - b| / max(|a|, |b|), in the Euclidean norm.
inline double relative_error(const std::vector<double>& a, const std::vector<double>& b) {
  double diff = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  const double scale = std::max({std::sqrt(na), std::sqrt(nb), 1e-12});
  return std::sqrt(diff) / scale;
}

}  // namespace fixture
