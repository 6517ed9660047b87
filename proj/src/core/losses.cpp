#include "unifloral/core/losses.hpp"

#include <cmath>

#include "unifloral/numerics/errors.hpp"

namespace unifloral {

namespace {

template <typename T>
ad::Matrix<T> map_rows(const std::vector<float>& v, int rows, std::size_t n) {
  return Eigen::Map<const Eigen::MatrixXf>(v.data(), rows, static_cast<Eigen::Index>(n)).cast<T>();
}

template <typename T>
ad::Matrix<T> broadcast(const std::vector<double>& v, Eigen::Index cols) {
  ad::Matrix<T> m(static_cast<Eigen::Index>(v.size()), cols);
  for (Eigen::Index i = 0; i < m.rows(); ++i) m.row(i).setConstant(static_cast<T>(v[static_cast<std::size_t>(i)]));
  return m;
}

// low + relu(x - low) - relu(x - high)
template <typename T>
ad::Var<T> clip_to(const ad::Var<T>& x, const ad::Matrix<T>& low, const ad::Matrix<T>& high) {
  return ad::add_const(ad::sub(ad::relu(ad::add_const(x, ad::Matrix<T>(-low))),
                               ad::relu(ad::add_const(x, ad::Matrix<T>(-high)))),
                       low);
}

template <typename T>
std::vector<std::span<const T>> spans(const std::vector<ParamVector>& v) {
  std::vector<std::span<const T>> out;
  for (const auto& p : v) out.emplace_back(p);
  return out;
}

template <typename T>
Params<T> slice_grad(const MlpArch& arch, const std::vector<ad::Var<T>>& g, std::size_t begin,
                     std::size_t count) {
  return flatten_grads<T>(arch, std::span<const ad::Var<T>>(g).subspan(begin, count));
}

}  // namespace

template <typename T>
Batch<T> to_batch(const TransitionBatch& t) {
  t.check_consistent();
  const std::size_t n = t.size();
  Batch<T> b;
  b.obs = map_rows<T>(t.obs, t.obs_dim, n);
  b.action = map_rows<T>(t.action, t.act_dim, n);
  b.reward = map_rows<T>(t.reward, 1, n);
  b.next_obs = map_rows<T>(t.next_obs, t.obs_dim, n);
  b.next_action = map_rows<T>(t.next_action, t.act_dim, n);
  b.done = map_rows<T>(t.done, 1, n);
  return b;
}

NetParams<float> net_params(const AgentState& agent) {
  NetParams<float> p;
  p.actor = agent.actor;
  p.actor_target = agent.actor_target;
  p.critics = spans<float>(agent.critics);
  p.critic_targets = spans<float>(agent.critic_targets);
  if (agent.value) p.value = *agent.value;
  return p;
}

template <typename T>
std::vector<MlpVars<T>> bind_critics(ad::Tape<T>& tape, const Architectures& archs,
                                     const std::vector<std::span<const T>>& params, bool trainable) {
  std::vector<MlpVars<T>> out;
  for (const auto& p : params) out.push_back(bind_params<T>(tape, archs.critic, p, trainable));
  return out;
}

template <typename T>
std::vector<ad::Var<T>> ensemble_q(const Architectures& archs, const std::vector<MlpVars<T>>& critics,
                                   const ad::Var<T>& obs, const ad::Var<T>& action) {
  if (critics.empty()) throw ConfigError("this loss requires at least one critic");
  auto input = ad::concat_rows(obs, action);
  std::vector<ad::Var<T>> qs;
  for (const auto& c : critics) qs.push_back(mlp_apply(archs.critic, c, input));
  return qs;
}

template <typename T>
ad::Var<T> aggregate_q(const std::vector<ad::Var<T>>& qs, QAggregation how) {
  if (qs.empty()) throw ContractError("aggregate_q: empty ensemble");
  switch (how) {
    case QAggregation::first: return qs[0];
    case QAggregation::min: {
      auto m = qs[0];
      for (std::size_t i = 1; i < qs.size(); ++i) m = ad::minimum(m, qs[i]);
      return m;
    }
    case QAggregation::mean: {
      auto s = qs[0];
      for (std::size_t i = 1; i < qs.size(); ++i) s = ad::add(s, qs[i]);
      return ad::scale(s, T(1) / static_cast<T>(qs.size()));
    }
  }
  return qs[0];
}

template <typename T>
TapeValueTarget<T> value_target_on_tape(ad::Tape<T>& tape, const UnifloralConfig& config,
                                        const Architectures& archs, const ActorVars<T>& next_actor,
                                        const std::vector<MlpVars<T>>& target_critics,
                                        const MlpVars<T>* value_net, const ad::Var<T>& next_obs,
                                        const ad::Matrix<T>& next_eps) {
  const Eigen::Index b = next_obs.cols();
  const auto half = broadcast<T>(archs.action_half, b);
  const auto center = broadcast<T>(archs.action_center, b);
  TapeValueTarget<T> vt;
  auto po = policy_forward(tape, config, archs, next_actor, next_obs,
                           config.deterministic_policy ? nullptr : &next_eps);
  vt.next_action = po.action;
  vt.next_log_prob = po.log_prob;
  if (config.policy_noise > 0.0) {
    // Target policy smoothing, scaled by the action half-range.
    const ad::Matrix<T> lim = half * static_cast<T>(config.noise_clip);
    const ad::Matrix<T> noise =
        (next_eps.array() * half.array() * static_cast<T>(config.policy_noise)).matrix().cwiseMax(-lim).cwiseMin(lim);
    vt.next_action = clip_to(ad::add_const(po.action, noise), ad::Matrix<T>(center - half),
                             ad::Matrix<T>(center + half));
  }
  if (config.use_value_target) {
    if (!value_net) throw ConfigError("use_value_target requires a value network");
    vt.v_next = mlp_apply(archs.value, *value_net, next_obs);
  } else {
    vt.v_next = aggregate_q(ensemble_q(archs, target_critics, next_obs, vt.next_action), QAggregation::min);
  }
  return vt;
}

template <typename T>
ad::Var<T> augment_on_tape(ad::Tape<T>& tape, const UnifloralConfig& config,
                           const TapeValueTarget<T>& vt, const ad::Matrix<T>& next_action_data) {
  (void)tape;
  ad::Var<T> v = vt.v_next;
  if (config.critic_bc_coef != 0.0) {
    auto diff = ad::add_const(vt.next_action, ad::Matrix<T>(-next_action_data));
    v = ad::sub(v, ad::scale(ad::sum_rows(ad::square(diff)), static_cast<T>(config.critic_bc_coef)));
  }
  if (config.entropy_in_critic() && config.critic_entropy_coef != 0.0) {
    if (!vt.next_log_prob.valid()) throw ContractError("entropy term needs a sampled next action");
    v = ad::sub(v, ad::scale(vt.next_log_prob, static_cast<T>(config.critic_entropy_coef)));
  }
  return v;
}

template <typename T>
CriticTerms<T> critic_loss_on_tape(ad::Tape<T>& tape, const UnifloralConfig& config,
                                   const Architectures& archs, const std::vector<MlpVars<T>>& critics,
                                   const ad::Matrix<T>& obs, const ad::Matrix<T>& action,
                                   const ad::Var<T>& target) {
  const std::size_t n = critics.size();
  if (n == 0) throw ConfigError("critic loss requires at least one critic");
  const bool diverse = config.diversity_coef > 0.0;
  if (diverse && n < 2) throw ConfigError("diversity_coef > 0 requires num_critics >= 2");
  auto o = tape.constant(obs);
  auto a = diverse ? tape.leaf(action, "action") : tape.constant(action);
  auto y = ad::detach(target);
  auto qs = ensemble_q(archs, critics, o, a);
  CriticTerms<T> terms;
  for (std::size_t i = 0; i < n; ++i) {
    auto l = ad::mean_all(ad::square(ad::sub(qs[i], y)));
    terms.bellman = i == 0 ? l : ad::add(terms.bellman, l);
  }
  terms.total = terms.bellman;
  if (diverse) {
    // sum_{i != j} <g_i, g_j> = |sum_i g_i|^2 - sum_i |g_i|^2, per sample.
    std::array<ad::Var<T>, 1> wrt{a};
    ad::Var<T> sum_g, sum_sq;
    for (std::size_t i = 0; i < n; ++i) {
      auto g = tape.gradients(qs[i], wrt, true)[0];
      auto sq = ad::sum_all(ad::square(g));
      sum_g = i == 0 ? g : ad::add(sum_g, g);
      sum_sq = i == 0 ? sq : ad::add(sum_sq, sq);
    }
    auto cross = ad::sub(ad::sum_all(ad::square(sum_g)), sum_sq);
    const T c = static_cast<T>(config.diversity_coef) / static_cast<T>(n - 1) / static_cast<T>(obs.cols());
    terms.diversity = ad::scale(cross, c);
    terms.total = ad::add(terms.total, terms.diversity);
  }
  return terms;
}

template <typename T>
ValueTarget<T> compute_value_target(const UnifloralConfig& config, const Architectures& archs,
                                    const NetParams<T>& p, const Batch<T>& batch,
                                    const ad::Matrix<T>& next_eps) {
  ad::Tape<T> tape;
  ad::RecordingScope<T> off(tape, false);
  auto actor = bind_actor<T>(tape, archs, config.use_target_actor ? p.actor_target : p.actor, false);
  auto targets = bind_critics<T>(tape, archs, p.critic_targets, false);
  std::optional<MlpVars<T>> value;
  if (config.use_value_target) value = bind_params<T>(tape, archs.value, p.value, false);
  auto vt = value_target_on_tape<T>(tape, config, archs, actor, targets, value ? &*value : nullptr,
                                    tape.constant(batch.next_obs), next_eps);
  ValueTarget<T> out;
  out.v_next = vt.v_next.value();
  out.next_action = vt.next_action.value();
  if (vt.next_log_prob.valid()) out.next_log_prob = vt.next_log_prob.value();
  return out;
}

template <typename T>
ad::Matrix<T> augment_value_target(const UnifloralConfig& config, const ValueTarget<T>& vt,
                                   const ad::Matrix<T>& next_action_data) {
  ad::Matrix<T> v = vt.v_next;
  if (config.critic_bc_coef != 0.0)
    v -= static_cast<T>(config.critic_bc_coef) * (vt.next_action - next_action_data).colwise().squaredNorm();
  if (config.entropy_in_critic() && config.critic_entropy_coef != 0.0) {
    if (vt.next_log_prob.size() == 0) throw ContractError("entropy term needs a sampled next action");
    v -= static_cast<T>(config.critic_entropy_coef) * vt.next_log_prob;
  }
  return v;
}

template <typename T>
ad::Matrix<T> bellman_target(const UnifloralConfig& config, const ad::Matrix<T>& v_hat,
                             const Batch<T>& batch) {
  return (batch.reward.array() +
          (T(1) - batch.done.array()) * static_cast<T>(config.gamma) * v_hat.array())
      .matrix();
}

template <typename T>
LossResult<T> critic_loss(const UnifloralConfig& config, const Architectures& archs,
                          const NetParams<T>& p, const Batch<T>& batch, const ad::Matrix<T>& target) {
  ad::Tape<T> tape;
  auto critics = bind_critics<T>(tape, archs, p.critics, true);
  auto terms = critic_loss_on_tape<T>(tape, config, archs, critics, batch.obs, batch.action,
                                      tape.constant(target));
  std::vector<ad::Var<T>> leaves;
  for (const auto& c : critics) leaves.insert(leaves.end(), c.leaves.begin(), c.leaves.end());
  auto g = tape.gradients(terms.total, leaves);
  LossResult<T> r;
  r.value = terms.total.scalar();
  r.components = {{"bellman", terms.bellman.scalar()},
                  {"diversity", terms.diversity.valid() ? terms.diversity.scalar() : T(0)}};
  const std::size_t per = critics.empty() ? 0 : critics[0].leaves.size();
  for (std::size_t i = 0; i < critics.size(); ++i) r.grads.push_back(slice_grad(archs.critic, g, i * per, per));
  return r;
}

template <typename T>
LossResult<T> value_loss(const UnifloralConfig& config, const Architectures& archs,
                         const NetParams<T>& p, const Batch<T>& batch) {
  if (p.value.empty()) throw ConfigError("value loss requires a value network");
  ad::Tape<T> tape;
  auto value = bind_params<T>(tape, archs.value, p.value, true);
  auto targets = bind_critics<T>(tape, archs, p.critic_targets, false);
  auto o = tape.constant(batch.obs);
  auto q = aggregate_q(ensemble_q(archs, targets, o, tape.constant(batch.action)), QAggregation::min);
  auto u = ad::sub(q, mlp_apply(archs.value, value, o));
  const T tau = static_cast<T>(config.value_expectile);
  const ad::Matrix<T> w = u.value().unaryExpr([tau](T x) { return x < T(0) ? T(1) - tau : tau; });
  auto loss = ad::mean_all(ad::mul_const(ad::square(u), w));
  auto g = tape.gradients(loss, value.leaves);
  LossResult<T> r;
  r.value = loss.scalar();
  r.components = {{"value", r.value}};
  r.grads.push_back(flatten_grads<T>(archs.value, g));
  return r;
}

template <typename T>
ad::Matrix<T> awr_weights(const UnifloralConfig& config, const Architectures& archs,
                          const NetParams<T>& p, const Batch<T>& batch) {
  if (p.value.empty()) throw ConfigError("use_awr requires a value network");
  ad::Tape<T> tape;
  ad::RecordingScope<T> off(tape, false);
  auto targets = bind_critics<T>(tape, archs, p.critic_targets, false);
  auto value = bind_params<T>(tape, archs.value, p.value, false);
  auto o = tape.constant(batch.obs);
  auto q = aggregate_q(ensemble_q(archs, targets, o, tape.constant(batch.action)), QAggregation::min);
  const ad::Matrix<T> adv = q.value() - mlp_apply(archs.value, value, o).value();
  const T eta = static_cast<T>(config.awr_temperature), cap = static_cast<T>(config.awr_clip);
  return adv.unaryExpr([eta, cap](T a) { return std::min(cap, std::exp(eta * a)); });
}

template <typename T>
LossResult<T> actor_loss(const UnifloralConfig& config, const Architectures& archs,
                         const NetParams<T>& p, const Batch<T>& batch, const ad::Matrix<T>& actor_eps) {
  ad::Tape<T> tape;
  auto actor = bind_actor<T>(tape, archs, p.actor, true);
  auto o = tape.constant(batch.obs);
  const bool sample = config.stochastic();
  auto po = policy_forward(tape, config, archs, actor, o, sample ? &actor_eps : nullptr);
  LossResult<T> r;
  ad::Var<T> total = tape.constant(ad::Matrix<T>::Zero(1, 1));

  if (config.actor_q_coef != 0.0) {
    auto critics = bind_critics<T>(tape, archs, config.use_q_target_in_actor ? p.critic_targets : p.critics, false);
    auto q = aggregate_q(ensemble_q(archs, critics, o, po.action), config.q_aggregation);
    auto lq = ad::neg(ad::mean_all(q));
    if (config.normalize_q_loss) {
      const T scale = q.value().cwiseAbs().mean();
      lq = ad::scale(lq, T(1) / scale);
    }
    r.components.emplace_back("q", lq.scalar());
    total = ad::add(total, ad::scale(lq, static_cast<T>(config.actor_q_coef)));
  }
  if (config.actor_bc_coef != 0.0) {
    ad::Var<T> d = config.deterministic_policy
                       ? ad::sum_rows(ad::square(ad::add_const(po.action, ad::Matrix<T>(-batch.action))))
                       : ad::neg(policy_log_prob(tape, config, archs, actor, o, batch.action));
    if (config.use_awr) d = ad::mul_const(d, awr_weights(config, archs, p, batch));
    auto lbc = ad::mean_all(d);
    r.components.emplace_back("bc", lbc.scalar());
    total = ad::add(total, ad::scale(lbc, static_cast<T>(config.actor_bc_coef)));
  }
  if (config.entropy_in_actor() && config.actor_entropy_coef != 0.0) {
    auto h = ad::neg(ad::mean_all(po.log_prob));
    r.components.emplace_back("entropy", h.scalar());
    total = ad::sub(total, ad::scale(h, static_cast<T>(config.actor_entropy_coef)));
  }
  const auto leaves = actor_leaves(actor);
  auto g = tape.gradients(total, leaves);
  r.value = total.scalar();
  r.grads.push_back(flatten_actor_grads<T>(archs, actor, g));
  return r;
}

#define UNIFLORAL_INSTANTIATE(T)                                                                   \
  template Batch<T> to_batch<T>(const TransitionBatch&);                                          \
  template std::vector<MlpVars<T>> bind_critics(ad::Tape<T>&, const Architectures&,               \
                                                const std::vector<std::span<const T>>&, bool);    \
  template std::vector<ad::Var<T>> ensemble_q(const Architectures&, const std::vector<MlpVars<T>>&, \
                                              const ad::Var<T>&, const ad::Var<T>&);              \
  template ad::Var<T> aggregate_q(const std::vector<ad::Var<T>>&, QAggregation);                  \
  template TapeValueTarget<T> value_target_on_tape(ad::Tape<T>&, const UnifloralConfig&,          \
                                                   const Architectures&, const ActorVars<T>&,     \
                                                   const std::vector<MlpVars<T>>&,                \
                                                   const MlpVars<T>*, const ad::Var<T>&,          \
                                                   const ad::Matrix<T>&);                         \
  template ad::Var<T> augment_on_tape(ad::Tape<T>&, const UnifloralConfig&,                       \
                                      const TapeValueTarget<T>&, const ad::Matrix<T>&);           \
  template CriticTerms<T> critic_loss_on_tape(ad::Tape<T>&, const UnifloralConfig&,               \
                                              const Architectures&, const std::vector<MlpVars<T>>&, \
                                              const ad::Matrix<T>&, const ad::Matrix<T>&,         \
                                              const ad::Var<T>&);                                 \
  template ValueTarget<T> compute_value_target(const UnifloralConfig&, const Architectures&,      \
                                               const NetParams<T>&, const Batch<T>&,              \
                                               const ad::Matrix<T>&);                             \
  template ad::Matrix<T> augment_value_target(const UnifloralConfig&, const ValueTarget<T>&,      \
                                              const ad::Matrix<T>&);                              \
  template ad::Matrix<T> bellman_target(const UnifloralConfig&, const ad::Matrix<T>&,             \
                                        const Batch<T>&);                                         \
  template LossResult<T> critic_loss(const UnifloralConfig&, const Architectures&,                \
                                     const NetParams<T>&, const Batch<T>&, const ad::Matrix<T>&); \
  template LossResult<T> value_loss(const UnifloralConfig&, const Architectures&,                 \
                                    const NetParams<T>&, const Batch<T>&);                        \
  template LossResult<T> actor_loss(const UnifloralConfig&, const Architectures&,                 \
                                    const NetParams<T>&, const Batch<T>&, const ad::Matrix<T>&);  \
  template ad::Matrix<T> awr_weights(const UnifloralConfig&, const Architectures&,                \
                                     const NetParams<T>&, const Batch<T>&);

UNIFLORAL_INSTANTIATE(float)
UNIFLORAL_INSTANTIATE(double)
#undef UNIFLORAL_INSTANTIATE

}  // namespace unifloral
