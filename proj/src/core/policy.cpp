#include "unifloral/core/policy.hpp"

#include <cmath>

#include "unifloral/numerics/errors.hpp"

namespace unifloral {

namespace {

template <typename T>
ad::Matrix<T> column_broadcast(const std::vector<double>& v, Eigen::Index cols) {
  ad::Matrix<T> m(static_cast<Eigen::Index>(v.size()), cols);
  for (Eigen::Index i = 0; i < m.rows(); ++i) m.row(i).setConstant(static_cast<T>(v[static_cast<std::size_t>(i)]));
  return m;
}

template <typename T>
T sum_log_half(const Architectures& archs) {
  T s = 0;
  for (double h : archs.action_half) s += static_cast<T>(std::log(h));
  return s;
}

// (mean, clamped log_std), each act_dim x B.
template <typename T>
std::pair<ad::Var<T>, ad::Var<T>> gaussian_head(const UnifloralConfig& config,
                                                const Architectures& archs,
                                                const ActorVars<T>& actor, const ad::Var<T>& obs) {
  const Eigen::Index a = archs.act_dim, b = obs.cols();
  auto out = mlp_apply(archs.actor, actor.mlp, obs);
  ad::Var<T> mean = archs.separate_log_std ? out : ad::slice_rows(out, 0, a);
  ad::Var<T> raw = archs.separate_log_std ? ad::replicate_cols(actor.log_std, b) : ad::slice_rows(out, a, a);
  auto log_std = ad::clamp(raw, static_cast<T>(config.log_std_min), static_cast<T>(config.log_std_max));
  return {mean, log_std};
}

}  // namespace

template <typename T>
ActorVars<T> bind_actor(ad::Tape<T>& tape, const Architectures& archs, std::span<const T> params,
                        bool trainable) {
  if (params.size() != archs.actor_param_count())
    throw ContractError("actor parameter length does not match the architecture");
  const std::size_t n = archs.actor.param_count();
  ActorVars<T> v;
  v.mlp = bind_params<T>(tape, archs.actor, params.subspan(0, n), trainable);
  if (archs.separate_log_std) {
    ad::Matrix<T> ls(archs.act_dim, 1);
    for (int i = 0; i < archs.act_dim; ++i) ls(i, 0) = params[n + static_cast<std::size_t>(i)];
    v.log_std = trainable ? tape.leaf(ls, "log_std") : tape.constant(ls, "log_std");
  }
  return v;
}

template <typename T>
std::vector<ad::Var<T>> actor_leaves(const ActorVars<T>& vars) {
  auto out = vars.mlp.leaves;
  if (vars.log_std.valid()) out.push_back(vars.log_std);
  return out;
}

template <typename T>
Params<T> flatten_actor_grads(const Architectures& archs, const ActorVars<T>& vars,
                              std::span<const ad::Var<T>> grads) {
  const std::size_t nm = vars.mlp.leaves.size();
  Params<T> g = flatten_grads<T>(archs.actor, grads.subspan(0, nm));
  if (archs.separate_log_std) {
    const auto& m = grads[nm].value();
    for (Eigen::Index i = 0; i < m.rows(); ++i) g.push_back(m(i, 0));
  }
  return g;
}

template <typename T>
PolicyOutput<T> policy_forward(ad::Tape<T>& /*tape*/, const UnifloralConfig& config,
                               const Architectures& archs, const ActorVars<T>& actor,
                               const ad::Var<T>& obs, const ad::Matrix<T>* eps) {
  const Eigen::Index b = obs.cols();
  const auto center = column_broadcast<T>(archs.action_center, b);
  const auto half = column_broadcast<T>(archs.action_half, b);
  PolicyOutput<T> out;
  if (config.deterministic_policy) {
    auto y = mlp_apply(archs.actor, actor.mlp, obs);  // tanh output layer
    out.action = ad::add_const(ad::mul_const(y, half), center);
    return out;
  }
  auto [mean, log_std] = gaussian_head(config, archs, actor, obs);
  if (eps && (eps->rows() != archs.act_dim || eps->cols() != b))
    throw ContractError("policy noise has the wrong shape");
  if (!config.tanh_mean) {
    if (!eps) {
      out.action = ad::add_const(ad::mul_const(ad::tanh(mean), half), center);
      return out;
    }
    auto u = ad::add(mean, ad::mul_const(ad::exp(log_std), *eps));
    auto y = ad::tanh(u);
    out.action = ad::add_const(ad::mul_const(y, half), center);
    auto correction = ad::sum_rows(ad::log(ad::add_scalar(ad::neg(ad::square(y)), T(1) + T(1e-6))));
    out.log_prob = ad::add_scalar(ad::sub(ad::gaussian_log_density(u, mean, log_std), correction),
                                  -sum_log_half<T>(archs));
    return out;
  }
  auto m = ad::add_const(ad::mul_const(ad::tanh(mean), half), center);
  if (!eps) {
    out.action = m;
    return out;
  }
  auto x = ad::add(m, ad::mul_const(ad::exp(log_std), *eps));
  const ad::Matrix<T> low = center - half, high = center + half;
  // clip(x, low, high) = low + relu(x - low) - relu(x - high)
  auto clipped = ad::add_const(
      ad::sub(ad::relu(ad::add_const(x, ad::Matrix<T>(-low))), ad::relu(ad::add_const(x, ad::Matrix<T>(-high)))), low);
  out.action = clipped;
  out.log_prob = ad::gaussian_log_density(x, m, log_std);
  return out;
}

template <typename T>
ad::Var<T> policy_log_prob(ad::Tape<T>& tape, const UnifloralConfig& config,
                           const Architectures& archs, const ActorVars<T>& actor,
                           const ad::Var<T>& obs, const ad::Matrix<T>& actions) {
  if (config.deterministic_policy) throw ConfigError("log-probabilities need a stochastic policy");
  const Eigen::Index b = obs.cols();
  const auto center = column_broadcast<T>(archs.action_center, b);
  const auto half = column_broadcast<T>(archs.action_half, b);
  auto [mean, log_std] = gaussian_head(config, archs, actor, obs);
  if (config.tanh_mean) {
    auto m = ad::add_const(ad::mul_const(ad::tanh(mean), half), center);
    return ad::gaussian_log_density(tape.constant(actions), m, log_std);
  }
  const T lim = T(1) - T(1e-6);
  ad::Matrix<T> y = ((actions - center).array() / half.array()).cwiseMax(-lim).cwiseMin(lim).matrix();
  ad::Matrix<T> u = y.array().atanh().matrix();
  ad::Matrix<T> corr_cols = (T(1) - y.array().square() + T(1e-6)).log().colwise().sum().matrix();
  auto lp = ad::gaussian_log_density(tape.constant(u), mean, log_std);
  return ad::add_scalar(ad::add_const(lp, ad::Matrix<T>(-corr_cols)), -sum_log_half<T>(archs));
}

template <typename T>
ad::Matrix<T> standard_normal(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  ad::Matrix<T> m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = static_cast<T>(rng.normal());
  return m;
}

Eigen::MatrixXd policy_action(const UnifloralConfig& config, const Architectures& archs,
                              std::span<const float> actor_params, const Eigen::MatrixXd& obs,
                              PolicyMode mode, Rng& rng) {
  if (obs.rows() != archs.obs_dim) throw ContractError("policy_action: observation dimension mismatch");
  ad::Tape<float> tape;
  ad::RecordingScope<float> off(tape, false);
  auto actor = bind_actor<float>(tape, archs, actor_params, false);
  auto o = tape.constant(obs.cast<float>());
  const bool use_mean = config.deterministic_policy || (mode == PolicyMode::eval && config.deterministic_eval);
  ad::Matrix<float> eps;
  if (!use_mean) eps = standard_normal<float>(archs.act_dim, obs.cols(), rng);
  auto out = policy_forward<float>(tape, config, archs, actor, o, use_mean ? nullptr : &eps);
  return out.action.value().cast<double>();
}

#define UNIFLORAL_INSTANTIATE(T)                                                                 \
  template ActorVars<T> bind_actor(ad::Tape<T>&, const Architectures&, std::span<const T>, bool); \
  template std::vector<ad::Var<T>> actor_leaves(const ActorVars<T>&);                           \
  template Params<T> flatten_actor_grads(const Architectures&, const ActorVars<T>&,              \
                                         std::span<const ad::Var<T>>);                          \
  template PolicyOutput<T> policy_forward(ad::Tape<T>&, const UnifloralConfig&,                 \
                                          const Architectures&, const ActorVars<T>&,            \
                                          const ad::Var<T>&, const ad::Matrix<T>*);             \
  template ad::Var<T> policy_log_prob(ad::Tape<T>&, const UnifloralConfig&, const Architectures&, \
                                      const ActorVars<T>&, const ad::Var<T>&,                   \
                                      const ad::Matrix<T>&);                                    \
  template ad::Matrix<T> standard_normal<T>(Eigen::Index, Eigen::Index, Rng&);

UNIFLORAL_INSTANTIATE(float)
UNIFLORAL_INSTANTIATE(double)
#undef UNIFLORAL_INSTANTIATE

}  // namespace unifloral
