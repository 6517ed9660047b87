#include "unifloral/dynamics/ensemble.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include "unifloral/numerics/adam.hpp"
#include "unifloral/numerics/errors.hpp"
#include "unifloral/numerics/param_io.hpp"

namespace unifloral {

void DynamicsSamplingConfig::validate() const {
  if (num_members < 1) throw ConfigError("num_members must be >= 1");
  if (num_elites < 1 || num_elites > num_members)
    throw ConfigError("num_elites must be in [1, num_members]");
  if (!(pessimism_coef >= 0.0)) throw ConfigError("pessimism_coef must be >= 0");
  if (rollout_length < 1) throw ConfigError("rollout_length must be >= 1");
  if (rollout_batch < 1) throw ConfigError("rollout_batch must be >= 1");
  if (rollout_interval < 1) throw ConfigError("rollout_interval must be >= 1");
  if (!(real_ratio >= 0.0 && real_ratio <= 1.0)) throw ConfigError("real_ratio must be in [0, 1]");
  if (!(morel_pessimism >= 0.0)) throw ConfigError("morel_pessimism must be >= 0");
  if (use_morel_halt && num_elites < 2) throw ConfigError("MOReL halting needs at least 2 elites");
  if (synthetic_buffer_capacity < 1) throw ConfigError("synthetic_buffer_capacity must be >= 1");
}

void DynamicsTrainConfig::validate() const {
  if (num_members < 1) throw ConfigError("num_members must be >= 1");
  if (num_elites < 1 || num_elites > num_members)
    throw ConfigError("num_elites must be in [1, num_members]");
  if (hidden_width < 1 || hidden_layers < 1) throw ConfigError("dynamics network must have a hidden layer");
  if (!(lr > 0.0)) throw ConfigError("dynamics lr must be positive");
  if (batch_size < 1 || max_epochs < 1 || patience < 1) throw ConfigError("invalid dynamics schedule");
  if (!(holdout_fraction > 0.0 && holdout_fraction < 1.0))
    throw ConfigError("holdout_fraction must be in (0, 1)");
  if (!(logvar_min < logvar_max)) throw ConfigError("logvar_min must be below logvar_max");
}

template <typename T>
ad::Var<T> soft_clamp_logvar(const ad::Var<T>& raw, T lo, T hi) {
  auto upper = ad::neg(ad::add_scalar(ad::softplus(ad::add_scalar(ad::neg(raw), hi)), -hi));
  return ad::add_scalar(ad::softplus(ad::add_scalar(upper, -lo)), lo);
}

namespace {

template <typename T>
ad::Var<T> nll_on_tape(ad::Tape<T>& tape, const MlpArch& arch, const MlpVars<T>& vars,
                       const ad::Matrix<T>& x, const ad::Matrix<T>& y, T lo, T hi) {
  const Eigen::Index d = y.rows();
  auto out = mlp_apply(arch, vars, tape.constant(x));
  auto mu = ad::slice_rows(out, 0, d);
  auto lv = soft_clamp_logvar(ad::slice_rows(out, d, d), lo, hi);
  auto err = ad::square(ad::sub(mu, tape.constant(y)));
  auto per = ad::add(ad::mul(err, ad::exp(ad::neg(lv))), lv);
  return ad::scale(ad::sum_all(per), T(0.5) / static_cast<T>(x.cols()));
}

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

double clamp_logvar(double raw, double lo, double hi) {
  const double upper = hi - softplus(hi - raw);
  return lo + softplus(upper - lo);
}

// Normalized network input (in_dim x B) from raw obs/actions.
Eigen::MatrixXf make_input(const DynamicsEnsemble& e, const Eigen::MatrixXd& obs,
                           const Eigen::MatrixXd& act) {
  const Eigen::Index b = obs.cols();
  Eigen::MatrixXf x(e.obs_dim + e.act_dim, b);
  for (Eigen::Index j = 0; j < b; ++j) {
    for (int i = 0; i < e.obs_dim; ++i)
      x(i, j) = static_cast<float>((obs(i, j) - e.input_mean[static_cast<std::size_t>(i)]) /
                                   e.input_std[static_cast<std::size_t>(i)]);
    for (int i = 0; i < e.act_dim; ++i) {
      const auto k = static_cast<std::size_t>(e.obs_dim + i);
      x(e.obs_dim + i, j) = static_cast<float>((act(i, j) - e.input_mean[k]) / e.input_std[k]);
    }
  }
  return x;
}

// Mean NLL of normalized targets, evaluated in double from a float forward pass.
double eval_nll(const MlpArch& arch, const ParamVector& p, const Eigen::MatrixXf& x,
                const Eigen::MatrixXf& y, double lo, double hi) {
  const auto out = mlp_forward_batch<float>(arch, p, x);
  const Eigen::Index d = y.rows();
  double total = 0.0;
  for (Eigen::Index j = 0; j < x.cols(); ++j)
    for (Eigen::Index i = 0; i < d; ++i) {
      const double lv = clamp_logvar(out(d + i, j), lo, hi);
      const double e = static_cast<double>(y(i, j)) - out(i, j);
      total += 0.5 * (e * e * std::exp(-lv) + lv);
    }
  return total / static_cast<double>(x.cols());
}

void stats(const Eigen::MatrixXd& m, std::vector<float>& mean, std::vector<float>& sd) {
  const Eigen::Index n = m.cols();
  mean.resize(static_cast<std::size_t>(m.rows()));
  sd.resize(static_cast<std::size_t>(m.rows()));
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    const double mu = m.row(i).mean();
    const double var = (m.row(i).array() - mu).square().sum() / static_cast<double>(n);
    mean[static_cast<std::size_t>(i)] = static_cast<float>(mu);
    sd[static_cast<std::size_t>(i)] = static_cast<float>(std::max(std::sqrt(var), kMinObsStd));
  }
}

}  // namespace

template <typename T>
std::pair<T, Params<T>> dynamics_nll(const MlpArch& arch, std::span<const T> params,
                                     const ad::Matrix<T>& x, const ad::Matrix<T>& y, T logvar_min,
                                     T logvar_max) {
  if (arch.output_dim != 2 * y.rows()) throw ContractError("dynamics_nll: output/target mismatch");
  return loss_grad<T>(arch, params, [&](ad::Tape<T>& t, const MlpVars<T>& v) {
    return nll_on_tape(t, arch, v, x, y, logvar_min, logvar_max);
  });
}

MemberPrediction predict_member(const DynamicsEnsemble& e, std::size_t member,
                                const Eigen::MatrixXd& obs, const Eigen::MatrixXd& act) {
  if (member >= e.members.size()) throw ContractError("predict_member: member out of range");
  const auto x = make_input(e, obs, act);
  const auto out = mlp_forward_batch<float>(e.arch, e.members[member], x);
  const int d = e.target_dim();
  const Eigen::Index b = obs.cols();
  MemberPrediction p;
  p.delta_mean.resize(e.obs_dim, b);
  p.delta_logvar.resize(e.obs_dim, b);
  p.reward_mean.resize(b);
  p.reward_logvar.resize(b);
  for (Eigen::Index j = 0; j < b; ++j)
    for (int i = 0; i < d; ++i) {
      const auto k = static_cast<std::size_t>(i);
      const double sd = e.target_std[k];
      const double mu = out(i, j) * sd + e.target_mean[k];
      const double lv = clamp_logvar(out(d + i, j), e.logvar_min, e.logvar_max) + 2.0 * std::log(sd);
      if (i < e.obs_dim) {
        p.delta_mean(i, j) = mu;
        p.delta_logvar(i, j) = lv;
      } else {
        p.reward_mean(j) = mu;
        p.reward_logvar(j) = lv;
      }
    }
  return p;
}

Eigen::RowVectorXd penalized_reward(const std::vector<MemberPrediction>& preds, double eta) {
  if (preds.empty()) throw ContractError("penalized_reward: no elite predictions");
  const auto m = static_cast<double>(preds.size());
  const Eigen::Index b = preds[0].reward_mean.size();
  const Eigen::Index od = preds[0].delta_mean.rows();
  Eigen::RowVectorXd reward = Eigen::RowVectorXd::Zero(b);
  Eigen::MatrixXd mean = Eigen::MatrixXd::Zero(od, b);
  for (const auto& p : preds) {
    reward += p.reward_mean;
    mean += p.delta_mean;
  }
  reward /= m;
  mean /= m;
  Eigen::MatrixXd var = Eigen::MatrixXd::Zero(od, b);
  for (const auto& p : preds) var.array() += (p.delta_mean - mean).array().square();
  var /= m;
  // L2 norm over dimensions of per-dimension std = sqrt(sum of variances).
  const Eigen::RowVectorXd sigma = var.colwise().sum().array().sqrt();
  return reward - eta * sigma;
}

Eigen::RowVectorXd elite_disagreement(const std::vector<MemberPrediction>& preds) {
  const Eigen::Index b = preds.empty() ? 0 : preds[0].delta_mean.cols();
  Eigen::RowVectorXd out = Eigen::RowVectorXd::Zero(b);
  for (std::size_t i = 0; i < preds.size(); ++i)
    for (std::size_t j = i + 1; j < preds.size(); ++j)
      out = out.cwiseMax((preds[i].delta_mean - preds[j].delta_mean).colwise().norm());
  return out;
}

namespace {

std::vector<MemberPrediction> elite_predictions(const DynamicsEnsemble& e, const Eigen::MatrixXd& obs,
                                                const Eigen::MatrixXd& act) {
  std::vector<MemberPrediction> preds;
  for (int k : e.elites) preds.push_back(predict_member(e, static_cast<std::size_t>(k), obs, act));
  return preds;
}

void batch_columns(const TransitionBatch& t, std::size_t begin, std::size_t end,
                   Eigen::MatrixXd& obs, Eigen::MatrixXd& act) {
  const auto od = static_cast<std::size_t>(t.obs_dim), ad = static_cast<std::size_t>(t.act_dim);
  const auto n = static_cast<Eigen::Index>(end - begin);
  obs = Eigen::Map<const Eigen::MatrixXf>(t.obs.data() + begin * od, t.obs_dim, n).cast<double>();
  act = Eigen::Map<const Eigen::MatrixXf>(t.action.data() + begin * ad, t.act_dim, n).cast<double>();
}

}  // namespace

Eigen::RowVectorXd penalized_reward(const DynamicsEnsemble& e, const Eigen::MatrixXd& obs,
                                    const Eigen::MatrixXd& act, double eta) {
  if (!e.trained()) throw ContractError("penalized_reward: ensemble is not trained");
  return penalized_reward(elite_predictions(e, obs, act), eta);
}

double morel_threshold(const DynamicsEnsemble& e, const TransitionBatch& data) {
  if (e.elites.size() < 2) throw ContractError("morel_threshold needs at least two elite members");
  double best = 0.0;
  constexpr std::size_t chunk = 4096;
  for (std::size_t s = 0; s < data.size(); s += chunk) {
    Eigen::MatrixXd obs, act;
    batch_columns(data, s, std::min(data.size(), s + chunk), obs, act);
    best = std::max(best, elite_disagreement(elite_predictions(e, obs, act)).maxCoeff());
  }
  return best;
}

std::pair<double, double> delta_mse_and_variance(const DynamicsEnsemble& e,
                                                 const TransitionBatch& data) {
  Eigen::MatrixXd obs, act;
  batch_columns(data, 0, data.size(), obs, act);
  const Eigen::MatrixXd next =
      Eigen::Map<const Eigen::MatrixXf>(data.next_obs.data(), data.obs_dim,
                                        static_cast<Eigen::Index>(data.size()))
          .cast<double>();
  const Eigen::MatrixXd delta = next - obs;
  double mse = 0.0;
  for (int k : e.elites) {
    const auto p = predict_member(e, static_cast<std::size_t>(k), obs, act);
    mse += (p.delta_mean - delta).array().square().mean();
  }
  mse /= static_cast<double>(e.elites.size());
  const Eigen::VectorXd mu = delta.rowwise().mean();
  const double var = (delta.colwise() - mu).array().square().mean();
  return {mse, var};
}

DynamicsEnsemble train_dynamics(const Dataset& dataset, const DynamicsTrainConfig& config) {
  config.validate();
  if (dataset.normalized) throw ContractError("train_dynamics expects raw observations");
  const auto& t = dataset.transitions;
  if (t.size() < 100) throw ContractError("train_dynamics needs at least 100 transitions");
  const int od = t.obs_dim, ad = t.act_dim;
  const auto n = static_cast<Eigen::Index>(t.size());

  DynamicsEnsemble e;
  e.obs_dim = od;
  e.act_dim = ad;
  e.logvar_min = config.logvar_min;
  e.logvar_max = config.logvar_max;
  e.arch.input_dim = od + ad;
  e.arch.hidden_widths.assign(static_cast<std::size_t>(config.hidden_layers), config.hidden_width);
  e.arch.output_dim = 2 * (od + 1);
  e.arch.activation = Activation::relu;

  Eigen::MatrixXd obs, act;
  batch_columns(t, 0, t.size(), obs, act);
  Eigen::MatrixXd input(od + ad, n), target(od + 1, n);
  input << obs, act;
  target.topRows(od) =
      Eigen::Map<const Eigen::MatrixXf>(t.next_obs.data(), od, n).cast<double>() - obs;
  target.row(od) = Eigen::Map<const Eigen::RowVectorXf>(t.reward.data(), n).cast<double>();
  stats(input, e.input_mean, e.input_std);
  stats(target, e.target_mean, e.target_std);
  Eigen::MatrixXf x(od + ad, n), y(od + 1, n);
  for (Eigen::Index i = 0; i < input.rows(); ++i)
    x.row(i) = ((input.row(i).array() - e.input_mean[static_cast<std::size_t>(i)]) /
                e.input_std[static_cast<std::size_t>(i)])
                   .cast<float>();
  for (Eigen::Index i = 0; i < target.rows(); ++i)
    y.row(i) = ((target.row(i).array() - e.target_mean[static_cast<std::size_t>(i)]) /
                e.target_std[static_cast<std::size_t>(i)])
                   .cast<float>();

  // Shared holdout split.
  std::vector<std::size_t> perm(t.size());
  std::iota(perm.begin(), perm.end(), 0);
  Rng split_rng(config.seed, 1000);
  for (std::size_t i = perm.size(); i-- > 1;) std::swap(perm[i], perm[split_rng.index(i + 1)]);
  const auto n_hold = static_cast<std::size_t>(
      std::ceil(config.holdout_fraction * static_cast<double>(t.size())));
  const std::vector<std::size_t> hold(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_hold));
  const std::vector<std::size_t> train(perm.begin() + static_cast<std::ptrdiff_t>(n_hold), perm.end());
  auto columns = [](const Eigen::MatrixXf& m, std::span<const std::size_t> idx) {
    Eigen::MatrixXf out(m.rows(), static_cast<Eigen::Index>(idx.size()));
    for (std::size_t j = 0; j < idx.size(); ++j)
      out.col(static_cast<Eigen::Index>(j)) = m.col(static_cast<Eigen::Index>(idx[j]));
    return out;
  };
  const Eigen::MatrixXf x_hold = columns(x, hold), y_hold = columns(y, hold);

  const float lo = static_cast<float>(config.logvar_min), hi = static_cast<float>(config.logvar_max);
  for (int m = 0; m < config.num_members; ++m) {
    Rng rng(config.seed, 1 + static_cast<std::uint64_t>(m));
    std::vector<std::size_t> boot(train.size());
    for (auto& i : boot) i = train[rng.index(train.size())];
    ParamVector p = init_params(e.arch, rng);
    auto opt = AdamState::create(p.size(), config.lr);
    ParamVector best = p;
    double best_nll = std::numeric_limits<double>::infinity();
    int stale = 0;
    for (int epoch = 0; epoch < config.max_epochs && stale < config.patience; ++epoch) {
      for (std::size_t i = boot.size(); i-- > 1;) std::swap(boot[i], boot[rng.index(i + 1)]);
      for (std::size_t s = 0; s < boot.size(); s += static_cast<std::size_t>(config.batch_size)) {
        const std::span<const std::size_t> idx(
            boot.data() + s, std::min(boot.size() - s, static_cast<std::size_t>(config.batch_size)));
        const Eigen::MatrixXf xb = columns(x, idx), yb = columns(y, idx);
        std::pair<float, ParamVector> lg;
        try {
          lg = dynamics_nll<float>(e.arch, p, xb, yb, lo, hi);
        } catch (const NumericError& err) {
          throw NumericError(err.op(), "dynamics member " + std::to_string(m) +
                                           " diverged: " + err.what());
        }
        adam_step(opt, p, lg.second);
      }
      const double val = eval_nll(e.arch, p, x_hold, y_hold, config.logvar_min, config.logvar_max);
      if (!std::isfinite(val))
        throw NumericError("dynamics_nll", "dynamics member " + std::to_string(m) +
                                               " produced a non-finite validation loss");
      if (!std::isfinite(best_nll) || val < best_nll - 1e-4 * std::max(1.0, std::abs(best_nll))) {
        best_nll = val;
        best = p;
        stale = 0;
      } else {
        ++stale;
      }
    }
    e.members.push_back(std::move(best));
    e.validation_nll.push_back(best_nll);
  }
  std::vector<int> order(static_cast<std::size_t>(config.num_members));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return e.validation_nll[static_cast<std::size_t>(a)] < e.validation_nll[static_cast<std::size_t>(b)];
  });
  e.elites.assign(order.begin(), order.begin() + config.num_elites);
  if (e.elites.size() >= 2) e.morel_threshold = morel_threshold(e, t);
  return e;
}

namespace {
constexpr std::string_view kDynamicsMagic = "UFDYNAM1";
constexpr int kDynamicsFormatVersion = 1;
}  // namespace

void save_dynamics(const DynamicsEnsemble& e, const std::string& path) {
  nlohmann::json h{{"format_version", kDynamicsFormatVersion},
                   {"obs_dim", e.obs_dim},
                   {"act_dim", e.act_dim},
                   {"arch", e.arch},
                   {"num_members", e.members.size()},
                   {"param_count", e.arch.param_count()},
                   {"elites", e.elites},
                   {"validation_nll", e.validation_nll},
                   {"input_mean", e.input_mean},
                   {"input_std", e.input_std},
                   {"target_mean", e.target_mean},
                   {"target_std", e.target_std},
                   {"logvar_min", e.logvar_min},
                   {"logvar_max", e.logvar_max},
                   {"morel_threshold", e.morel_threshold}};
  std::vector<float> payload;
  for (const auto& m : e.members) payload.insert(payload.end(), m.begin(), m.end());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open '" + path + "' for writing");
  binio::write_frame(os, kDynamicsMagic, h, payload);
}

DynamicsEnsemble load_dynamics(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open '" + path + "'");
  auto f = binio::read_frame(is, kDynamicsMagic, [](const nlohmann::json& h) {
    if (h.at("format_version").get<int>() != kDynamicsFormatVersion)
      throw VersionError("unsupported dynamics format version");
    return h.at("num_members").get<std::size_t>() * h.at("param_count").get<std::size_t>();
  });
  DynamicsEnsemble e;
  try {
    const auto& h = f.header;
    e.obs_dim = h.at("obs_dim").get<int>();
    e.act_dim = h.at("act_dim").get<int>();
    e.arch = h.at("arch").get<MlpArch>();
    e.elites = h.at("elites").get<std::vector<int>>();
    e.validation_nll = h.at("validation_nll").get<std::vector<double>>();
    e.input_mean = h.at("input_mean").get<std::vector<float>>();
    e.input_std = h.at("input_std").get<std::vector<float>>();
    e.target_mean = h.at("target_mean").get<std::vector<float>>();
    e.target_std = h.at("target_std").get<std::vector<float>>();
    e.logvar_min = h.at("logvar_min").get<double>();
    e.logvar_max = h.at("logvar_max").get<double>();
    e.morel_threshold = h.at("morel_threshold").get<double>();
    const auto pc = h.at("param_count").get<std::size_t>();
    if (pc != e.arch.param_count()) throw FormatError("dynamics param_count mismatch");
    const auto members = h.at("num_members").get<std::size_t>();
    for (std::size_t m = 0; m < members; ++m)
      e.members.emplace_back(f.payload.begin() + static_cast<std::ptrdiff_t>(m * pc),
                             f.payload.begin() + static_cast<std::ptrdiff_t>((m + 1) * pc));
  } catch (const nlohmann::json::exception& err) {
    throw FormatError(std::string("malformed dynamics header: ") + err.what());
  }
  for (float v : f.payload)
    if (!std::isfinite(v)) throw NonFiniteDataError("non-finite dynamics parameter");
  return e;
}

template ad::Var<float> soft_clamp_logvar(const ad::Var<float>&, float, float);
template ad::Var<double> soft_clamp_logvar(const ad::Var<double>&, double, double);
template std::pair<float, Params<float>> dynamics_nll(const MlpArch&, std::span<const float>,
                                                      const ad::Matrix<float>&,
                                                      const ad::Matrix<float>&, float, float);
template std::pair<double, Params<double>> dynamics_nll(const MlpArch&, std::span<const double>,
                                                        const ad::Matrix<double>&,
                                                        const ad::Matrix<double>&, double, double);

}  // namespace unifloral
