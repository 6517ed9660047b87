#include "unifloral/dynamics/rollout.hpp"

#include <cmath>

#include "unifloral/numerics/errors.hpp"

namespace unifloral {

namespace {

void push_col(std::vector<float>& dst, const Eigen::MatrixXd& m, Eigen::Index j) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) dst.push_back(static_cast<float>(m(i, j)));
}

Eigen::MatrixXd select_cols(const Eigen::MatrixXd& m, const std::vector<Eigen::Index>& cols) {
  Eigen::MatrixXd out(m.rows(), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t j = 0; j < cols.size(); ++j) out.col(static_cast<Eigen::Index>(j)) = m.col(cols[j]);
  return out;
}

}  // namespace

TransitionBatch synthetic_rollout(const DynamicsEnsemble& e, const BatchPolicy& policy,
                                  const Eigen::MatrixXd& start_obs,
                                  const DynamicsSamplingConfig& config,
                                  const TerminationFn& termination, Rng& rng,
                                  RolloutStats* stats) {
  if (!e.trained()) throw ContractError("synthetic_rollout: ensemble is not trained");
  if (start_obs.rows() != e.obs_dim) throw ContractError("synthetic_rollout: obs dimension mismatch");
  if (config.use_morel_halt && e.elites.size() < 2)
    throw ContractError("synthetic_rollout: MOReL halting needs at least two elites");
  TransitionBatch out;
  out.obs_dim = e.obs_dim;
  out.act_dim = e.act_dim;
  RolloutStats st;
  const double halt_at = config.morel_pessimism * e.morel_threshold;

  Eigen::MatrixXd obs = start_obs;
  Eigen::MatrixXd act = policy(obs);
  for (int step = 0; step < config.rollout_length && obs.cols() > 0; ++step) {
    const Eigen::Index b = obs.cols();
    std::vector<MemberPrediction> preds;
    for (int k : e.elites) preds.push_back(predict_member(e, static_cast<std::size_t>(k), obs, act));
    const Eigen::RowVectorXd reward = penalized_reward(preds, config.pessimism_coef);
    Eigen::RowVectorXd disagreement;
    if (config.use_morel_halt) disagreement = elite_disagreement(preds);

    Eigen::MatrixXd next(e.obs_dim, b);
    for (Eigen::Index j = 0; j < b; ++j) {
      const auto& p = preds[rng.index(preds.size())];
      for (int i = 0; i < e.obs_dim; ++i)
        next(i, j) = obs(i, j) + p.delta_mean(i, j) + std::exp(0.5 * p.delta_logvar(i, j)) * rng.normal();
    }
    const Eigen::MatrixXd next_act = policy(next);

    std::vector<Eigen::Index> alive;
    for (Eigen::Index j = 0; j < b; ++j) {
      std::vector<double> s(obs.col(j).data(), obs.col(j).data() + e.obs_dim);
      std::vector<double> a(act.col(j).data(), act.col(j).data() + e.act_dim);
      std::vector<double> s2(next.col(j).data(), next.col(j).data() + e.obs_dim);
      bool done = termination && termination(s, a, s2);
      if (done) ++st.terminated;
      if (!done && config.use_morel_halt && disagreement(j) >= halt_at) {
        done = true;
        ++st.halted;
      }
      push_col(out.obs, obs, j);
      push_col(out.action, act, j);
      out.reward.push_back(static_cast<float>(reward(j)));
      push_col(out.next_obs, next, j);
      push_col(out.next_action, next_act, j);
      out.done.push_back(done ? 1.0f : 0.0f);
      ++st.transitions;
      if (!done) alive.push_back(j);
    }
    obs = select_cols(next, alive);
    act = select_cols(next_act, alive);
  }
  if (stats) *stats = st;
  return out;
}

SyntheticBuffer::SyntheticBuffer(int obs_dim, int act_dim, std::size_t capacity)
    : capacity_(capacity) {
  if (capacity == 0) throw ContractError("SyntheticBuffer: capacity must be positive");
  data_.obs_dim = obs_dim;
  data_.act_dim = act_dim;
}

void SyntheticBuffer::add(const TransitionBatch& batch) {
  const auto od = static_cast<std::size_t>(data_.obs_dim), ad = static_cast<std::size_t>(data_.act_dim);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    if (data_.size() < capacity_) {
      data_.append(batch, i);
      continue;
    }
    const std::size_t k = next_;
    std::copy_n(batch.obs.begin() + static_cast<std::ptrdiff_t>(i * od), od, data_.obs.begin() + static_cast<std::ptrdiff_t>(k * od));
    std::copy_n(batch.next_obs.begin() + static_cast<std::ptrdiff_t>(i * od), od, data_.next_obs.begin() + static_cast<std::ptrdiff_t>(k * od));
    std::copy_n(batch.action.begin() + static_cast<std::ptrdiff_t>(i * ad), ad, data_.action.begin() + static_cast<std::ptrdiff_t>(k * ad));
    std::copy_n(batch.next_action.begin() + static_cast<std::ptrdiff_t>(i * ad), ad, data_.next_action.begin() + static_cast<std::ptrdiff_t>(k * ad));
    data_.reward[k] = batch.reward[i];
    data_.done[k] = batch.done[i];
    next_ = (next_ + 1) % capacity_;
  }
}

TransitionBatch mix_batches(const TransitionBatch& real, const TransitionBatch& synthetic,
                            double real_ratio, std::size_t batch_size, Rng& rng) {
  if (!(real_ratio >= 0.0 && real_ratio <= 1.0)) throw ContractError("mix_batches: real_ratio outside [0, 1]");
  const auto n_real = static_cast<std::size_t>(std::llround(real_ratio * static_cast<double>(batch_size)));
  const std::size_t n_syn = batch_size - n_real;
  if (n_real > 0 && real.size() == 0) throw ContractError("mix_batches: real source is empty");
  if (n_syn > 0 && synthetic.size() == 0) throw ContractError("mix_batches: synthetic source is empty");
  TransitionBatch out;
  out.obs_dim = real.size() ? real.obs_dim : synthetic.obs_dim;
  out.act_dim = real.size() ? real.act_dim : synthetic.act_dim;
  out.reserve(batch_size);
  std::vector<std::pair<int, std::size_t>> picks;
  picks.reserve(batch_size);
  for (std::size_t i = 0; i < n_real; ++i) picks.emplace_back(0, rng.index(real.size()));
  for (std::size_t i = 0; i < n_syn; ++i) picks.emplace_back(1, rng.index(synthetic.size()));
  for (std::size_t i = picks.size(); i-- > 1;) std::swap(picks[i], picks[rng.index(i + 1)]);
  for (const auto& [src, idx] : picks) out.append(src == 0 ? real : synthetic, idx);
  return out;
}

}  // namespace unifloral
