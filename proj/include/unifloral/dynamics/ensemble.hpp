#pragma once

// Ensemble of probabilistic dynamics models.
//
// Each member maps the normalized input (s, a) to a diagonal Gaussian over the
// normalized target (s' - s, r). The first D = obs_dim + 1 outputs are means,
// the next D are raw log-variances, softly clamped into
// [logvar_min, logvar_max]. Members are trained on bootstrap resamples of the
// training split by Gaussian negative log-likelihood.

#include <span>
#include <string>
#include <utility>
#include <vector>

#include "unifloral/dynamics/config.hpp"
#include "unifloral/envdata/dataset.hpp"
#include "unifloral/numerics/mlp.hpp"

namespace unifloral {

struct DynamicsEnsemble {
  int obs_dim = 0;
  int act_dim = 0;
  MlpArch arch;
  std::vector<ParamVector> members;
  std::vector<int> elites;                 // sorted by validation NLL, best first
  std::vector<double> validation_nll;      // per member, best epoch
  std::vector<float> input_mean, input_std;    // over (s, a)
  std::vector<float> target_mean, target_std;  // over (s' - s, r)
  double logvar_min = -10.0;
  double logvar_max = 1.0;
  double morel_threshold = 0.0;            // filled by train_dynamics

  bool trained() const { return !members.empty() && !elites.empty(); }
  int target_dim() const { return obs_dim + 1; }
};

// Soft clamp of raw log-variances (differentiable).
template <typename T>
ad::Var<T> soft_clamp_logvar(const ad::Var<T>& raw, T lo, T hi);

// Mean Gaussian NLL (without the constant term) of normalized targets y under
// the member with parameters `params`, and its parameter gradient.
//   nll = mean_b 0.5 * sum_d ((y - mu)^2 exp(-lv) + lv)
template <typename T>
std::pair<T, Params<T>> dynamics_nll(const MlpArch& arch, std::span<const T> params,
                                     const ad::Matrix<T>& x, const ad::Matrix<T>& y, T logvar_min,
                                     T logvar_max);

struct MemberPrediction {
  Eigen::MatrixXd delta_mean;    // obs_dim x B, de-normalized
  Eigen::MatrixXd delta_logvar;  // obs_dim x B, de-normalized
  Eigen::RowVectorXd reward_mean;
  Eigen::RowVectorXd reward_logvar;
};

// obs: obs_dim x B raw observations, act: act_dim x B.
MemberPrediction predict_member(const DynamicsEnsemble& e, std::size_t member,
                                const Eigen::MatrixXd& obs, const Eigen::MatrixXd& act);

// Mean elite reward minus eta times the L2 norm (over state dimensions) of the
// per-dimension population std of elite mean state changes. Returns 1 x B.
Eigen::RowVectorXd penalized_reward(const DynamicsEnsemble& e, const Eigen::MatrixXd& obs,
                                    const Eigen::MatrixXd& act, double eta);
// Same, from precomputed elite predictions.
Eigen::RowVectorXd penalized_reward(const std::vector<MemberPrediction>& elite_preds, double eta);

// Largest pairwise L2 distance between elite mean state changes, per sample.
Eigen::RowVectorXd elite_disagreement(const std::vector<MemberPrediction>& elite_preds);

// max over the dataset of elite_disagreement. Throws ContractError with < 2 elites.
double morel_threshold(const DynamicsEnsemble& e, const TransitionBatch& data);

// Trains on raw (unnormalized) observations. Throws ContractError for fewer
// than 100 transitions and NumericError (naming the member) on divergence.
DynamicsEnsemble train_dynamics(const Dataset& dataset, const DynamicsTrainConfig& config);

// Elite validation MSE of the state change and the target variance, both
// averaged over state dimensions, on the given transitions.
std::pair<double, double> delta_mse_and_variance(const DynamicsEnsemble& e,
                                                 const TransitionBatch& data);

// Directory-free single-file checkpoint: JSON header with arch, elites,
// statistics and threshold, followed by the member parameters.
void save_dynamics(const DynamicsEnsemble& e, const std::string& path);
DynamicsEnsemble load_dynamics(const std::string& path);

}  // namespace unifloral
