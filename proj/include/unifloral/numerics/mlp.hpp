#pragma once

#include <functional>
#include <span>
#include <utility>
#include <vector>

#include "unifloral/numerics/autodiff.hpp"
#include "unifloral/numerics/rng.hpp"

namespace unifloral {

enum class Activation { relu, tanh };
enum class FinalActivation { none, tanh };

template <typename T>
using Params = std::vector<T>;
using ParamVector = Params<float>;

inline constexpr double kLayerNormEps = 1e-5;

// Fully connected network description.
//
// Flat parameter layout, layer by layer from input to output:
//   W (out x in, row-major), b (out),
//   then for hidden layers with layer norm: scale (out), offset (out).
// Hidden layers compute act(LN(W x + b)); the output layer computes
// final(W x + b).
struct MlpArch {
  int input_dim = 0;
  std::vector<int> hidden_widths;
  int output_dim = 0;
  Activation activation = Activation::relu;
  bool use_layer_norm = false;
  FinalActivation final_activation = FinalActivation::none;

  std::size_t num_layers() const { return hidden_widths.size() + 1; }
  int layer_in(std::size_t l) const { return l == 0 ? input_dim : hidden_widths[l - 1]; }
  int layer_out(std::size_t l) const {
    return l < hidden_widths.size() ? hidden_widths[l] : output_dim;
  }
  bool layer_has_norm(std::size_t l) const {
    return use_layer_norm && l < hidden_widths.size();
  }
  std::size_t param_count() const;
  // Throws ContractError. Agent networks require at least one hidden layer.
  void validate(bool require_hidden = true) const;

  friend bool operator==(const MlpArch&, const MlpArch&) = default;
};

ParamVector init_params(const MlpArch& arch, Rng& rng);

template <typename T>
ad::Matrix<T> mlp_forward_batch(const MlpArch& arch, std::span<const T> params,
                                const ad::Matrix<T>& input);

template <typename T>
std::vector<T> mlp_forward(const MlpArch& arch, std::span<const T> params,
                           std::span<const T> input);

// Parameters bound as tape variables, in layout order.
template <typename T>
struct MlpVars {
  std::vector<ad::Var<T>> leaves;
};

// Trainable parameters become leaves; otherwise constants.
template <typename T>
MlpVars<T> bind_params(ad::Tape<T>& tape, const MlpArch& arch, std::span<const T> params,
                       bool trainable);

template <typename T>
ad::Var<T> mlp_apply(const MlpArch& arch, const MlpVars<T>& vars, const ad::Var<T>& input);

// Packs per-leaf gradient matrices back into the flat layout.
template <typename T>
Params<T> flatten_grads(const MlpArch& arch, std::span<const ad::Var<T>> grads);

// Evaluates `loss` (which must return a 1x1 variable built from the bound
// parameters) and its exact gradient with respect to `params`.
template <typename T>
std::pair<T, Params<T>> loss_grad(
    const MlpArch& arch, std::span<const T> params,
    const std::function<ad::Var<T>(ad::Tape<T>&, const MlpVars<T>&)>& loss);

}  // namespace unifloral
