#include "unifloral/numerics/mlp.hpp"

#include <cmath>

namespace unifloral {

std::size_t MlpArch::param_count() const {
  std::size_t n = 0;
  for (std::size_t l = 0; l < num_layers(); ++l) {
    const auto in = static_cast<std::size_t>(layer_in(l));
    const auto out = static_cast<std::size_t>(layer_out(l));
    n += out * in + out;
    if (layer_has_norm(l)) n += 2 * out;
  }
  return n;
}

void MlpArch::validate(bool require_hidden) const {
  if (input_dim <= 0 || output_dim <= 0) throw ContractError("MlpArch: dimensions must be positive");
  if (require_hidden && hidden_widths.empty())
    throw ContractError("MlpArch: at least one hidden layer is required");
  for (int w : hidden_widths)
    if (w <= 0) throw ContractError("MlpArch: hidden widths must be positive");
}

namespace {

template <typename T>
using RowMajor = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

void check_params(const MlpArch& arch, std::size_t n) {
  if (n != arch.param_count())
    throw ContractError("parameter vector length " + std::to_string(n) +
                        " does not match architecture (" + std::to_string(arch.param_count()) +
                        ")");
}

Eigen::MatrixXd orthogonal(int rows, int cols, double gain, Rng& rng) {
  const int big = std::max(rows, cols), small = std::min(rows, cols);
  Eigen::MatrixXd g(big, small);
  for (int j = 0; j < small; ++j)
    for (int i = 0; i < big; ++i) g(i, j) = rng.normal();
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(big, small);
  const Eigen::MatrixXd r = qr.matrixQR().topRows(small);
  for (int j = 0; j < small; ++j)
    if (r(j, j) < 0) q.col(j) *= -1.0;
  Eigen::MatrixXd w = rows >= cols ? q : Eigen::MatrixXd(q.transpose());
  return gain * w;
}

}  // namespace

ParamVector init_params(const MlpArch& arch, Rng& rng) {
  arch.validate(false);
  ParamVector p;
  p.reserve(arch.param_count());
  for (std::size_t l = 0; l < arch.num_layers(); ++l) {
    const int in = arch.layer_in(l), out = arch.layer_out(l);
    const bool hidden = l + 1 < arch.num_layers();
    const double gain =
        hidden ? (arch.activation == Activation::relu ? std::sqrt(2.0) : 5.0 / 3.0) : 1.0;
    const Eigen::MatrixXd w = orthogonal(out, in, gain, rng);
    for (int i = 0; i < out; ++i)
      for (int j = 0; j < in; ++j) p.push_back(static_cast<float>(w(i, j)));
    p.insert(p.end(), static_cast<std::size_t>(out), 0.0f);
    if (arch.layer_has_norm(l)) {
      p.insert(p.end(), static_cast<std::size_t>(out), 1.0f);
      p.insert(p.end(), static_cast<std::size_t>(out), 0.0f);
    }
  }
  return p;
}

template <typename T>
ad::Matrix<T> mlp_forward_batch(const MlpArch& arch, std::span<const T> params,
                                const ad::Matrix<T>& input) {
  arch.validate(false);
  check_params(arch, params.size());
  if (input.rows() != arch.input_dim)
    throw ContractError("mlp_forward: input has " + std::to_string(input.rows()) +
                        " features, expected " + std::to_string(arch.input_dim));
  ad::Matrix<T> x = input;
  std::size_t off = 0;
  for (std::size_t l = 0; l < arch.num_layers(); ++l) {
    const int in = arch.layer_in(l), out = arch.layer_out(l);
    Eigen::Map<const RowMajor<T>> w(params.data() + off, out, in);
    off += static_cast<std::size_t>(out * in);
    Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>> b(params.data() + off, out);
    off += static_cast<std::size_t>(out);
    ad::Matrix<T> z = w * x;
    z.colwise() += b;
    const bool hidden = l + 1 < arch.num_layers();
    if (arch.layer_has_norm(l)) {
      Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>> s(params.data() + off, out);
      Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>> o(params.data() + off + out, out);
      off += static_cast<std::size_t>(2 * out);
      const T inv_f = T(1) / static_cast<T>(out);
      for (Eigen::Index c = 0; c < z.cols(); ++c) {
        auto col = z.col(c);
        const T mu = col.sum() * inv_f;
        col.array() -= mu;
        const T var = col.squaredNorm() * inv_f;
        col *= T(1) / std::sqrt(var + static_cast<T>(kLayerNormEps));
        col = col.cwiseProduct(s) + o;
      }
    }
    if (hidden) {
      if (arch.activation == Activation::relu) {
        z = z.cwiseMax(T(0));
      } else {
        z = z.array().tanh();
      }
    } else if (arch.final_activation == FinalActivation::tanh) {
      z = z.array().tanh();
    }
    x = std::move(z);
  }
  if (!x.allFinite()) throw NumericError("mlp_forward");
  return x;
}

template <typename T>
std::vector<T> mlp_forward(const MlpArch& arch, std::span<const T> params,
                           std::span<const T> input) {
  if (input.size() != static_cast<std::size_t>(arch.input_dim))
    throw ContractError("mlp_forward: input length mismatch");
  ad::Matrix<T> x = Eigen::Map<const ad::Matrix<T>>(input.data(), arch.input_dim, 1);
  ad::Matrix<T> y = mlp_forward_batch<T>(arch, params, x);
  return std::vector<T>(y.data(), y.data() + y.size());
}

template <typename T>
MlpVars<T> bind_params(ad::Tape<T>& tape, const MlpArch& arch, std::span<const T> params,
                       bool trainable) {
  arch.validate(false);
  check_params(arch, params.size());
  MlpVars<T> vars;
  std::size_t off = 0;
  auto make = [&](ad::Matrix<T> m, const char* label) {
    vars.leaves.push_back(trainable ? tape.leaf(std::move(m), label)
                                    : tape.constant(std::move(m), label));
  };
  for (std::size_t l = 0; l < arch.num_layers(); ++l) {
    const int in = arch.layer_in(l), out = arch.layer_out(l);
    make(ad::Matrix<T>(Eigen::Map<const RowMajor<T>>(params.data() + off, out, in)), "weight");
    off += static_cast<std::size_t>(out * in);
    make(ad::Matrix<T>(Eigen::Map<const ad::Matrix<T>>(params.data() + off, out, 1)), "bias");
    off += static_cast<std::size_t>(out);
    if (arch.layer_has_norm(l)) {
      make(ad::Matrix<T>(Eigen::Map<const ad::Matrix<T>>(params.data() + off, out, 1)),
           "ln_scale");
      make(ad::Matrix<T>(Eigen::Map<const ad::Matrix<T>>(params.data() + off + out, out, 1)),
           "ln_offset");
      off += static_cast<std::size_t>(2 * out);
    }
  }
  return vars;
}

template <typename T>
ad::Var<T> mlp_apply(const MlpArch& arch, const MlpVars<T>& vars, const ad::Var<T>& input) {
  if (input.rows() != arch.input_dim)
    throw ContractError("mlp_apply: input has " + std::to_string(input.rows()) +
                        " features, expected " + std::to_string(arch.input_dim));
  ad::Var<T> x = input;
  std::size_t k = 0;
  for (std::size_t l = 0; l < arch.num_layers(); ++l) {
    const ad::Var<T>& w = vars.leaves.at(k++);
    const ad::Var<T>& b = vars.leaves.at(k++);
    ad::Var<T> z = ad::add_bias(ad::matmul(w, x), b);
    if (arch.layer_has_norm(l)) {
      const ad::Var<T>& s = vars.leaves.at(k++);
      const ad::Var<T>& o = vars.leaves.at(k++);
      z = ad::layer_norm(z, s, o, static_cast<T>(kLayerNormEps));
    }
    const bool hidden = l + 1 < arch.num_layers();
    if (hidden) {
      z = arch.activation == Activation::relu ? ad::relu(z) : ad::tanh(z);
    } else if (arch.final_activation == FinalActivation::tanh) {
      z = ad::tanh(z);
    }
    x = z;
  }
  return x;
}

template <typename T>
Params<T> flatten_grads(const MlpArch& arch, std::span<const ad::Var<T>> grads) {
  Params<T> out;
  out.reserve(arch.param_count());
  for (const auto& g : grads) {
    const auto& m = g.value();
    // weights are row-major in the flat layout; vectors are single columns
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index j = 0; j < m.cols(); ++j) out.push_back(m(i, j));
  }
  if (out.size() != arch.param_count()) throw ContractError("flatten_grads: size mismatch");
  return out;
}

template <typename T>
std::pair<T, Params<T>> loss_grad(
    const MlpArch& arch, std::span<const T> params,
    const std::function<ad::Var<T>(ad::Tape<T>&, const MlpVars<T>&)>& loss) {
  ad::Tape<T> tape;
  MlpVars<T> vars = bind_params(tape, arch, params, true);
  ad::Var<T> l = loss(tape, vars);
  const T value = l.scalar();
  auto grads = tape.gradients(l, vars.leaves);
  return {value, flatten_grads<T>(arch, grads)};
}

#define UNIFLORAL_MLP_INSTANTIATE(T)                                                        \
  template ad::Matrix<T> mlp_forward_batch(const MlpArch&, std::span<const T>,             \
                                           const ad::Matrix<T>&);                          \
  template std::vector<T> mlp_forward(const MlpArch&, std::span<const T>, std::span<const T>); \
  template MlpVars<T> bind_params(ad::Tape<T>&, const MlpArch&, std::span<const T>, bool);  \
  template ad::Var<T> mlp_apply(const MlpArch&, const MlpVars<T>&, const ad::Var<T>&);      \
  template Params<T> flatten_grads(const MlpArch&, std::span<const ad::Var<T>>);            \
  template std::pair<T, Params<T>> loss_grad(                                               \
      const MlpArch&, std::span<const T>,                                                   \
      const std::function<ad::Var<T>(ad::Tape<T>&, const MlpVars<T>&)>&);

UNIFLORAL_MLP_INSTANTIATE(float)
UNIFLORAL_MLP_INSTANTIATE(double)

}  // namespace unifloral
