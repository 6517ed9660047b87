#pragma once

// Tape-based reverse-mode differentiation over dense matrices.
//
// Every operation records its value and a backward rule. Backward rules are
// themselves written with tape operations, so gradients can be taken with
// `create_graph = true` and differentiated again (needed for losses that
// contain input-gradients, e.g. the critic diversity penalty).
//
// Batched tensors are laid out feature-major: a (features x batch) matrix,
// one column per sample.

#include <Eigen/Dense>
#include <array>
#include <deque>
#include <functional>
#include <span>
#include <vector>

#include "unifloral/numerics/errors.hpp"

namespace unifloral::ad {

template <typename T>
using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;

template <typename T>
class Tape;

template <typename T>
struct Var {
  Tape<T>* tape = nullptr;
  int id = -1;

  bool valid() const { return tape != nullptr && id >= 0; }
  const Matrix<T>& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  T scalar() const;
};

template <typename T>
class Tape {
 public:
  using Grads = std::array<Var<T>, 2>;
  using Need = std::array<bool, 2>;
  using BackwardFn = std::function<Grads(Tape&, int self, const Var<T>& grad, Need need)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Parameter leaf. Gradients are only propagated towards leaves created here.
  Var<T> leaf(Matrix<T> value, const char* label = "leaf");
  Var<T> constant(Matrix<T> value, const char* label = "constant");
  Var<T> constant_like(T fill, Eigen::Index rows, Eigen::Index cols);

  // Internal: record an op result. `parents` entries of -1 are unused.
  Var<T> record(Matrix<T> value, std::array<int, 2> parents, BackwardFn backward,
                const char* label);

  const Matrix<T>& value(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }
  bool requires_grad(int id) const { return nodes_[static_cast<std::size_t>(id)].requires_grad; }
  std::size_t size() const { return nodes_.size(); }

  // When false, new nodes are recorded as constants (no backward rule).
  bool recording() const { return recording_; }
  void set_recording(bool on) { recording_ = on; }

  // d(sum(seed .* y)) / d(wrt). `seed` defaults to all-ones. Returns zero
  // matrices for inputs that y does not depend on. With create_graph the
  // returned gradients are differentiable tape variables.
  std::vector<Var<T>> gradients(const Var<T>& y, std::span<const Var<T>> wrt,
                                bool create_graph = false, const Matrix<T>* seed = nullptr);

 private:
  struct Node {
    Matrix<T> value;
    std::array<int, 2> parents{-1, -1};
    BackwardFn backward;
    bool requires_grad = false;
    const char* label = "";
  };

  std::deque<Node> nodes_;  // stable references while backward rules append
  bool recording_ = true;
};

// Restores the tape's recording flag on scope exit.
template <typename T>
class RecordingScope {
 public:
  RecordingScope(Tape<T>& tape, bool on) : tape_(tape), saved_(tape.recording()) {
    tape.set_recording(on);
  }
  ~RecordingScope() { tape_.set_recording(saved_); }
  RecordingScope(const RecordingScope&) = delete;
  RecordingScope& operator=(const RecordingScope&) = delete;

 private:
  Tape<T>& tape_;
  bool saved_;
};

// ---- primitive operations -------------------------------------------------

template <typename T> Var<T> matmul(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> transpose(const Var<T>& a);
// a * b^T and a^T * b without materializing the transpose.
template <typename T> Var<T> matmul_nt(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> matmul_tn(const Var<T>& a, const Var<T>& b);
// (F x B) + (F x 1) broadcast over columns.
template <typename T> Var<T> add_bias(const Var<T>& a, const Var<T>& b);
// (F x B) scaled row-wise by (F x 1).
template <typename T> Var<T> scale_rows(const Var<T>& a, const Var<T>& s);
// Each column shifted to zero mean and scaled to unit variance over its rows.
template <typename T> Var<T> standardize(const Var<T>& x, T eps);
template <typename T> Var<T> add(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> sub(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> mul(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> scale(const Var<T>& a, T c);
template <typename T> Var<T> add_scalar(const Var<T>& a, T c);
template <typename T> Var<T> neg(const Var<T>& a);
template <typename T> Var<T> reciprocal(const Var<T>& a);
template <typename T> Var<T> square(const Var<T>& a);
template <typename T> Var<T> rsqrt(const Var<T>& a);
template <typename T> Var<T> relu(const Var<T>& a);
template <typename T> Var<T> tanh(const Var<T>& a);
template <typename T> Var<T> exp(const Var<T>& a);
template <typename T> Var<T> log(const Var<T>& a);
template <typename T> Var<T> sigmoid(const Var<T>& a);
template <typename T> Var<T> softplus(const Var<T>& a);
// Elementwise min; on ties the gradient goes to `a`.
template <typename T> Var<T> minimum(const Var<T>& a, const Var<T>& b);
// Elementwise clamp; zero gradient where the bound is active.
template <typename T> Var<T> clamp(const Var<T>& a, T lo, T hi);
// Multiplies by a constant matrix (no gradient to the mask).
template <typename T> Var<T> mul_const(const Var<T>& a, const Matrix<T>& m);
template <typename T> Var<T> add_const(const Var<T>& a, const Matrix<T>& m);
// (F x B) -> (1 x B)
template <typename T> Var<T> sum_rows(const Var<T>& a);
// (F x B) -> (F x 1)
template <typename T> Var<T> sum_cols(const Var<T>& a);
// (1 x B) -> (F x B)
template <typename T> Var<T> replicate_rows(const Var<T>& a, Eigen::Index rows);
// (F x 1) -> (F x B)
template <typename T> Var<T> replicate_cols(const Var<T>& a, Eigen::Index cols);
// (1 x 1) -> (R x C)
template <typename T> Var<T> broadcast_scalar(const Var<T>& a, Eigen::Index rows, Eigen::Index cols);
template <typename T> Var<T> sum_all(const Var<T>& a);
template <typename T> Var<T> mean_all(const Var<T>& a);
template <typename T> Var<T> slice_rows(const Var<T>& a, Eigen::Index start, Eigen::Index count);
template <typename T> Var<T> embed_rows(const Var<T>& a, Eigen::Index start, Eigen::Index total);
template <typename T> Var<T> concat_rows(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> detach(const Var<T>& a);

// ---- composites ----------------------------------------------------------

// Normalizes each column over its rows, then applies per-row scale/offset.
template <typename T>
Var<T> layer_norm(const Var<T>& x, const Var<T>& scale, const Var<T>& offset, T eps);

// log N(x; mean, exp(log_std)) summed over rows -> (1 x B).
template <typename T>
Var<T> gaussian_log_density(const Var<T>& x, const Var<T>& mean, const Var<T>& log_std);

template <typename T> inline Var<T> operator+(const Var<T>& a, const Var<T>& b) { return add(a, b); }
template <typename T> inline Var<T> operator-(const Var<T>& a, const Var<T>& b) { return sub(a, b); }
template <typename T> inline Var<T> operator*(const Var<T>& a, const Var<T>& b) { return mul(a, b); }
template <typename T> inline Var<T> operator-(const Var<T>& a) { return neg(a); }

}  // namespace unifloral::ad
