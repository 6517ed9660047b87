#include "unifloral/numerics/autodiff.hpp"

#include <cmath>
#include <numbers>

namespace unifloral::ad {

namespace {

// A sum is finite only if every term is, so the vectorized sum screens the
// common case; the exact elementwise test runs only when the sum is not finite
// (which overflow alone can also cause).
template <typename T>
bool all_finite(const Matrix<T>& m) {
  return std::isfinite(m.sum()) || m.allFinite();
}

}  // namespace

template <typename T>
const Matrix<T>& Var<T>::value() const {
  return tape->value(id);
}

template <typename T>
T Var<T>::scalar() const {
  const auto& v = value();
  if (v.rows() != 1 || v.cols() != 1) throw ContractError("Var::scalar on a non-scalar value");
  return v(0, 0);
}

template <typename T>
Var<T> Tape<T>::leaf(Matrix<T> value, const char* label) {
  if (!all_finite(value)) throw NumericError(label);
  nodes_.push_back(Node{std::move(value), {-1, -1}, {}, true, label});
  return Var<T>{this, static_cast<int>(nodes_.size()) - 1};
}

template <typename T>
Var<T> Tape<T>::constant(Matrix<T> value, const char* label) {
  if (!all_finite(value)) throw NumericError(label);
  nodes_.push_back(Node{std::move(value), {-1, -1}, {}, false, label});
  return Var<T>{this, static_cast<int>(nodes_.size()) - 1};
}

template <typename T>
Var<T> Tape<T>::constant_like(T fill, Eigen::Index rows, Eigen::Index cols) {
  return constant(Matrix<T>::Constant(rows, cols, fill));
}

template <typename T>
Var<T> Tape<T>::record(Matrix<T> value, std::array<int, 2> parents, BackwardFn backward,
                       const char* label) {
  if (!all_finite(value)) throw NumericError(label);
  bool needs = false;
  if (recording_) {
    for (int p : parents) {
      if (p >= 0 && nodes_[static_cast<std::size_t>(p)].requires_grad) needs = true;
    }
  }
  if (needs) {
    nodes_.push_back(Node{std::move(value), parents, std::move(backward), true, label});
  } else {
    nodes_.push_back(Node{std::move(value), {-1, -1}, {}, false, label});
  }
  return Var<T>{this, static_cast<int>(nodes_.size()) - 1};
}

template <typename T>
std::vector<Var<T>> Tape<T>::gradients(const Var<T>& y, std::span<const Var<T>> wrt,
                                       bool create_graph, const Matrix<T>* seed) {
  if (y.tape != this) throw ContractError("gradients: output belongs to another tape");
  const std::size_t n = static_cast<std::size_t>(y.id) + 1;

  // reach[i]: node i depends on some wrt input through differentiable ops.
  std::vector<char> reach(n, 0);
  for (const auto& w : wrt) {
    if (w.tape != this) throw ContractError("gradients: input belongs to another tape");
    if (static_cast<std::size_t>(w.id) < n) reach[static_cast<std::size_t>(w.id)] = 1;
  }
  for (std::size_t i = 0; i < n; ++i) {
    const Node& node = nodes_[i];
    if (!node.requires_grad || !node.backward) continue;
    for (int p : node.parents) {
      if (p >= 0 && reach[static_cast<std::size_t>(p)]) reach[i] = 1;
    }
  }

  RecordingScope<T> scope(*this, create_graph);
  std::vector<Var<T>> acc(n);
  if (seed != nullptr) {
    if (seed->rows() != y.rows() || seed->cols() != y.cols())
      throw ContractError("gradients: seed shape mismatch");
    acc[n - 1] = constant(*seed, "grad_seed");
  } else {
    acc[n - 1] = constant(Matrix<T>::Ones(y.rows(), y.cols()), "grad_seed");
  }

  for (std::size_t k = n; k-- > 0;) {
    if (!acc[k].valid() || !reach[k]) continue;
    const Node& node = nodes_[k];
    if (!node.backward) continue;
    const std::array<int, 2> parents = node.parents;
    Need need{parents[0] >= 0 && reach[static_cast<std::size_t>(parents[0])],
              parents[1] >= 0 && reach[static_cast<std::size_t>(parents[1])]};
    if (!need[0] && !need[1]) continue;
    Grads g = node.backward(*this, static_cast<int>(k), acc[k], need);
    for (int j = 0; j < 2; ++j) {
      if (!need[j]) continue;
      auto& slot = acc[static_cast<std::size_t>(parents[j])];
      slot = slot.valid() ? add(slot, g[j]) : g[j];
    }
  }

  std::vector<Var<T>> out;
  out.reserve(wrt.size());
  for (const auto& w : wrt) {
    if (static_cast<std::size_t>(w.id) < n && acc[static_cast<std::size_t>(w.id)].valid()) {
      out.push_back(acc[static_cast<std::size_t>(w.id)]);
    } else {
      out.push_back(constant(Matrix<T>::Zero(w.rows(), w.cols()), "zero_grad"));
    }
  }
  return out;
}

namespace {

template <typename T>
using Grads = typename Tape<T>::Grads;
template <typename T>
using Need = typename Tape<T>::Need;

template <typename T>
void same_tape(const Var<T>& a, const Var<T>& b, const char* op) {
  if (!a.valid() || !b.valid() || a.tape != b.tape)
    throw ContractError(std::string(op) + ": operands must live on the same tape");
}

template <typename T>
void same_shape(const Var<T>& a, const Var<T>& b, const char* op) {
  same_tape(a, b, op);
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw ContractError(std::string(op) + ": shape mismatch");
}

template <typename T>
Var<T> at(Tape<T>& t, int id) {
  return Var<T>{&t, id};
}

}  // namespace

template <typename T>
Var<T> matmul(const Var<T>& a, const Var<T>& b) {
  same_tape(a, b, "matmul");
  if (a.cols() != b.rows()) throw ContractError("matmul: inner dimension mismatch");
  Matrix<T> v;
  v.noalias() = a.value() * b.value();
  const int ia = a.id, ib = b.id;
  return a.tape->record(
      std::move(v), {ia, ib},
      [ia, ib](Tape<T>& t, int, const Var<T>& g, Need<T> need) {
        Grads<T> r;
        if (need[0]) r[0] = matmul_nt(g, at(t, ib));
        if (need[1]) r[1] = matmul_tn(at(t, ia), g);
        return r;
      },
      "matmul");
}

template <typename T>
Var<T> matmul_nt(const Var<T>& a, const Var<T>& b) {
  same_tape(a, b, "matmul_nt");
  if (a.cols() != b.cols()) throw ContractError("matmul_nt: inner dimension mismatch");
  Matrix<T> v;
  v.noalias() = a.value() * b.value().transpose();
  const int ia = a.id, ib = b.id;
  return a.tape->record(
      std::move(v), {ia, ib},
      [ia, ib](Tape<T>& t, int, const Var<T>& g, Need<T> need) {
        Grads<T> r;
        if (need[0]) r[0] = matmul(g, at(t, ib));
        if (need[1]) r[1] = matmul_tn(g, at(t, ia));
        return r;
      },
      "matmul_nt");
}

template <typename T>
Var<T> matmul_tn(const Var<T>& a, const Var<T>& b) {
  same_tape(a, b, "matmul_tn");
  if (a.rows() != b.rows()) throw ContractError("matmul_tn: inner dimension mismatch");
  Matrix<T> v;
  v.noalias() = a.value().transpose() * b.value();
  const int ia = a.id, ib = b.id;
  return a.tape->record(
      std::move(v), {ia, ib},
      [ia, ib](Tape<T>& t, int, const Var<T>& g, Need<T> need) {
        Grads<T> r;
        if (need[0]) r[0] = matmul_nt(at(t, ib), g);
        if (need[1]) r[1] = matmul(at(t, ia), g);
        return r;
      },
      "matmul_tn");
}

template <typename T>
Var<T> add_bias(const Var<T>& a, const Var<T>& b) {
  same_tape(a, b, "add_bias");
  if (b.cols() != 1 || b.rows() != a.rows()) throw ContractError("add_bias: shape mismatch");
  Matrix<T> v = a.value();
  v.colwise() += b.value().col(0);
  return a.tape->record(
      std::move(v), {a.id, b.id},
      [](Tape<T>&, int, const Var<T>& g, Need<T> need) {
        Grads<T> r;
        r[0] = g;
        if (need[1]) r[1] = sum_cols(g);
        return r;
      },
      "add_bias");
}

template <typename T>
Var<T> scale_rows(const Var<T>& a, const Var<T>& s) {
  same_tape(a, s, "scale_rows");
  if (s.cols() != 1 || s.rows() != a.rows()) throw ContractError("scale_rows: shape mismatch");
  Matrix<T> v = a.value().array().colwise() * s.value().col(0).array();
  const int ia = a.id, is = s.id;
  return a.tape->record(
      std::move(v), {ia, is},
      [ia, is](Tape<T>& t, int, const Var<T>& g, Need<T> need) {
        Grads<T> r;
        if (need[0]) r[0] = scale_rows(g, at(t, is));
        if (need[1]) r[1] = sum_cols(mul(g, at(t, ia)));
        return r;
      },
      "scale_rows");
}

template <typename T>
Var<T> standardize(const Var<T>& x, T eps) {
  const Eigen::Index f = x.rows();
  const T inv_f = T(1) / static_cast<T>(f);
  Matrix<T> v = x.value().rowwise() - x.value().colwise().mean();
  const Eigen::Array<T, 1, Eigen::Dynamic> inv_std =
      ((v.array().square().colwise().sum() * inv_f) + eps).rsqrt();
  v.array().rowwise() *= inv_std;
  const int ix = x.id;
  return x.tape->record(
      std::move(v), {ix, -1},
      [ix, eps, inv_f, inv_std](Tape<T>& t, int self, const Var<T>& g, Need<T>) {
        if (t.recording()) {
          // Same formula in tape operations, with r recomputed from x, so that
          // the result is itself differentiable.
          const Eigen::Index f = g.rows();
          Var<T> x = at(t, ix), y = at(t, self);
          Var<T> centered = sub(x, replicate_rows(scale(sum_rows(x), inv_f), f));
          Var<T> r = rsqrt(add_scalar(scale(sum_rows(square(centered)), inv_f), eps));
          Var<T> gm = replicate_rows(scale(sum_rows(g), inv_f), f);
          Var<T> gy = replicate_rows(scale(sum_rows(mul(g, y)), inv_f), f);
          return Grads<T>{mul(sub(sub(g, gm), mul(y, gy)), replicate_rows(r, f)), {}};
        }
        // dx = r * (g - mean(g) - y * mean(g * y)), column by column
        const Matrix<T>& y = t.value(self);
        const Matrix<T>& gv = g.value();
        Matrix<T> dx = gv.rowwise() - gv.colwise().mean();
        const Eigen::Array<T, 1, Eigen::Dynamic> gy = (gv.array() * y.array()).colwise().sum() * inv_f;
        dx.array() -= y.array().rowwise() * gy;
        dx.array().rowwise() *= inv_std;
        return Grads<T>{t.constant(std::move(dx), "standardize_grad"), {}};
      },
      "standardize");
}

template <typename T>
Var<T> transpose(const Var<T>& a) {
  Matrix<T> v = a.value().transpose();
  return a.tape->record(
      std::move(v), {a.id, -1},
      [](Tape<T>&, int, const Var<T>& g, Need<T>) { return Grads<T>{transpose(g), {}}; },
      "transpose");
}

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  same_shape(a, b, "add");
  Matrix<T> v = a.value() + b.value();
  return a.tape->record(
      std::move(v), {a.id, b.id},
      [](Tape<T>&, int, const Var<T>& g, Need<T>) { return Grads<T>{g, g}; }, "add");
}

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  same_shape(a, b, "sub");
  Matrix<T> v = a.value() - b.value();
  return a.tape->record(
      std::move(v), {a.id, b.id},
      [](Tape<T>&, int, const Var<T>& g, Need<T> need) {
        Grads<T> r;
        r[0] = g;
        if (need[1]) r[1] = neg(g);
        return r;
      },
      "sub");
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  same_shape(a, b, "mul");
  Matrix<T> v = a.value().cwiseProduct(b.value());
  const int ia = a.id, ib = b.id;
  return a.tape->record(
      std::move(v), {ia, ib},
      [ia, ib](Tape<T>& t, int, const Var<T>& g, Need<T> need) {
        Grads<T> r;
        if (need[0]) r[0] = mul(g, at(t, ib));
        if (need[1]) r[1] = mul(g, at(t, ia));
        return r;
      },
      "mul");
}

template <typename T>
Var<T> scale(const Var<T>& a, T c) {
  Matrix<T> v = a.value() * c;
  return a.tape->record(
      std::move(v), {a.id, -1},
      [c](Tape<T>&, int, const Var<T>& g, Need<T>) { return Grads<T>{scale(g, c), {}}; },
      "scale");
}

template <typename T>
Var<T> add_scalar(const Var<T>& a, T c) {
  Matrix<T> v = a.value().array() + c;
  return a.tape->record(
      std::move(v), {a.id, -1},
      [](Tape<T>&, int, const Var<T>& g, Need<T>) { return Grads<T>{g, {}}; }, "add_scalar");
}

template <typename T>
Var<T> neg(const Var<T>& a) {
  Matrix<T> v = -a.value();
  return a.tape->record(
      std::move(v), {a.id, -1},
      [](Tape<T>&, int, const Var<T>& g, Need<T>) { return Grads<T>{neg(g), {}}; }, "neg");
}

template <typename T>
Var<T> reciprocal(const Var<T>& a) {
  Matrix<T> v = a.value().cwiseInverse();
  return a.tape->record(
      std::move(v), {a.id, -1},
      [](Tape<T>& t, int self, const Var<T>& g, Need<T>) {
        return Grads<T>{neg(mul(g, square(at(t, self)))), {}};
      },
      "reciprocal");
}

template <typename T>
Var<T> square(const Var<T>& a) {
  Matrix<T> v = a.value().array().square();
  const int ia = a.id;
  return a.tape->record(
      std::move(v), {ia, -1},
      [ia](Tape<T>& t, int, const Var<T>& g, Need<T>) {
        return Grads<T>{mul(g, scale(at(t, ia), T(2))), {}};
      },
      "square");
}

template <typename T>
Var<T> rsqrt(const Var<T>& a) {
  Matrix<T> v = a.value().array().rsqrt();
  return a.tape->record(
      std::move(v), {a.id, -1},
      [](Tape<T>& t, int self, const Var<T>& g, Need<T>) {
        Var<T> y = at(t, self);
        return Grads<T>{mul(g, scale(mul(y, square(y)), T(-0.5))), {}};
      },
      "rsqrt");
}

template <typename T>
Var<T> relu(const Var<T>& a) {
  Matrix<T> v = a.value().cwiseMax(T(0));
  const int ia = a.id;
  return a.tape->record(
      std::move(v), {ia, -1},
      [ia](Tape<T>& t, int, const Var<T>& g, Need<T>) {
        Matrix<T> mask = (t.value(ia).array() > T(0)).template cast<T>();
        return Grads<T>{mul_const(g, mask), {}};
      },
      "relu");
}

template <typename T>
Var<T> tanh(const Var<T>& a) {
  Matrix<T> v = a.value().array().tanh();
  return a.tape->record(
      std::move(v), {a.id, -1},
      [](Tape<T>& t, int self, const Var<T>& g, Need<T>) {
        Var<T> y = at(t, self);
        return Grads<T>{mul(g, add_scalar(neg(square(y)), T(1))), {}};
      },
      "tanh");
}

template <typename T>
Var<T> exp(const Var<T>& a) {
  Matrix<T> v = a.value().array().exp();
  return a.tape->record(
      std::move(v), {a.id, -1},
      [](Tape<T>& t, int self, const Var<T>& g, Need<T>) {
        return Grads<T>{mul(g, at(t, self)), {}};
      },
      "exp");
}

template <typename T>
Var<T> log(const Var<T>& a) {
  Matrix<T> v = a.value().array().log();
  const int ia = a.id;
  return a.tape->record(
      std::move(v), {ia, -1},
      [ia](Tape<T>& t, int, const Var<T>& g, Need<T>) {
        return Grads<T>{mul(g, reciprocal(at(t, ia))), {}};
      },
      "log");
}

template <typename T>
Var<T> sigmoid(const Var<T>& a) {
  Matrix<T> v = a.value().unaryExpr([](T x) {
    if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
    const T e = std::exp(x);
    return e / (T(1) + e);
  });
  return a.tape->record(
      std::move(v), {a.id, -1},
      [](Tape<T>& t, int self, const Var<T>& g, Need<T>) {
        Var<T> y = at(t, self);
        return Grads<T>{mul(g, mul(y, add_scalar(neg(y), T(1)))), {}};
      },
      "sigmoid");
}

template <typename T>
Var<T> softplus(const Var<T>& a) {
  Matrix<T> v = a.value().unaryExpr(
      [](T x) { return std::max(x, T(0)) + std::log1p(std::exp(-std::abs(x))); });
  const int ia = a.id;
  return a.tape->record(
      std::move(v), {ia, -1},
      [ia](Tape<T>& t, int, const Var<T>& g, Need<T>) {
        return Grads<T>{mul(g, sigmoid(at(t, ia))), {}};
      },
      "softplus");
}

template <typename T>
Var<T> minimum(const Var<T>& a, const Var<T>& b) {
  same_shape(a, b, "minimum");
  Matrix<T> v = a.value().cwiseMin(b.value());
  const int ia = a.id, ib = b.id;
  return a.tape->record(
      std::move(v), {ia, ib},
      [ia, ib](Tape<T>& t, int, const Var<T>& g, Need<T> need) {
        Matrix<T> take_a = (t.value(ia).array() <= t.value(ib).array()).template cast<T>();
        Grads<T> r;
        if (need[1]) r[1] = mul_const(g, Matrix<T>((T(1) - take_a.array()).matrix()));
        if (need[0]) r[0] = mul_const(g, take_a);
        return r;
      },
      "minimum");
}

template <typename T>
Var<T> clamp(const Var<T>& a, T lo, T hi) {
  if (!(lo <= hi)) throw ContractError("clamp: lo > hi");
  Matrix<T> v = a.value().cwiseMax(lo).cwiseMin(hi);
  const int ia = a.id;
  return a.tape->record(
      std::move(v), {ia, -1},
      [ia, lo, hi](Tape<T>& t, int, const Var<T>& g, Need<T>) {
        const auto& x = t.value(ia).array();
        Matrix<T> mask = ((x >= lo) && (x <= hi)).template cast<T>();
        return Grads<T>{mul_const(g, mask), {}};
      },
      "clamp");
}

template <typename T>
Var<T> mul_const(const Var<T>& a, const Matrix<T>& m) {
  if (a.rows() != m.rows() || a.cols() != m.cols())
    throw ContractError("mul_const: shape mismatch");
  Matrix<T> v = a.value().cwiseProduct(m);
  return a.tape->record(
      std::move(v), {a.id, -1},
      [m](Tape<T>&, int, const Var<T>& g, Need<T>) { return Grads<T>{mul_const(g, m), {}}; },
      "mul_const");
}

template <typename T>
Var<T> add_const(const Var<T>& a, const Matrix<T>& m) {
  if (a.rows() != m.rows() || a.cols() != m.cols())
    throw ContractError("add_const: shape mismatch");
  Matrix<T> v = a.value() + m;
  return a.tape->record(
      std::move(v), {a.id, -1},
      [](Tape<T>&, int, const Var<T>& g, Need<T>) { return Grads<T>{g, {}}; }, "add_const");
}

template <typename T>
Var<T> sum_rows(const Var<T>& a) {
  Matrix<T> v = a.value().colwise().sum();
  const Eigen::Index rows = a.rows();
  return a.tape->record(
      std::move(v), {a.id, -1},
      [rows](Tape<T>&, int, const Var<T>& g, Need<T>) {
        return Grads<T>{replicate_rows(g, rows), {}};
      },
      "sum_rows");
}

template <typename T>
Var<T> sum_cols(const Var<T>& a) {
  Matrix<T> v = a.value().rowwise().sum();
  const Eigen::Index cols = a.cols();
  return a.tape->record(
      std::move(v), {a.id, -1},
      [cols](Tape<T>&, int, const Var<T>& g, Need<T>) {
        return Grads<T>{replicate_cols(g, cols), {}};
      },
      "sum_cols");
}

template <typename T>
Var<T> replicate_rows(const Var<T>& a, Eigen::Index rows) {
  if (a.rows() != 1) throw ContractError("replicate_rows: expects a row vector");
  // Eigen's generic Replicate indexes with a modulo per element; fill directly.
  Matrix<T> v(rows, a.cols());
  for (Eigen::Index j = 0; j < v.cols(); ++j) v.col(j).setConstant(a.value()(0, j));
  return a.tape->record(
      std::move(v), {a.id, -1},
      [](Tape<T>&, int, const Var<T>& g, Need<T>) { return Grads<T>{sum_rows(g), {}}; },
      "replicate_rows");
}

template <typename T>
Var<T> replicate_cols(const Var<T>& a, Eigen::Index cols) {
  if (a.cols() != 1) throw ContractError("replicate_cols: expects a column vector");
  Matrix<T> v(a.rows(), cols);
  v.colwise() = a.value().col(0);
  return a.tape->record(
      std::move(v), {a.id, -1},
      [](Tape<T>&, int, const Var<T>& g, Need<T>) { return Grads<T>{sum_cols(g), {}}; },
      "replicate_cols");
}

template <typename T>
Var<T> broadcast_scalar(const Var<T>& a, Eigen::Index rows, Eigen::Index cols) {
  if (a.rows() != 1 || a.cols() != 1) throw ContractError("broadcast_scalar: expects 1x1");
  Matrix<T> v = Matrix<T>::Constant(rows, cols, a.value()(0, 0));
  return a.tape->record(
      std::move(v), {a.id, -1},
      [](Tape<T>&, int, const Var<T>& g, Need<T>) { return Grads<T>{sum_all(g), {}}; },
      "broadcast_scalar");
}

template <typename T>
Var<T> sum_all(const Var<T>& a) {
  Matrix<T> v(1, 1);
  v(0, 0) = a.value().sum();
  const Eigen::Index rows = a.rows(), cols = a.cols();
  return a.tape->record(
      std::move(v), {a.id, -1},
      [rows, cols](Tape<T>&, int, const Var<T>& g, Need<T>) {
        return Grads<T>{broadcast_scalar(g, rows, cols), {}};
      },
      "sum_all");
}

template <typename T>
Var<T> mean_all(const Var<T>& a) {
  return scale(sum_all(a), T(1) / static_cast<T>(a.value().size()));
}

template <typename T>
Var<T> slice_rows(const Var<T>& a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > a.rows())
    throw ContractError("slice_rows: range out of bounds");
  Matrix<T> v = a.value().middleRows(start, count);
  const Eigen::Index total = a.rows();
  return a.tape->record(
      std::move(v), {a.id, -1},
      [start, total](Tape<T>&, int, const Var<T>& g, Need<T>) {
        return Grads<T>{embed_rows(g, start, total), {}};
      },
      "slice_rows");
}

template <typename T>
Var<T> embed_rows(const Var<T>& a, Eigen::Index start, Eigen::Index total) {
  if (start < 0 || start + a.rows() > total) throw ContractError("embed_rows: out of bounds");
  Matrix<T> v = Matrix<T>::Zero(total, a.cols());
  v.middleRows(start, a.rows()) = a.value();
  const Eigen::Index count = a.rows();
  return a.tape->record(
      std::move(v), {a.id, -1},
      [start, count](Tape<T>&, int, const Var<T>& g, Need<T>) {
        return Grads<T>{slice_rows(g, start, count), {}};
      },
      "embed_rows");
}

template <typename T>
Var<T> concat_rows(const Var<T>& a, const Var<T>& b) {
  same_tape(a, b, "concat_rows");
  if (a.cols() != b.cols()) throw ContractError("concat_rows: column mismatch");
  Matrix<T> v(a.rows() + b.rows(), a.cols());
  v.topRows(a.rows()) = a.value();
  v.bottomRows(b.rows()) = b.value();
  const Eigen::Index ra = a.rows(), rb = b.rows();
  return a.tape->record(
      std::move(v), {a.id, b.id},
      [ra, rb](Tape<T>&, int, const Var<T>& g, Need<T> need) {
        Grads<T> r;
        if (need[0]) r[0] = slice_rows(g, 0, ra);
        if (need[1]) r[1] = slice_rows(g, ra, rb);
        return r;
      },
      "concat_rows");
}

template <typename T>
Var<T> detach(const Var<T>& a) {
  return a.tape->constant(a.value(), "detach");
}

template <typename T>
Var<T> layer_norm(const Var<T>& x, const Var<T>& scale_v, const Var<T>& offset, T eps) {
  return add_bias(scale_rows(standardize(x, eps), scale_v), offset);
}

template <typename T>
Var<T> gaussian_log_density(const Var<T>& x, const Var<T>& mean, const Var<T>& log_std) {
  Var<T> z = mul(sub(x, mean), exp(neg(log_std)));
  const T half_log_2pi = T(0.5) * std::log(T(2) * std::numbers::pi_v<T>);
  Var<T> per_dim = add_scalar(neg(add(scale(square(z), T(0.5)), log_std)), -half_log_2pi);
  return sum_rows(per_dim);
}

#define UNIFLORAL_AD_INSTANTIATE(T)                                                  \
  template struct Var<T>;                                                            \
  template class Tape<T>;                                                            \
  template Var<T> matmul(const Var<T>&, const Var<T>&);                              \
  template Var<T> transpose(const Var<T>&);                                          \
  template Var<T> matmul_nt(const Var<T>&, const Var<T>&);                           \
  template Var<T> matmul_tn(const Var<T>&, const Var<T>&);                           \
  template Var<T> add_bias(const Var<T>&, const Var<T>&);                            \
  template Var<T> scale_rows(const Var<T>&, const Var<T>&);                          \
  template Var<T> standardize(const Var<T>&, T);                                     \
  template Var<T> add(const Var<T>&, const Var<T>&);                                 \
  template Var<T> sub(const Var<T>&, const Var<T>&);                                 \
  template Var<T> mul(const Var<T>&, const Var<T>&);                                 \
  template Var<T> scale(const Var<T>&, T);                                           \
  template Var<T> add_scalar(const Var<T>&, T);                                      \
  template Var<T> neg(const Var<T>&);                                                \
  template Var<T> reciprocal(const Var<T>&);                                         \
  template Var<T> square(const Var<T>&);                                             \
  template Var<T> rsqrt(const Var<T>&);                                              \
  template Var<T> relu(const Var<T>&);                                               \
  template Var<T> tanh(const Var<T>&);                                               \
  template Var<T> exp(const Var<T>&);                                                \
  template Var<T> log(const Var<T>&);                                                \
  template Var<T> sigmoid(const Var<T>&);                                            \
  template Var<T> softplus(const Var<T>&);                                           \
  template Var<T> minimum(const Var<T>&, const Var<T>&);                             \
  template Var<T> clamp(const Var<T>&, T, T);                                        \
  template Var<T> mul_const(const Var<T>&, const Matrix<T>&);                        \
  template Var<T> add_const(const Var<T>&, const Matrix<T>&);                        \
  template Var<T> sum_rows(const Var<T>&);                                           \
  template Var<T> sum_cols(const Var<T>&);                                           \
  template Var<T> replicate_rows(const Var<T>&, Eigen::Index);                       \
  template Var<T> replicate_cols(const Var<T>&, Eigen::Index);                       \
  template Var<T> broadcast_scalar(const Var<T>&, Eigen::Index, Eigen::Index);       \
  template Var<T> sum_all(const Var<T>&);                                            \
  template Var<T> mean_all(const Var<T>&);                                           \
  template Var<T> slice_rows(const Var<T>&, Eigen::Index, Eigen::Index);             \
  template Var<T> embed_rows(const Var<T>&, Eigen::Index, Eigen::Index);             \
  template Var<T> concat_rows(const Var<T>&, const Var<T>&);                         \
  template Var<T> detach(const Var<T>&);                                             \
  template Var<T> layer_norm(const Var<T>&, const Var<T>&, const Var<T>&, T);        \
  template Var<T> gaussian_log_density(const Var<T>&, const Var<T>&, const Var<T>&);

UNIFLORAL_AD_INSTANTIATE(float)
UNIFLORAL_AD_INSTANTIATE(double)

}  // namespace unifloral::ad
