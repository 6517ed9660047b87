#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numeric>
#include <sstream>

#include "unifloral/numerics/adam.hpp"
#include "unifloral/numerics/autodiff.hpp"
#include "unifloral/numerics/mlp.hpp"
#include "unifloral/numerics/param_io.hpp"
#include "unifloral/numerics/rng.hpp"

using namespace unifloral;
using ad::Matrix;

namespace {

std::vector<double> random_vec(std::size_t n, Rng& rng, double s = 0.5) {
  std::vector<double> v(n);
  for (auto& x : v) x = s * rng.normal();
  return v;
}

// Straight-line re-evaluation of the layer recurrence, written independently
// of mlp_forward_batch (explicit loops, no Eigen).
std::vector<double> reference_forward(const MlpArch& a, const std::vector<double>& p,
                                      std::vector<double> x) {
  std::size_t off = 0;
  for (std::size_t l = 0; l < a.num_layers(); ++l) {
    const int in = a.layer_in(l), out = a.layer_out(l);
    std::vector<double> z(static_cast<std::size_t>(out), 0.0);
    for (int i = 0; i < out; ++i) {
      double acc = 0;
      for (int j = 0; j < in; ++j) acc += p[off + static_cast<std::size_t>(i * in + j)] * x[static_cast<std::size_t>(j)];
      z[static_cast<std::size_t>(i)] = acc;
    }
    off += static_cast<std::size_t>(out * in);
    for (int i = 0; i < out; ++i) z[static_cast<std::size_t>(i)] += p[off + static_cast<std::size_t>(i)];
    off += static_cast<std::size_t>(out);
    const bool hidden = l + 1 < a.num_layers();
    if (hidden && a.use_layer_norm) {
      double mu = 0, var = 0;
      for (double v : z) mu += v;
      mu /= out;
      for (double v : z) var += (v - mu) * (v - mu);
      var /= out;
      for (int i = 0; i < out; ++i) {
        const double n = (z[static_cast<std::size_t>(i)] - mu) / std::sqrt(var + 1e-5);
        z[static_cast<std::size_t>(i)] = n * p[off + static_cast<std::size_t>(i)] + p[off + static_cast<std::size_t>(out + i)];
      }
      off += static_cast<std::size_t>(2 * out);
    }
    for (auto& v : z) {
      if (hidden) v = a.activation == Activation::relu ? std::max(0.0, v) : std::tanh(v);
      else if (a.final_activation == FinalActivation::tanh) v = std::tanh(v);
    }
    x = z;
  }
  return x;
}

MlpArch random_arch(Rng& rng, bool ln) {
  MlpArch a;
  a.input_dim = 1 + static_cast<int>(rng.index(5));
  const std::size_t layers = 1 + rng.index(3);
  for (std::size_t i = 0; i < layers; ++i) a.hidden_widths.push_back(2 + static_cast<int>(rng.index(7)));
  a.output_dim = 1 + static_cast<int>(rng.index(4));
  a.activation = rng.uniform() < 0.5 ? Activation::relu : Activation::tanh;
  a.use_layer_norm = ln;
  a.final_activation = rng.uniform() < 0.5 ? FinalActivation::none : FinalActivation::tanh;
  return a;
}

bool grad_close(double analytic, double numeric, double rtol) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-2});
  return std::abs(analytic - numeric) / denom <= rtol;
}

}  // namespace

TEST_CASE("mlp_forward: zero parameters give a zero output") {
  MlpArch a{3, {4, 4}, 2, Activation::relu, false, FinalActivation::none};
  std::vector<float> p(a.param_count(), 0.0f);
  std::vector<float> x{0.3f, -1.0f, 2.0f};
  auto y = mlp_forward<float>(a, p, x);
  CHECK(y == std::vector<float>{0.0f, 0.0f});
}

TEST_CASE("mlp_forward: single identity layer is the identity map") {
  MlpArch a{3, {}, 3, Activation::relu, false, FinalActivation::none};
  CHECK_THROWS_AS(a.validate(true), ContractError);
  std::vector<double> p(a.param_count(), 0.0);
  for (int i = 0; i < 3; ++i) p[static_cast<std::size_t>(i * 3 + i)] = 1.0;
  std::vector<double> x{0.25, -1.5, 7.0};
  CHECK(mlp_forward<double>(a, p, x) == x);
}

TEST_CASE("mlp_forward: matches an independent re-evaluation of the recurrence") {
  Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    MlpArch a = random_arch(rng, trial % 2 == 1);
    auto p = random_vec(a.param_count(), rng);
    auto x = random_vec(static_cast<std::size_t>(a.input_dim), rng, 1.0);
    auto y = mlp_forward<double>(a, p, x);
    auto ref = reference_forward(a, p, x);
    REQUIRE(y.size() == ref.size());
    for (std::size_t i = 0; i < y.size(); ++i) CHECK(y[i] == doctest::Approx(ref[i]).epsilon(1e-12));
  }
}

TEST_CASE("mlp_forward: dimension mismatch is a contract violation") {
  MlpArch a{3, {4}, 2, Activation::relu, false, FinalActivation::none};
  std::vector<float> p(a.param_count(), 0.1f);
  std::vector<float> bad{1.0f, 2.0f};
  CHECK_THROWS_AS(mlp_forward<float>(a, p, bad), ContractError);
  std::vector<float> short_p(3, 0.0f);
  std::vector<float> x{1.0f, 2.0f, 3.0f};
  CHECK_THROWS_AS(mlp_forward<float>(a, short_p, x), ContractError);
}

TEST_CASE("mlp_forward: bit-identical on repeat and tape path agrees") {
  Rng rng(3);
  MlpArch a{5, {8, 8}, 3, Activation::relu, true, FinalActivation::tanh};
  ParamVector p = init_params(a, rng);
  Matrix<float> x = Matrix<float>::Random(5, 7);
  auto y1 = mlp_forward_batch<float>(a, p, x);
  auto y2 = mlp_forward_batch<float>(a, p, x);
  CHECK((y1.array() == y2.array()).all());
  ad::Tape<float> tape;
  auto vars = bind_params<float>(tape, a, p, false);
  auto y3 = mlp_apply(a, vars, tape.constant(x));
  CHECK((y3.value() - y1).cwiseAbs().maxCoeff() < 1e-5f);
}

TEST_CASE("init_params: orthogonal hidden weights with gain sqrt(2), zero biases") {
  Rng rng(5);
  MlpArch a{4, {6}, 2, Activation::relu, true, FinalActivation::none};
  ParamVector p = init_params(a, rng);
  REQUIRE(p.size() == a.param_count());
  Eigen::Map<Eigen::Matrix<float, 6, 4, Eigen::RowMajor>> w(p.data());
  Eigen::Matrix4f gram = w.transpose() * w;
  CHECK((gram - 2.0f * Eigen::Matrix4f::Identity()).cwiseAbs().maxCoeff() < 1e-5f);
  for (int i = 0; i < 6; ++i) CHECK(p[24 + static_cast<std::size_t>(i)] == 0.0f);
  for (int i = 0; i < 6; ++i) CHECK(p[30 + static_cast<std::size_t>(i)] == 1.0f);  // LN scale
}

TEST_CASE("loss_grad: identically zero loss has a zero gradient") {
  MlpArch a{3, {4}, 2, Activation::relu, false, FinalActivation::none};
  Rng rng(1);
  auto p = random_vec(a.param_count(), rng);
  auto [v, g] = loss_grad<double>(a, p, [](ad::Tape<double>& t, const MlpVars<double>&) {
    return t.constant(Matrix<double>::Zero(1, 1));
  });
  CHECK(v == 0.0);
  CHECK(std::all_of(g.begin(), g.end(), [](double x) { return x == 0.0; }));
}

TEST_CASE("loss_grad: only output biases reach the loss for a zero input") {
  MlpArch a{3, {4}, 2, Activation::relu, false, FinalActivation::none};
  std::vector<double> p(a.param_count(), 0.0);
  // output-layer bias = (0.5, -1.5)
  const std::size_t out_bias = a.param_count() - 2;
  p[out_bias] = 0.5;
  p[out_bias + 1] = -1.5;
  const int batch = 4;
  auto [v, g] = loss_grad<double>(a, p, [&](ad::Tape<double>& t, const MlpVars<double>& vars) {
    auto y = mlp_apply(a, vars, t.constant(Matrix<double>::Zero(3, batch)));
    return ad::sum_all(ad::square(y));
  });
  CHECK(v == doctest::Approx(batch * (0.25 + 2.25)));
  for (std::size_t i = 0; i < out_bias; ++i) CHECK(g[i] == 0.0);
  CHECK(g[out_bias] == doctest::Approx(2.0 * batch * 0.5));
  CHECK(g[out_bias + 1] == doctest::Approx(2.0 * batch * -1.5));
}

TEST_CASE("loss_grad: matches central finite differences on random small nets") {
  Rng rng(2024);
  for (int trial = 0; trial < 20; ++trial) {
    MlpArch a = random_arch(rng, trial % 3 == 0);
    const int batch = 4;
    auto p = random_vec(a.param_count(), rng);
    Matrix<double> x(a.input_dim, batch);
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.normal();
    Matrix<double> target(a.output_dim, batch);
    for (Eigen::Index i = 0; i < target.size(); ++i) target.data()[i] = rng.normal();
    auto loss = [&](ad::Tape<double>& t, const MlpVars<double>& vars) {
      auto y = mlp_apply(a, vars, t.constant(x));
      auto e = ad::sub(y, t.constant(target));
      // mix of primitives: square, exp, log, min, mean
      auto sq = ad::mean_all(ad::square(e));
      auto ex = ad::mean_all(ad::log(ad::add_scalar(ad::exp(y), 1.0)));
      auto mn = ad::mean_all(ad::minimum(y, ad::scale(y, 0.5)));
      return ad::add(ad::add(sq, ex), mn);
    };
    auto [v, g] = loss_grad<double>(a, p, loss);
    const double h = 1e-5;
    for (std::size_t i = 0; i < p.size(); ++i) {
      auto pp = p, pm = p;
      pp[i] += h;
      pm[i] -= h;
      const double fp = loss_grad<double>(a, pp, loss).first;
      const double fm = loss_grad<double>(a, pm, loss).first;
      const double fd = (fp - fm) / (2 * h);
      INFO("trial " << trial << " coord " << i);
      CHECK(grad_close(g[i], fd, 1e-4));
    }
  }
}

TEST_CASE("autodiff: second-order gradients through input gradients") {
  // f(w, x) = sum(tanh(w * x)); d/dw <df/dx, c> checked by finite differences.
  Rng rng(9);
  Matrix<double> w0(3, 2), x0(2, 5), c(2, 5);
  for (auto* m : {&w0, &x0, &c})
    for (Eigen::Index i = 0; i < m->size(); ++i) m->data()[i] = rng.normal();
  auto inner = [&](const Matrix<double>& w, Matrix<double>* grad_w) {
    ad::Tape<double> t;
    auto wv = t.leaf(w);
    auto xv = t.leaf(x0);
    auto f = ad::sum_all(ad::tanh(ad::matmul(wv, xv)));
    std::array<ad::Var<double>, 1> wrt{xv};
    auto gx = t.gradients(f, wrt, true)[0];
    auto dir = ad::sum_all(ad::mul_const(gx, c));
    if (grad_w) {
      std::array<ad::Var<double>, 1> ww{wv};
      *grad_w = t.gradients(dir, ww)[0].value();
    }
    return dir.scalar();
  };
  Matrix<double> gw;
  inner(w0, &gw);
  for (Eigen::Index i = 0; i < w0.size(); ++i) {
    Matrix<double> wp = w0, wm = w0;
    wp.data()[i] += 1e-5;
    wm.data()[i] -= 1e-5;
    const double fd = (inner(wp, nullptr) - inner(wm, nullptr)) / 2e-5;
    CHECK(grad_close(gw.data()[i], fd, 1e-5));
  }
}

TEST_CASE("autodiff: second-order gradients through a layer-normalized MLP") {
  // d/dparams <d(sum c1 * f(x))/dx, c2> for a tanh MLP with layer norm.
  Rng rng(21);
  MlpArch a;
  a.input_dim = 3;
  a.hidden_widths = {4, 5};
  a.output_dim = 2;
  a.activation = Activation::tanh;
  a.use_layer_norm = true;
  auto p0 = random_vec(a.param_count(), rng);
  Matrix<double> x0(3, 4), c1(2, 4), c2(3, 4);
  for (auto* m : {&x0, &c1, &c2})
    for (Eigen::Index i = 0; i < m->size(); ++i) m->data()[i] = rng.normal();
  auto inner = [&](const std::vector<double>& p, std::vector<double>* grad) {
    ad::Tape<double> t;
    auto vars = bind_params<double>(t, a, p, true);
    auto xv = t.leaf(x0);
    auto f = ad::sum_all(ad::mul_const(mlp_apply(a, vars, xv), c1));
    std::array<ad::Var<double>, 1> wrt{xv};
    auto gx = t.gradients(f, wrt, true)[0];
    auto dir = ad::sum_all(ad::mul_const(gx, c2));
    if (grad) {
      auto g = t.gradients(dir, vars.leaves);
      *grad = flatten_grads<double>(a, g);
    }
    return dir.scalar();
  };
  std::vector<double> g;
  inner(p0, &g);
  for (std::size_t i = 0; i < p0.size(); ++i) {
    auto pp = p0, pm = p0;
    pp[i] += 1e-5;
    pm[i] -= 1e-5;
    const double fd = (inner(pp, nullptr) - inner(pm, nullptr)) / 2e-5;
    INFO("coord " << i);
    CHECK(grad_close(g[i], fd, 1e-5));
  }
}

TEST_CASE("autodiff: non-finite intermediate names the operation") {
  ad::Tape<double> t;
  auto x = t.leaf(Matrix<double>::Constant(1, 1, -1.0));
  try {
    (void)ad::log(x);
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(e.op() == "log");
  }
}

TEST_CASE("adam_step: zero gradient on a fresh state leaves parameters unchanged") {
  std::vector<float> p{1.0f, -2.0f, 3.0f};
  auto s = AdamState::create(3, 1e-3);
  std::vector<float> g(3, 0.0f);
  adam_step(s, p, g);
  CHECK(p == std::vector<float>{1.0f, -2.0f, 3.0f});
  CHECK(s.first_moment == std::vector<float>(3, 0.0f));
  CHECK(s.second_moment == std::vector<float>(3, 0.0f));
  CHECK(s.step_count == 1);
}

TEST_CASE("adam_step: cosine endpoint has zero learning rate") {
  auto s = AdamState::create(2, 1e-2, LrSchedule::cosine, 10);
  s.step_count = 10;
  CHECK(s.effective_lr() == doctest::Approx(0.0).epsilon(1e-15));
  std::vector<float> p{0.5f, 0.5f};
  std::vector<float> g{1.0f, -1.0f};
  adam_step(s, p, g);
  CHECK(p == std::vector<float>{0.5f, 0.5f});
}

TEST_CASE("adam_step: first step matches the hand-evaluated formula") {
  // m1 = 0.1 g, v1 = 0.001 g^2; m_hat = g, v_hat = g^2;
  // delta = lr * 1 / (1 + 1e-8) for g = 1.
  std::vector<float> p(4, 0.25f);
  auto s = AdamState::create(4, 1e-3);
  std::vector<float> g(4, 1.0f);
  adam_step(s, p, g);
  const double expected = 0.25 - 1e-3 / (1.0 + 1e-8);
  for (float v : p) CHECK(v == doctest::Approx(expected).epsilon(1e-7));
  CHECK(s.first_moment[0] == doctest::Approx(0.1f));
  CHECK(s.second_moment[0] == doctest::Approx(0.001f));
}

TEST_CASE("adam_step: rejects a non-finite gradient") {
  std::vector<float> p(2, 0.0f);
  auto s = AdamState::create(2, 1e-3);
  std::vector<float> g{1.0f, std::nanf("")};
  CHECK_THROWS_AS(adam_step(s, p, g), NumericError);
}

TEST_CASE("adam_step: coordinate permutation commutes with the update") {
  Rng rng(4);
  const std::size_t n = 16;
  std::vector<float> p(n), perm_p(n);
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  for (std::size_t i = n; i-- > 1;) std::swap(perm[i], perm[rng.index(i + 1)]);
  for (auto& v : p) v = static_cast<float>(rng.normal());
  for (std::size_t i = 0; i < n; ++i) perm_p[i] = p[perm[i]];
  auto s = AdamState::create(n, 3e-3), sp = AdamState::create(n, 3e-3);
  for (int step = 0; step < 5; ++step) {
    std::vector<float> g(n), pg(n);
    for (auto& v : g) v = static_cast<float>(rng.normal());
    for (std::size_t i = 0; i < n; ++i) pg[i] = g[perm[i]];
    adam_step(s, p, g);
    adam_step(sp, perm_p, pg);
  }
  for (std::size_t i = 0; i < n; ++i) {
    CHECK(perm_p[i] == p[perm[i]]);
    CHECK(sp.second_moment[i] == s.second_moment[perm[i]]);
  }
}

TEST_CASE("cosine schedule is non-increasing") {
  auto s = AdamState::create(1, 1.0, LrSchedule::cosine, 100);
  double prev = s.effective_lr();
  for (int i = 1; i <= 120; ++i) {
    s.step_count = i;
    const double lr = s.effective_lr();
    CHECK(lr <= prev);
    CHECK(lr >= 0.0);
    prev = lr;
  }
}

TEST_CASE("polyak_update") {
  std::vector<float> target{0.0f, 2.0f}, online{1.0f, 4.0f};
  CHECK(polyak_update(target, online, 0.0) == target);
  CHECK(polyak_update(target, online, 1.0) == online);
  auto r = polyak_update(std::vector<float>{0.0f}, std::vector<float>{1.0f}, 0.005);
  CHECK(r[0] == doctest::Approx(0.005f));
  CHECK_THROWS_AS(polyak_update(target, online, 1.5), ContractError);
  CHECK_THROWS_AS(polyak_update(target, online, -0.1), ContractError);
}

TEST_CASE("parameter files round-trip and reject corruption") {
  Rng rng(8);
  MlpArch a{3, {5}, 2, Activation::tanh, true, FinalActivation::tanh};
  ParamVector p = init_params(a, rng);
  std::stringstream ss;
  write_params(ss, a, p);
  const std::string bytes = ss.str();
  std::istringstream in(bytes);
  auto loaded = read_params(in);
  CHECK(loaded.arch == a);
  CHECK(loaded.params == p);

  std::string bad = bytes;
  bad[0] = 'X';
  std::istringstream bad_in(bad);
  CHECK_THROWS_AS(read_params(bad_in), FormatError);
  std::istringstream short_in(bytes.substr(0, bytes.size() - 3));
  CHECK_THROWS_AS(read_params(short_in), TruncatedError);
}

TEST_CASE("rng: streams are reproducible and index is in range") {
  Rng a(42, 7), b(42, 7), c(42, 8);
  CHECK(a.next_u64() == b.next_u64());
  CHECK(a.next_u64() != c.next_u64());
  Rng r(1);
  for (int i = 0; i < 1000; ++i) CHECK(r.index(7) < 7u);
  Rng s(5);
  const std::string st = s.state();
  const double x = s.normal();
  s.set_state(st);
  CHECK(s.normal() == x);
}
